"""
Experiment configuration: one TOML file validated into pydantic models.
"""
import hashlib
import json
import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.errors import ConfigError
from src.forward_solver import BornConfig
from src.green_function import ModelParams
from src.grid import Grid, Region, direction_set
from src.random_source import BumpProfile, SourceSpec
from src.source_recovery import RecoveryConfig

logger = logging.getLogger(__name__)


def default_threads() -> int:
    return max(1, int(os.environ.get("FRACHELM_THREADS", "1")))


def default_log_level() -> str:
    return os.environ.get("FRACHELM_LOG_LEVEL", "INFO").upper()


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelBlock(_Block):
    d: int
    alpha: float
    m: float


class GridBlock(_Block):
    """Centred box [-length/2, length/2)^d with n nodes per axis."""

    n: int = Field(gt=1)
    length: float = Field(gt=0)


class RegionBlock(_Block):
    kind: Literal["box", "ball"] = "ball"
    center: Tuple[float, ...]
    radius: Optional[float] = None
    half_widths: Optional[Tuple[float, ...]] = None

    def region(self) -> Region:
        return Region(kind=self.kind, center=self.center, radius=self.radius, half_widths=self.half_widths)


class SourceBlock(_Block):
    domain: RegionBlock
    mu_c: List[BumpProfile]
    mu_r: List[BumpProfile] = []


class PotentialBlock(_Block):
    domain: RegionBlock
    profiles: List[BumpProfile] = []
    phase: float = 0.0


class SweepBlock(_Block):
    K_values: Tuple[float, ...] = (32.0, 64.0, 128.0)
    Nk: int = 256
    tau_grid: Tuple[float, ...] = (0.0,)
    direction_count: int = 2
    seed: int = 0


class GreenEvalBlock(_Block):
    d: Optional[int] = None
    alpha: Optional[float] = None
    wavenumbers: List[float] = [1.0]
    radii: List[float] = []
    compare_oracle: bool = True
    asymptotic_only: bool = False


class SamplingBlock(_Block):
    seed: int = 0
    monte_carlo_seeds: int = 0
    pairs: List[Tuple[Tuple[float, ...], Tuple[float, ...]]] = []


class OutputBlock(_Block):
    directory: str = "results"


class ExperimentConfig(_Block):
    model: ModelBlock
    grid: GridBlock
    source: SourceBlock
    potential: Optional[PotentialBlock] = None
    sweep: SweepBlock = SweepBlock()
    solver: BornConfig = BornConfig()
    green_eval: GreenEvalBlock = GreenEvalBlock()
    sampling: SamplingBlock = SamplingBlock()
    output: OutputBlock = OutputBlock()
    threads: Optional[int] = None

    @model_validator(mode="after")
    def _check_consistency(self) -> "ExperimentConfig":
        d = self.model.d
        ModelParams(d=d, alpha=self.model.alpha, m=self.model.m)
        regions = [self.source.domain] + ([self.potential.domain] if self.potential else [])
        profiles = self.source.mu_c + self.source.mu_r + (self.potential.profiles if self.potential else [])
        if any(len(r.center) != d for r in regions) or any(len(b.center) != d for b in profiles):
            raise ValueError(f"all centres must have {d} coordinates")
        nyquist = np.pi * self.grid.n / self.grid.length
        limit = 2 * self.k_max + max(self.sweep.tau_grid)
        if nyquist <= limit:
            raise ValueError(f"grid Nyquist {nyquist:g} must exceed 2 k_max + tau_max = {limit:g}")
        return self

    @property
    def k_max(self) -> float:
        return 2 * max(self.sweep.K_values) + max(self.sweep.tau_grid)

    def model_params(self, k: float = 1.0) -> ModelParams:
        return ModelParams(d=self.model.d, alpha=self.model.alpha, m=self.model.m, k=k)

    def build_grid(self) -> Grid:
        return Grid.centered(self.model.d, self.grid.n, self.grid.length)

    def source_spec(self) -> SourceSpec:
        grid = self.build_grid()
        mu_c = sum((b.symbol(grid) for b in self.source.mu_c), np.zeros(grid.shape))
        mu_r = sum((b.symbol(grid) for b in self.source.mu_r), np.zeros(grid.shape))
        q, domain_u = None, None
        if self.potential is not None:
            domain_u = self.potential.domain.region()
            q = sum((b.potential(grid, self.potential.phase) for b in self.potential.profiles),
                    np.zeros(grid.shape, dtype=complex))
        return SourceSpec(grid=grid, mu_c=mu_c, mu_r=mu_r, m=self.model.m,
                          domain_d=self.source.domain.region(), domain_u=domain_u, q=q)

    def recovery_config(self) -> RecoveryConfig:
        return RecoveryConfig(d=self.model.d, alpha=self.model.alpha, m=self.model.m,
                              K_values=self.sweep.K_values, Nk=self.sweep.Nk, tau_grid=self.sweep.tau_grid)

    def directions(self) -> np.ndarray:
        return direction_set(self.model.d, self.sweep.direction_count)

    def config_hash(self, seed: Optional[int] = None) -> str:
        """SHA-256 of the canonical JSON dump plus the effective seed."""
        payload = json.dumps({"config": self.model_dump(mode="json"), "seed": seed}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        # the message carries "(at line L, column C)"
        raise ConfigError(f"invalid TOML: {e}", diagnostics=[str(e)]) from e
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        diagnostics = [f"{'.'.join(str(part) for part in err['loc']) or '<root>'}: {err['msg']}"
                       for err in e.errors()]
        raise ConfigError("configuration failed validation", diagnostics=diagnostics) from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}", diagnostics=[str(e)]) from e
    config = parse_config(text)
    logger.info("Loaded config %s (hash %s)", path, config.config_hash()[:12])
    return config
