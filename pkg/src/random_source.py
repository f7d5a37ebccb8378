"""
Complex Gaussian random sources with prescribed principal symbols.

f = phi1 X + i phi2 Y with X, Y independent real stationary fields whose
spectral density is |xi|^{-m} on the grid's frequency lattice.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from src.errors import DomainError, InvalidGeometryError, InvalidSpecError
from src.green_function import ModelParams
from src.grid import Grid, Region, region_distance

logger = logging.getLogger(__name__)


def bump_profile(grid: Grid, region: Region) -> np.ndarray:
    """Smooth bump exp(1 - 1/(1 - rho^2)) on the ellipsoid inscribed in region, 1 at the centre."""
    offset = grid.points() - np.asarray(region.center)
    scale = np.asarray(region.half_widths) if region.kind == "box" else region.radius
    rho2 = np.sum((offset / scale) ** 2, axis=-1)
    g = np.zeros_like(rho2)
    inside = rho2 < 1
    g[inside] = np.exp(1 - 1 / (1 - rho2[inside]))
    return g.reshape(grid.shape)


def squared_bump(grid: Grid, region: Region, amplitude: float = 1.0) -> np.ndarray:
    """mu = amplitude * g^2, so sqrt(mu) is smooth."""
    return amplitude * bump_profile(grid, region) ** 2


class BumpProfile(BaseModel):
    """Named bump primitive: a region and an amplitude."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["box", "ball"] = "ball"
    center: Tuple[float, ...]
    radius: Optional[float] = None
    half_widths: Optional[Tuple[float, ...]] = None
    amplitude: float = 1.0

    @field_validator("amplitude")
    @classmethod
    def _check_amplitude(cls, value: float) -> float:
        if value < 0:
            raise ValueError("amplitude must be non-negative")
        return value

    def region(self) -> Region:
        return Region(kind=self.kind, center=self.center, radius=self.radius, half_widths=self.half_widths)

    def symbol(self, grid: Grid) -> np.ndarray:
        """Squared bump amplitude * g^2 (a source strength mu)."""
        return squared_bump(grid, self.region(), self.amplitude)

    def potential(self, grid: Grid, phase: float = 0.0) -> np.ndarray:
        """Plain bump amplitude * e^{i phase} * g (a potential q)."""
        return self.amplitude * np.exp(1j * phase) * bump_profile(grid, self.region())


def derive_envelopes(mu_c: np.ndarray, mu_r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Envelopes phi1 = sqrt((mu_c + mu_r)/2), phi2 = sqrt((mu_c - mu_r)/2).

    Raises:
        InvalidSpecError: mu_r < 0 or mu_r > mu_c somewhere
    """
    mu_c = np.asarray(mu_c, dtype=float)
    mu_r = np.asarray(mu_r, dtype=float)
    slack = 1e-14 * max(float(np.max(np.abs(mu_c), initial=0.0)), 1.0)
    if np.any(mu_r < -slack):
        raise InvalidSpecError("mu_r must be non-negative")
    if np.any(mu_r > mu_c + slack):
        raise InvalidSpecError("mu_r exceeds mu_c at some grid point")
    phi1 = np.sqrt(np.clip((mu_c + mu_r) / 2, 0.0, None))
    phi2 = np.sqrt(np.clip((mu_c - mu_r) / 2, 0.0, None))
    return phi1, phi2


@dataclass
class SourceSpec:
    """Source symbols on a grid, the source domain D and the optional potential in U."""

    grid: Grid
    mu_c: np.ndarray
    mu_r: np.ndarray
    m: float
    domain_d: Region
    domain_u: Optional[Region] = None
    q: Optional[np.ndarray] = None
    phi1: np.ndarray = field(init=False, repr=False)
    phi2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.mu_c = np.asarray(self.mu_c, dtype=float)
        self.mu_r = np.asarray(self.mu_r, dtype=float)
        if self.mu_c.shape != self.grid.shape or self.mu_r.shape != self.grid.shape:
            raise InvalidSpecError("mu_c and mu_r must live on the grid")
        if self.m <= 0:
            raise InvalidSpecError(f"m must be positive, got {self.m}")
        if len(self.domain_d.center) != self.grid.d:
            raise InvalidSpecError("D and the grid have different dimensions")
        self.phi1, self.phi2 = derive_envelopes(self.mu_c, self.mu_r)

        inside_d = self.domain_d.mask(self.grid, margin=self.grid.spacing / 2)
        if np.any((self.mu_c != 0) & ~inside_d):
            raise InvalidSpecError("mu_c is not supported in D")
        if self.q is not None:
            self.q = np.asarray(self.q, dtype=complex)
            if self.q.shape != self.grid.shape:
                raise InvalidSpecError("q must live on the grid")
            if self.domain_u is None:
                raise InvalidSpecError("a potential needs its domain U")
            inside_u = self.domain_u.mask(self.grid, margin=self.grid.spacing / 2)
            if np.any((self.q != 0) & ~inside_u):
                raise InvalidSpecError("q is not supported in U")
        if self.domain_u is not None and region_distance(self.domain_d, self.domain_u) <= 0:
            raise InvalidGeometryError("D and U must be at positive distance")

    @property
    def d(self) -> int:
        return self.grid.d


@dataclass
class FieldRealization:
    samples: np.ndarray
    seed: int
    spectral_floor: float


def spectral_density(grid: Grid, m: float) -> np.ndarray:
    """|xi|^{-m} on the frequency lattice with the zero mode removed."""
    xi = grid.frequency_norm()
    density = np.zeros_like(xi)
    nonzero = xi > 0
    density[nonzero] = xi[nonzero] ** (-m)
    return density


def lattice_covariance(grid: Grid, m: float) -> np.ndarray:
    """
    Lattice covariance C_m of the stationary factor, indexed by offset in FFT order.

    C_m(j h) = (1/(N h^d)) sum_xi |xi|^{-m} e^{i xi . j h}, the periodic analogue of
    (2 pi)^{-d} int e^{i x . xi} |xi|^{-m} dxi.
    """
    return np.fft.ifftn(spectral_density(grid, m)).real / grid.cell_volume


def _stationary_fields(grid: Grid, m: float, rng: np.random.Generator) -> np.ndarray:
    amplitude = np.sqrt(spectral_density(grid, m) / grid.cell_volume)
    white = rng.standard_normal((2, *grid.shape))
    axes = tuple(range(1, grid.d + 1))
    return np.fft.ifftn(amplitude * np.fft.fftn(white, axes=axes), axes=axes).real


def sample_field(spec: SourceSpec, seed: int) -> FieldRealization:
    """
    Draw one realization f = phi1 X + i phi2 Y.

    Args:
        spec: validated source specification
        seed: integer seed; the same seed gives a bitwise-identical field

    Returns:
        FieldRealization on spec.grid
    """
    rng = np.random.default_rng(seed)
    x_field, y_field = _stationary_fields(spec.grid, spec.m, rng)
    samples = spec.phi1 * x_field + 1j * spec.phi2 * y_field
    floor = 2 * math.pi / max(spec.grid.lengths)
    return FieldRealization(samples=samples, seed=int(seed), spectral_floor=floor)


def kernel_eval(eta: str, spec: SourceSpec, x, y, principal: bool = False) -> complex:
    """
    Covariance ("c") or relation ("r") kernel of the sampler between grid nodes x and y.

    By default returns the sampler-exact kernel (phi1(x) phi1(y) +/- phi2(x) phi2(y)) C_m(x - y);
    principal=True returns mu^eta(x) C_m(x - y).
    """
    if eta not in ("c", "r"):
        raise ValueError(f"eta must be 'c' or 'r', got {eta!r}")
    ix = spec.grid.nearest_index(x)
    iy = spec.grid.nearest_index(y)
    if ix == iy and spec.m < spec.d:
        raise DomainError("kernel is singular on the diagonal for m < d")
    offset = tuple((a - b) % n for a, b, n in zip(ix, iy, spec.grid.shape))
    stationary = lattice_covariance(spec.grid, spec.m)[offset]
    if principal:
        mu = spec.mu_c if eta == "c" else spec.mu_r
        return complex(mu[ix] * stationary)
    sign = 1.0 if eta == "c" else -1.0
    envelope = spec.phi1[ix] * spec.phi1[iy] + sign * spec.phi2[ix] * spec.phi2[iy]
    return complex(envelope * stationary)


def smoothness_order(q: np.ndarray, grid: Grid, tail_fraction: float = 0.5, floor: float = 1e-12,
                     max_order: int = 8, shells: int = 16) -> int:
    """
    Grid differentiability estimate of q from the decay of its spectral envelope.

    Returns max_order when the spectrum above tail_fraction * Nyquist is below floor
    (resolved to round-off), otherwise floor(beta - d/2) for the fitted envelope decay
    |q^| ~ |xi|^{-beta}, clipped to [0, max_order].
    """
    spectrum = np.abs(np.fft.fftn(q))
    peak = float(spectrum.max(initial=0.0))
    if peak == 0:
        return max_order
    xi = grid.frequency_norm()
    cut = tail_fraction * grid.nyquist
    if np.max(spectrum[xi > cut], initial=0.0) <= floor * peak:
        return max_order

    edges = np.geomspace(0.05 * grid.nyquist, cut, shells + 1)
    centres, envelope = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        shell = (xi >= lo) & (xi < hi)
        if np.any(shell):
            centres.append(np.sqrt(lo * hi))
            envelope.append(max(float(spectrum[shell].max()), floor * peak))
    if len(centres) < 2:
        return 0
    slope = np.polyfit(np.log(centres), np.log(envelope), 1)[0]
    return int(np.clip(np.floor(-slope - grid.d / 2), 0, max_order))


def required_smoothness(d: int, alpha: float, m: float) -> int:
    """N_alpha: 0, ceil(5/2 + m - 2 alpha), ceil(3 + m/2) for d = 1, 2, 3."""
    if d == 1:
        return 0
    if d == 2:
        return math.ceil(2.5 + m - 2 * alpha)
    return math.ceil(3 + m / 2)


class AssumptionValidator:
    """Checks a model and source against the admissibility conditions of the inverse problem."""

    def __init__(self, spectral_floor: float = 1e-12):
        self.spectral_floor = spectral_floor

    def validate_assumption(self, p: ModelParams, spec: SourceSpec, k_max: Optional[float] = None,
                            tau_max: float = 0.0) -> Tuple[bool, str, Dict]:
        """
        Validate admissibility of (p, spec).

        Conditions with severity "warning" are heuristics: they are reported
        and logged but do not fail the validation.

        Args:
            p: model parameters (p.m is ignored, spec.m is used)
            spec: source specification
            k_max: largest wavenumber of the intended sweep, for the Nyquist check
            tau_max: largest frequency shift, for the Nyquist check

        Returns:
            (is_valid, message listing failed conditions, per-condition report)
        """
        report = {}
        d, alpha, m = p.d, p.alpha, spec.m
        m_crit = ModelParams(d=d, alpha=alpha, m=m).m_critical
        a_crit = ModelParams(d=d, alpha=alpha).alpha_critical

        report["m_range"] = self._entry(m_crit < m < d, f"m = {m} must lie in ({m_crit:g}, {d})")
        report["alpha_range"] = self._entry(alpha > a_crit, f"alpha = {alpha} must exceed {a_crit:g}")
        report["direct_m_range"] = self._entry(
            d - 2 * alpha < m < d, f"m = {m} should lie in ({d - 2 * alpha:g}, {d}) for the direct problem",
            severity="warning")
        report["source_support"] = self._entry(True, "mu_c, mu_r supported in D")

        if spec.domain_u is not None:
            gap = region_distance(spec.domain_d, spec.domain_u)
            report["separation"] = self._entry(gap > 0, f"dist(D, U) = {gap:g}")
        else:
            report["separation"] = self._entry(True, "no potential domain")

        if spec.q is not None and np.any(spec.q != 0):
            needed = required_smoothness(d, alpha, m)
            found = smoothness_order(spec.q, spec.grid, floor=self.spectral_floor)
            report["potential_smoothness"] = self._entry(
                found >= needed, f"grid smoothness order {found}, need N_alpha = {needed}", severity="warning")
            report["potential_smoothness"]["required"] = needed
        else:
            report["potential_smoothness"] = self._entry(True, "no potential")

        if k_max is not None:
            limit = 2 * k_max + tau_max
            report["nyquist"] = self._entry(spec.grid.nyquist > limit,
                                            f"Nyquist {spec.grid.nyquist:g} must exceed {limit:g}")

        failures, warnings = [], []
        for name, entry in report.items():
            if not entry["passed"]:
                target = failures if entry["severity"] == "error" else warnings
                target.append(f"{name}: {entry['detail']}")
        for message in warnings:
            logger.warning("Assumption heuristic not met: %s", message)
        if failures:
            logger.info("Assumption check failed: %s", "; ".join(failures))
        return not failures, "; ".join(failures), report

    def _entry(self, passed: bool, detail: str, severity: str = "error") -> Dict:
        return {"passed": bool(passed), "detail": detail, "severity": severity}
