"""
Direct solver for the fractional Helmholtz equation with a potential.

The resolvent H_k is applied by FFT convolution with the sampled outgoing kernel
G^k on a zero-padded offset grid.
The Lippmann-Schwinger equation u + K_k u = H_k f is solved by the Born series
and the far-field pattern is split into F0 + F1 + F2.
"""
import csv
import json
import logging
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from src.errors import AccuracyError, CoverageError, DomainError, WavenumberTooSmallError
from src.green_function import ModelParams, far_field_constant, green_kernel
from src.grid import fourier_transform_at
from src.random_source import FieldRealization, SourceSpec

logger = logging.getLogger(__name__)

COMPONENTS = ("F0", "F1", "F2", "u_inf")


class BornConfig(BaseModel):
    """Controls for the resolvent and the Born series."""

    model_config = ConfigDict(frozen=True)

    max_terms: int = 200
    contraction_tol: float = 1e-10
    pad: int = 2
    power_steps: int = 20
    truncated_correction: Literal["displayed", "hankel"] = "hankel"

    @field_validator("max_terms")
    @classmethod
    def _check_terms(cls, value: int) -> int:
        if value < 1:
            raise ValueError("max_terms must be at least 1")
        return value

    @field_validator("contraction_tol")
    @classmethod
    def _check_tol(cls, value: float) -> float:
        if not 0 < value < 1:
            raise ValueError("contraction_tol must lie in (0, 1)")
        return value

    @field_validator("pad")
    @classmethod
    def _check_pad(cls, value: int) -> int:
        if value < 2:
            raise ValueError("zero padding factor must be at least 2")
        return value


class BornSolver:
    """Resolvent, potential operator, Born series and far-field pattern on one grid."""

    def __init__(self, spec: SourceSpec, cfg: Optional[BornConfig] = None):
        self.spec = spec
        self.grid = spec.grid
        self.cfg = cfg or BornConfig()
        self.q = spec.q if spec.q is not None else np.zeros(self.grid.shape, dtype=complex)
        self._kernels: Dict[Tuple, np.ndarray] = {}
        self._lock = threading.Lock()

    # ------------------------------------------------------------------
    # resolvent

    @property
    def _padded_shape(self) -> Tuple[int, ...]:
        return tuple(self.cfg.pad * n for n in self.grid.shape)

    def _crop(self, field: np.ndarray) -> np.ndarray:
        return field[tuple(slice(0, n) for n in self.grid.shape)]

    def _kernel_spectrum(self, p: ModelParams, kind: str) -> np.ndarray:
        """FFT of h^d G(offset) on the padded offset grid, cached per (d, alpha, k, kind)."""
        key = (p.d, p.alpha, p.k, kind, self.cfg.truncated_correction)
        with self._lock:
            cached = self._kernels.get(key)
        if cached is not None:
            return cached

        h = self.grid.spacing
        axes = [h * np.fft.fftfreq(n, d=1.0 / n) for n in self._padded_shape]
        mesh = np.meshgrid(*axes, indexing="ij")
        r = np.sqrt(sum(c ** 2 for c in mesh))
        values = np.zeros(r.shape, dtype=complex)
        nonzero = r > 0
        values[nonzero] = green_kernel(r[nonzero], p, kind, self.cfg.truncated_correction)
        origin = (0,) * self.grid.d
        if kind == "truncated":
            values[origin] = 0.0
        else:
            # cell average over sub-cell midpoints
            sub = ((np.arange(8) + 0.5) / 8 - 0.5) * h
            sub_mesh = np.meshgrid(*([sub] * self.grid.d), indexing="ij")
            sub_r = np.sqrt(sum(c ** 2 for c in sub_mesh)).ravel()
            values[origin] = np.mean(green_kernel(sub_r, p, kind))
        spectrum = np.fft.fftn(values * self.grid.cell_volume)

        with self._lock:
            self._kernels[key] = spectrum
        logger.debug("Built %s kernel for k=%g on %s", kind, p.k, self._padded_shape)
        return spectrum

    def _convolve(self, phi: np.ndarray, spectrum: np.ndarray) -> np.ndarray:
        padded = np.fft.fftn(phi, s=self._padded_shape)
        return self._crop(np.fft.ifftn(spectrum * padded))

    def apply_resolvent(self, phi: np.ndarray, p: ModelParams) -> np.ndarray:
        """
        (H_k phi)(x) = int G^k(x - z) phi(z) dz on the grid.

        Args:
            phi: grid field
            p: model parameters carrying k

        Returns:
            complex grid field
        """
        phi = np.asarray(phi, dtype=complex)
        if phi.shape != self.grid.shape:
            raise DomainError("field does not live on the solver grid")
        if not np.any(phi):
            return np.zeros(self.grid.shape, dtype=complex)
        return self._convolve(phi, self._kernel_spectrum(p, "full"))

    def apply_potential_op(self, u: np.ndarray, p: ModelParams) -> np.ndarray:
        """K_k u = H_k(q u)."""
        return self.apply_resolvent(self.q * u, p)

    def _adjoint_potential_op(self, v: np.ndarray, p: ModelParams) -> np.ndarray:
        # G^k(x - z) is symmetric, so H_k^* v = conj(H_k conj(v))
        return np.conj(self.q) * np.conj(self.apply_resolvent(np.conj(v), p))

    def potential_norm_estimate(self, p: ModelParams, steps: Optional[int] = None, seed: int = 0) -> float:
        """Power iteration on K_k^* K_k for the spectral norm of K_k."""
        if not np.any(self.q):
            return 0.0
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.grid.shape) + 1j * rng.standard_normal(self.grid.shape)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(steps or self.cfg.power_steps):
            w = self._adjoint_potential_op(self.apply_potential_op(v, p), p)
            lam = float(np.linalg.norm(w))
            if lam == 0:
                return 0.0
            v = w / lam
        return math.sqrt(lam)

    # ------------------------------------------------------------------
    # Born series

    def born_solve(self, f: Union[FieldRealization, np.ndarray], p: ModelParams) -> Dict:
        """
        Solve u + K_k u = H_k f by the Born series.

        Args:
            f: source realization or grid field
            p: model parameters carrying k

        Returns:
            dict with u, hk_f (= H_k f), terms (norms of the series terms),
            residual (relative Lippmann-Schwinger residual) and norm_estimate

        Raises:
            WavenumberTooSmallError: estimated ||K_k|| >= 1
            AccuracyError: residual above 10 * contraction_tol
        """
        samples = f.samples if isinstance(f, FieldRealization) else np.asarray(f, dtype=complex)
        norm_estimate = self.potential_norm_estimate(p)
        if norm_estimate >= 1:
            raise WavenumberTooSmallError(
                f"||K_k|| ~ {norm_estimate:.3f} >= 1 at k = {p.k}; the Born series need not converge",
                k=p.k, norm_estimate=norm_estimate)

        hk_f = self.apply_resolvent(samples, p)
        first = self.grid.l2_norm(hk_f)
        terms = [first]
        u = hk_f.copy()
        if first > 0 and np.any(self.q):
            term = hk_f
            for _ in range(self.cfg.max_terms - 1):
                term = -self.apply_potential_op(term, p)
                size = self.grid.l2_norm(term)
                terms.append(size)
                u += term
                if size < self.cfg.contraction_tol * first:
                    break

        residual = 0.0
        if first > 0:
            defect = u + self.apply_potential_op(u, p) - hk_f
            residual = self.grid.l2_norm(defect) / first
        logger.debug("Born series at k=%g: %d terms, residual %.2e, ||K|| ~ %.3f",
                     p.k, len(terms), residual, norm_estimate)
        if residual > 10 * self.cfg.contraction_tol:
            raise AccuracyError(
                f"Born series residual {residual:.2e} above {10 * self.cfg.contraction_tol:.1e} at k = {p.k}",
                partial_value=None, err_est=residual, ladder=terms)
        return {"u": u, "hk_f": hk_f, "terms": terms, "residual": residual, "norm_estimate": norm_estimate}

    # ------------------------------------------------------------------
    # far field

    def _transform(self, field: np.ndarray, directions: np.ndarray, k: float) -> np.ndarray:
        return fourier_transform_at(field, self.grid, k * np.atleast_2d(directions))

    def far_field(self, f: Union[FieldRealization, np.ndarray], p: ModelParams, directions: np.ndarray,
                  solution: Optional[Dict] = None) -> Dict:
        """
        Far-field contributions F0, F1, F2 and u_inf = F0 + F1 + F2 per direction.

        F0 = C int e^{-ik x.y} f, F1 = -C int e^{-ik x.y} q H_k f and
        F2 = -C int e^{-ik x.y} q (u - H_k f).
        """
        samples = f.samples if isinstance(f, FieldRealization) else np.asarray(f, dtype=complex)
        solution = solution or self.born_solve(samples, p)
        c = far_field_constant(p)
        f0 = c * self._transform(samples, directions, p.k)
        f1 = -c * self._transform(self.q * solution["hk_f"], directions, p.k)
        f2 = -c * self._transform(self.q * (solution["u"] - solution["hk_f"]), directions, p.k)
        return {"k": p.k, "F0": f0, "F1": f1, "F2": f2, "u_inf": f0 + f1 + f2,
                "terms": solution["terms"], "residual": solution["residual"],
                "norm_estimate": solution["norm_estimate"]}

    def far_field_f1_truncated(self, f: Union[FieldRealization, np.ndarray], p: ModelParams,
                               directions: np.ndarray) -> np.ndarray:
        """F1 with G^k replaced by the truncated kernel G^k_N (d = 2, 3)."""
        if p.d == 1:
            raise DomainError("the truncated far field is defined for d = 2, 3 only")
        samples = f.samples if isinstance(f, FieldRealization) else np.asarray(f, dtype=complex)
        if not np.any(self.q) or not np.any(samples):
            return np.zeros(len(np.atleast_2d(directions)), dtype=complex)
        inner = self._convolve(samples, self._kernel_spectrum(p, "truncated"))
        return -far_field_constant(p) * self._transform(self.q * inner, directions, p.k)

    def near_field_at(self, points: np.ndarray, f: Union[FieldRealization, np.ndarray], p: ModelParams,
                      solution: Optional[Dict] = None) -> np.ndarray:
        """u at points off the grid: sum_y G^k(x - y) (f - q u)(y) h^d."""
        samples = f.samples if isinstance(f, FieldRealization) else np.asarray(f, dtype=complex)
        solution = solution or self.born_solve(samples, p)
        density = (samples - self.q * solution["u"]).ravel()
        support = np.abs(density) > 0
        nodes = self.grid.points()[support]
        weights = density[support] * self.grid.cell_volume
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(points), dtype=complex)
        for i, x in enumerate(points):
            r = np.linalg.norm(nodes - x, axis=-1)
            out[i] = green_kernel(r, p) @ weights
        return out

    # ------------------------------------------------------------------
    # sweep

    def release_kernels(self, k: float) -> None:
        """Drop the cached kernel spectra of wavenumber k."""
        with self._lock:
            for key in [key for key in self._kernels if key[2] == k]:
                del self._kernels[key]

    def _sweep_row(self, f: np.ndarray, p: ModelParams, directions: np.ndarray) -> Dict:
        try:
            row = self.far_field(f, p, directions)
            row["status"] = "ok"
        except WavenumberTooSmallError as e:
            logger.warning("Skipping k=%g: %s", p.k, e)
            nan = np.full(len(directions), np.nan + 1j * np.nan)
            row = {"k": p.k, "F0": nan, "F1": nan, "F2": nan, "u_inf": nan, "terms": [],
                   "residual": float("nan"), "norm_estimate": e.norm_estimate, "status": "k_too_small"}
        finally:
            # a sweep never revisits k
            self.release_kernels(p.k)
        return row

    def table_params(self, p: ModelParams) -> Dict:
        return {"d": p.d, "alpha": p.alpha, "m": self.spec.m, "pad": self.cfg.pad}

    def iter_sweep(self, f: FieldRealization, p: ModelParams, wavenumbers: Sequence[float],
                   directions: np.ndarray, threads: int = 1) -> Iterator[Dict]:
        """
        Far-field rows over a frequency sweep, yielded as each k completes.

        Pending wavenumbers are cancelled when the consumer stops or a row raises.
        """
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        pool = ThreadPoolExecutor(max_workers=max(1, threads))
        try:
            futures = [pool.submit(self._sweep_row, f.samples, p.with_k(float(k)), directions)
                       for k in wavenumbers]
            for future in as_completed(futures):
                yield future.result()
        finally:
            pool.shutdown(wait=True, cancel_futures=True)

    def sweep(self, f: FieldRealization, p: ModelParams, wavenumbers: Sequence[float],
              directions: np.ndarray, threads: int = 1) -> "FarFieldTable":
        """
        Far-field table over a frequency sweep, rows computed in parallel.

        Rows where ||K_k|| >= 1 are kept with status "k_too_small" and NaN entries.
        """
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        rows = list(self.iter_sweep(f, p, wavenumbers, directions, threads))
        return FarFieldTable.from_rows(rows, directions, seed=f.seed, params=self.table_params(p))


@dataclass
class FarFieldTable:
    """Far-field data per (k, direction); arrays are indexed [k, direction]."""

    directions: np.ndarray
    wavenumbers: np.ndarray
    F0: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    u_inf: np.ndarray
    status: List[str]
    seed: int = 0
    params: Dict = field(default_factory=dict)
    certificates: List[Dict] = field(default_factory=list)

    def __post_init__(self):
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        self.wavenumbers = np.asarray(self.wavenumbers, dtype=float)
        if np.any(np.diff(self.wavenumbers) <= 0):
            raise ValueError("wavenumbers must be strictly increasing")
        shape = (len(self.wavenumbers), len(self.directions))
        for name in COMPONENTS:
            values = np.asarray(getattr(self, name), dtype=complex).reshape(shape)
            setattr(self, name, values)
        if len(self.status) != shape[0]:
            raise ValueError("one status per wavenumber is required")
        ok = np.isfinite(self.u_inf)
        total = self.F0 + self.F1 + self.F2
        if not np.allclose(self.u_inf[ok], total[ok], rtol=1e-12, atol=1e-300):
            raise ValueError("u_inf must equal F0 + F1 + F2")

    @classmethod
    def from_rows(cls, rows: List[Dict], directions: np.ndarray, seed: int = 0,
                  params: Optional[Dict] = None) -> "FarFieldTable":
        rows = sorted(rows, key=lambda r: r["k"])
        return cls(
            directions=directions,
            wavenumbers=np.array([r["k"] for r in rows]),
            **{name: np.array([r[name] for r in rows]) for name in COMPONENTS},
            status=[r.get("status", "ok") for r in rows],
            seed=seed,
            params=dict(params or {}),
            certificates=[{"k": r["k"], "terms": list(r.get("terms", [])),
                           "residual": r.get("residual"), "norm_estimate": r.get("norm_estimate")}
                          for r in rows],
        )

    @property
    def d(self) -> int:
        return self.directions.shape[1]

    def index_of(self, k: float, tol: float = 1e-9) -> int:
        """Row of wavenumber k, CoverageError when absent."""
        i = int(np.argmin(np.abs(self.wavenumbers - k)))
        if abs(self.wavenumbers[i] - k) > tol * max(1.0, abs(k)):
            raise CoverageError(f"wavenumber {k} not in table", missing=[k])
        return i

    def direction_index(self, direction, tol: float = 1e-9) -> int:
        dist = np.linalg.norm(self.directions - np.asarray(direction, dtype=float), axis=-1)
        i = int(np.argmin(dist))
        if dist[i] > tol:
            raise CoverageError(f"direction {list(direction)} not in table", missing=[list(direction)])
        return i

    def merge(self, other: "FarFieldTable") -> "FarFieldTable":
        """Union of two tables on the same directions; rows of other win on duplicate k."""
        if self.directions.shape != other.directions.shape or not np.allclose(self.directions, other.directions):
            raise ValueError("tables have different directions")
        rows = {}
        for table in (self, other):
            for i, k in enumerate(table.wavenumbers):
                rows[round(float(k), 12)] = table._row(i)
        return FarFieldTable.from_rows(list(rows.values()), self.directions, self.seed,
                                       {**self.params, **other.params})

    def rows(self) -> List[Dict]:
        """Rows in the form produced by a sweep, one per wavenumber."""
        return [self._row(i) for i in range(len(self.wavenumbers))]

    def _row(self, i: int) -> Dict:
        cert = self.certificates[i] if i < len(self.certificates) else {}
        return {"k": float(self.wavenumbers[i]), "status": self.status[i],
                **{name: getattr(self, name)[i] for name in COMPONENTS},
                "terms": cert.get("terms", []), "residual": cert.get("residual"),
                "norm_estimate": cert.get("norm_estimate")}

    def to_dict(self) -> Dict:
        def pairs(a):
            return np.stack([a.real, a.imag], axis=-1).tolist()

        return {"directions": self.directions.tolist(), "wavenumbers": self.wavenumbers.tolist(),
                **{name: pairs(getattr(self, name)) for name in COMPONENTS},
                "status": self.status, "seed": self.seed, "params": self.params,
                "certificates": self.certificates}

    @classmethod
    def from_dict(cls, data: Dict) -> "FarFieldTable":
        def unpair(a):
            a = np.asarray(a, dtype=float)
            return a[..., 0] + 1j * a[..., 1]

        return cls(directions=np.asarray(data["directions"]), wavenumbers=np.asarray(data["wavenumbers"]),
                   **{name: unpair(data[name]) for name in COMPONENTS},
                   status=list(data["status"]), seed=int(data.get("seed", 0)),
                   params=dict(data.get("params", {})), certificates=list(data.get("certificates", [])))

    def to_json(self, path: Union[str, Path]) -> None:
        """Write through a temporary file and rename, so readers never see a torn table."""
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        # NaN rows are written as JSON NaN literals, which json.load accepts
        tmp.write_text(json.dumps(self.to_dict()))
        os.replace(tmp, path)

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "FarFieldTable":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_csv(self, path: Union[str, Path]) -> None:
        """One line per (k, direction)."""
        dir_cols = [f"dir{i}" for i in range(self.d)]
        value_cols = [f"{part}_{name}" for name in COMPONENTS for part in ("re", "im")]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dim", "alpha", "m", "k", *dir_cols, *value_cols, "seed", "status"])
            for i, k in enumerate(self.wavenumbers):
                for j, direction in enumerate(self.directions):
                    values = []
                    for name in COMPONENTS:
                        z = getattr(self, name)[i, j]
                        values += [repr(float(z.real)), repr(float(z.imag))]
                    writer.writerow([self.d, self.params.get("alpha"), self.params.get("m"), repr(float(k)),
                                     *[repr(float(x)) for x in direction], *values, self.seed, self.status[i]])
