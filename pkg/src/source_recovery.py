"""
Recovery of the covariance and relation strengths mu_c, mu_r from one realization's far field.

The band estimators average k^{m + 4 alpha - d - 1} conj(u(x, k)) u(x, k + tau) over
[K, 2K]; for large K they approach the Fourier transforms of mu_c and mu_r at tau x.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy import integrate, optimize, spatial

from src.errors import CoverageError, InvalidGeometryError
from src.forward_solver import FarFieldTable
from src.grid import Grid, direction_weights, fourier_transform_at

logger = logging.getLogger(__name__)


class RecoveryConfig(BaseModel):
    """Band starts, band resolution, frequency shifts and model orders for the estimators."""

    model_config = ConfigDict(frozen=True)

    d: int
    alpha: float
    m: float
    K_values: Tuple[float, ...]
    Nk: int = 256
    tau_grid: Tuple[float, ...] = (0.0,)

    @field_validator("K_values")
    @classmethod
    def _check_k(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if not value or min(value) <= 0:
            raise ValueError("band starts must be positive")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("band starts must be increasing")
        return value

    @field_validator("Nk")
    @classmethod
    def _check_nk(cls, value: int) -> int:
        if value < 2:
            raise ValueError("Nk must be at least 2")
        return value

    @model_validator(mode="after")
    def _check_tau(self) -> "RecoveryConfig":
        if any(t < 0 for t in self.tau_grid):
            raise ValueError("frequency shifts must be non-negative")
        if max(self.tau_grid) > min(self.K_values) / 4:
            raise ValueError("tau_max must not exceed K_min / 4")
        return self

    @property
    def weight_exponent(self) -> float:
        return self.m + 4 * self.alpha - self.d - 1

    @property
    def covariance_constant(self) -> complex:
        a2 = self.alpha ** 2
        return {1: 4 * a2, 2: 8 * math.pi * a2, 3: 16 * math.pi ** 2 * a2}[self.d] + 0j

    @property
    def relation_constant(self) -> complex:
        a2 = self.alpha ** 2
        return {1: -4 * a2 + 0j, 2: -8j * math.pi * a2, 3: 16 * math.pi ** 2 * a2 + 0j}[self.d]

    def wavenumber_grid(self) -> np.ndarray:
        """Uniform k grid covering every band [K, 2K + tau_max] with spacing K_min/(Nk - 1)."""
        dk = min(self.K_values) / (self.Nk - 1)
        top = 2 * max(self.K_values) + max(self.tau_grid)
        count = int(math.ceil((top - min(self.K_values)) / dk - 1e-9)) + 1
        return min(self.K_values) + dk * np.arange(count)

    def snapped_taus(self) -> List[float]:
        dk = min(self.K_values) / (self.Nk - 1)
        return sorted({round(t / dk) * dk for t in self.tau_grid})


@dataclass(frozen=True)
class SeparatingNormal:
    """Hyperplane n.x + offset = 0 with n.x + offset <= 0 on U and >= 0 on D."""

    n_hat: np.ndarray
    offset: float

    def side(self, points: np.ndarray) -> np.ndarray:
        return np.atleast_2d(points) @ self.n_hat + self.offset


def support_points(mask: np.ndarray, grid: Grid) -> np.ndarray:
    return grid.points()[np.asarray(mask).ravel()]


def _max_margin(d_points: np.ndarray, u_points: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """Linear program: maximise t with n.x + b >= t on D, <= -t on U, |n_i| <= 1."""
    dim = d_points.shape[1]
    # variables: n (dim), b, t
    cost = np.zeros(dim + 2)
    cost[-1] = -1.0
    rows_d = np.hstack([-d_points, -np.ones((len(d_points), 1)), np.ones((len(d_points), 1))])
    rows_u = np.hstack([u_points, np.ones((len(u_points), 1)), np.ones((len(u_points), 1))])
    bounds = [(-1, 1)] * dim + [(None, None), (None, 1)]
    res = optimize.linprog(cost, A_ub=np.vstack([rows_d, rows_u]), b_ub=np.zeros(len(d_points) + len(u_points)),
                           bounds=bounds, method="highs")
    if not res.success:
        return np.zeros(dim), 0.0, -1.0
    n, b, t = res.x[:dim], res.x[dim], res.x[-1]
    return n, float(b), float(t)


def compute_separating_normal(d_points: np.ndarray, u_points: np.ndarray) -> SeparatingNormal:
    """
    Unit normal of a hyperplane separating the supports, pointing from U towards D.

    Args:
        d_points: (N, d) support cells of the source
        u_points: (M, d) support cells of the potential

    Raises:
        InvalidGeometryError: empty or overlapping supports
    """
    d_points = np.atleast_2d(np.asarray(d_points, dtype=float))
    u_points = np.atleast_2d(np.asarray(u_points, dtype=float))
    if d_points.size == 0 or u_points.size == 0:
        raise InvalidGeometryError("supports must be non-empty")

    tree = spatial.cKDTree(u_points)
    dist, idx = tree.query(d_points)
    best = int(np.argmin(dist))
    if dist[best] <= 0:
        raise InvalidGeometryError("supports of D and U overlap")
    c_d, c_u = d_points[best], u_points[idx[best]]
    n_hat = (c_d - c_u) / np.linalg.norm(c_d - c_u)
    normal = SeparatingNormal(n_hat=n_hat, offset=float(-n_hat @ (c_d + c_u) / 2))
    if np.all(normal.side(d_points) >= 0) and np.all(normal.side(u_points) <= 0):
        return normal

    logger.info("Closest-pair hyperplane does not separate the supports, solving the max-margin problem")
    n, b, t = _max_margin(d_points, u_points)
    if t <= 0:
        raise InvalidGeometryError("supports of D and U cannot be separated by a hyperplane")
    scale = np.linalg.norm(n)
    return SeparatingNormal(n_hat=n / scale, offset=b / scale)


@dataclass
class MuHatSamples:
    """Estimates of a transformed strength on directions x tau, values indexed [direction, tau]."""

    directions: np.ndarray
    taus: np.ndarray
    values: np.ndarray
    discrepancies: Dict[int, float]


class SourceRecovery:
    """Correlation estimators on a far-field table and reconstruction of mu_c, mu_r."""

    def __init__(self, table: FarFieldTable, cfg: RecoveryConfig, normal: SeparatingNormal):
        self.table = table
        self.cfg = cfg
        self.normal = normal
        dk = np.diff(table.wavenumbers)
        self.dk = float(dk.min()) if len(dk) else 0.0
        self._status_ok = np.array([s == "ok" for s in table.status], dtype=bool)

    def _band(self, K: float) -> np.ndarray:
        ks = self.table.wavenumbers
        slack = 1e-9 * max(1.0, 2 * K)
        band = ks[(ks >= K - slack) & (ks <= 2 * K + slack)]
        if len(band) < self.cfg.Nk or abs(band[0] - K) > slack or abs(band[-1] - 2 * K) > slack:
            raise CoverageError(f"table does not cover [{K}, {2 * K}] with {self.cfg.Nk} nodes",
                                missing=[K, 2 * K])
        return band

    def _column(self, direction, ks: np.ndarray) -> np.ndarray:
        j = self.table.direction_index(direction)
        ks = np.asarray(ks, dtype=float)
        table_ks = self.table.wavenumbers
        if len(table_ks) == 0:
            raise CoverageError("far-field table is empty", missing=ks.tolist())
        # nearest table row per requested k
        upper = np.clip(np.searchsorted(table_ks, ks), 0, len(table_ks) - 1)
        lower = np.clip(upper - 1, 0, len(table_ks) - 1)
        rows = np.where(np.abs(table_ks[lower] - ks) < np.abs(table_ks[upper] - ks), lower, upper)
        found = np.abs(table_ks[rows] - ks) <= 1e-9 * np.maximum(1.0, np.abs(ks))
        found &= self._status_ok[rows]
        if not np.all(found):
            missing = ks[~found].tolist()
            raise CoverageError(f"{len(missing)} wavenumbers missing for direction {list(direction)}",
                                missing=missing)
        return self.table.u_inf[rows, j]

    def _band_average(self, first: np.ndarray, second: np.ndarray, ks: np.ndarray, K: float) -> complex:
        weight = ks ** self.cfg.weight_exponent
        return complex(integrate.trapezoid(weight * first * second, ks) / K)

    def correlate_covariance(self, x_hat, tau: float, K: float) -> complex:
        """(C^c/K) int_K^{2K} k^{m+4 alpha-d-1} conj(u(x, k)) u(x, k + tau) dk."""
        ks = self._band(K)
        here = self._column(x_hat, ks)
        shifted = self._column(x_hat, ks + tau)
        return self.cfg.covariance_constant * self._band_average(np.conj(here), shifted, ks, K)

    def correlate_relation(self, x_hat, tau: float, K: float) -> complex:
        """(C^r/K) int_K^{2K} k^{m+4 alpha-d-1} u(-x, k) u(x, k + tau) dk."""
        ks = self._band(K)
        back = self._column(-np.asarray(x_hat, dtype=float), ks)
        shifted = self._column(x_hat, ks + tau)
        return self.cfg.relation_constant * self._band_average(back, shifted, ks, K)

    def _correlate(self, eta: str, x_hat, tau: float, K: float) -> complex:
        if eta == "c":
            return self.correlate_covariance(x_hat, tau, K)
        if eta == "r":
            return self.correlate_relation(x_hat, tau, K)
        raise ValueError(f"eta must be 'c' or 'r', got {eta!r}")

    def estimate(self, eta: str, x_hat, tau: float, K: float) -> Dict:
        """
        Estimate of mu^eta^(tau x), mirrored as conj(mu^(-tau x)) when x.n < 0.

        On the plane x.n = 0 the estimator branch is used and its distance to the
        mirror value is reported when -x is in the table.
        """
        x_hat = np.asarray(x_hat, dtype=float)
        side = float(x_hat @ self.normal.n_hat)
        if side < -1e-12:
            return {"value": np.conj(self._correlate(eta, -x_hat, tau, K)), "branch": "mirror", "discrepancy": None}
        value = self._correlate(eta, x_hat, tau, K)
        discrepancy = None
        if abs(side) <= 1e-12:
            try:
                mirror = np.conj(self._correlate(eta, -x_hat, tau, K))
                discrepancy = float(abs(value - mirror))
            except CoverageError:
                pass
        return {"value": value, "branch": "estimator", "discrepancy": discrepancy}

    def estimate_grid(self, eta: str, K: float, taus: Optional[Sequence[float]] = None) -> MuHatSamples:
        """Estimates over all table directions and the tau grid, snapped to the table spacing."""
        taus = np.asarray(taus if taus is not None else self.cfg.snapped_taus(), dtype=float)
        values = np.empty((len(self.table.directions), len(taus)), dtype=complex)
        discrepancies: Dict[int, float] = {}
        for i, x_hat in enumerate(self.table.directions):
            for j, tau in enumerate(taus):
                result = self.estimate(eta, x_hat, tau, K)
                values[i, j] = result["value"]
                if result["discrepancy"] is not None:
                    discrepancies[i] = max(discrepancies.get(i, 0.0), result["discrepancy"])
        return MuHatSamples(directions=self.table.directions.copy(), taus=taus, values=values,
                            discrepancies=discrepancies)

    def error_report(self, mu_true: Dict[str, np.ndarray], grid: Grid, taus: Optional[Sequence[float]] = None) -> Dict:
        """Relative errors of the estimates against the transformed true strengths, per K."""
        report = {}
        for eta, mu in mu_true.items():
            trend = []
            for K in self.cfg.K_values:
                est = self.estimate_grid(eta, K, taus)
                zetas = (est.directions[:, None, :] * est.taus[None, :, None]).reshape(-1, grid.d)
                truth = fourier_transform_at(mu, grid, zetas).reshape(est.values.shape)
                scale = np.linalg.norm(truth)
                error = float(np.linalg.norm(est.values - truth) / scale) if scale > 0 else float(np.linalg.norm(est.values))
                trend.append({"K": K, "relative_error": error})
            report[eta] = trend
        return report


def assemble_mu(estimates: MuHatSamples, grid: Grid, d: int) -> Dict:
    """
    Inverse transform mu(x) = (2 pi)^{-d} int e^{i zeta.x} mu^(zeta) dzeta in polar coordinates.

    Directions without data (NaN rows) are filled from the antipodal direction by
    mu^(-zeta) = conj(mu^(zeta)). Returns the real reconstruction on grid and the
    relative L2 norm of the discarded imaginary part.

    Raises:
        CoverageError: a direction and its antipode both lack data
    """
    directions = np.atleast_2d(estimates.directions)
    values = np.array(estimates.values, dtype=complex)
    missing = ~np.all(np.isfinite(values), axis=1)
    unfilled = []
    for i in np.flatnonzero(missing):
        dist = np.linalg.norm(directions + directions[i], axis=-1)
        j = int(np.argmin(dist))
        if dist[j] > 1e-9 or missing[j]:
            unfilled.append(directions[i].tolist())
            continue
        values[i] = np.conj(values[j])
    if unfilled:
        raise CoverageError(f"{len(unfilled)} directions have no data on either hemisphere", missing=unfilled)

    taus = np.asarray(estimates.taus, dtype=float)
    tau_weights = np.zeros(len(taus))
    if len(taus) > 1:
        gaps = np.diff(taus)
        tau_weights[:-1] += gaps / 2
        tau_weights[1:] += gaps / 2
    tau_weights *= taus ** (d - 1)
    dir_weights = direction_weights(d, len(directions))
    weights = dir_weights[:, None] * tau_weights[None, :]

    zetas = (directions[:, None, :] * taus[None, :, None]).reshape(-1, d)
    coefficients = (weights * values).ravel()
    points = grid.points()
    field = np.empty(len(points), dtype=complex)
    chunk = max(1, 2_000_000 // max(len(zetas), 1))
    for start in range(0, len(points), chunk):
        phase = np.exp(1j * points[start:start + chunk] @ zetas.T)
        field[start:start + chunk] = phase @ coefficients
    field = field.reshape(grid.shape) / (2 * math.pi) ** d

    real_norm = np.linalg.norm(field.real)
    imag_residual = float(np.linalg.norm(field.imag) / real_norm) if real_norm > 0 else 0.0
    if imag_residual > 0.01:
        logger.warning("Reconstruction imaginary residual %.2e above 1%%", imag_residual)
    return {"mu": field.real, "imag_residual": imag_residual}


def reconstruct(recovery: SourceRecovery, grid: Grid, K: float) -> Dict:
    """Estimate mu_c^ and mu_r^ at band start K and transform both back to grid fields."""
    out = {}
    for eta in ("c", "r"):
        samples = recovery.estimate_grid(eta, K)
        assembled = assemble_mu(samples, grid, recovery.cfg.d)
        out[f"mu_{eta}"] = assembled["mu"]
        out[f"imag_residual_{eta}"] = assembled["imag_residual"]
        out[f"discrepancies_{eta}"] = samples.discrepancies
    return out
