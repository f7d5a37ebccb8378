"""
Independent reference computations used to check the numerical modules.

Nothing here calls the Mellin-Barnes contour code: the Green's function oracle
integrates the radial Fourier representation directly.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy import integrate, special

from src.errors import AccuracyError, DomainError
from src.green_function import ModelParams, far_field_constant
from src.grid import Grid, fourier_transform_at
from src.random_source import SourceSpec, spectral_density, sample_field

logger = logging.getLogger(__name__)


class PVQuadSpec(BaseModel):
    """Controls of the principal-value oracle."""

    model_config = ConfigDict(frozen=True)

    eps0: float = 0.25
    levels: int = 6
    tol: float = 1e-8
    quad_limit: int = 400

    @field_validator("eps0")
    @classmethod
    def _check_eps(cls, value: float) -> float:
        if not 0 < value < 1:
            raise ValueError("eps0 must lie in (0, 1)")
        return value

    @field_validator("levels")
    @classmethod
    def _check_levels(cls, value: int) -> int:
        if value < 2:
            raise ValueError("at least two ladder levels are needed")
        return value


def _radial_factor(d: int, x):
    """Lambda_d(x) with (2 pi)^{-d/2} int rho^{d-1} Lambda_d(rho r) F(rho) drho = (2 pi)^{-d} int e^{i x.xi} F."""
    if d == 1:
        return math.sqrt(2 / math.pi) * np.cos(x)
    if d == 2:
        return special.j0(x)
    return math.sqrt(2 / math.pi) * np.sinc(np.asarray(x) / math.pi)


def _quad(func, a: float, b: float, limit: int, **kwargs) -> float:
    value, _ = integrate.quad(func, a, b, limit=limit, epsabs=1e-15, epsrel=1e-12, **kwargs)
    return value


def _pv_core(r: float, p: ModelParams, spec: PVQuadSpec) -> float:
    """PV int_0^{2k} rho^{d-1} Lambda(rho r)/(rho^{2 alpha} - k^{2 alpha}) drho by an exclusion ladder."""
    d, k, a = p.d, p.k, p.alpha

    def g(rho):
        return rho ** (d - 1) * _radial_factor(d, rho * r) / (rho ** (2 * a) - k ** (2 * a))

    eps0 = spec.eps0 * min(k, 1.0 / r)
    ladder: List[float] = []
    table: List[List[float]] = []
    for j in range(spec.levels):
        eps = eps0 / 2 ** j
        value = _quad(g, 0.0, k - eps, spec.quad_limit) + _quad(g, k + eps, 2 * k, spec.quad_limit)
        ladder.append(value)
        # PV - I(eps) has an expansion in odd powers of eps
        row = [value]
        for level in range(1, j + 1):
            factor = 2.0 ** (2 * level - 1)
            row.append((factor * row[level - 1] - table[j - 1][level - 1]) / (factor - 1))
        table.append(row)
        if j >= 2 and abs(row[-1] - table[j - 1][-1]) <= spec.tol * max(abs(row[-1]), 1e-300):
            return row[-1]
    best = table[-1][-1]
    change = abs(best - table[-2][-1])
    if change > 1e3 * spec.tol * max(abs(best), 1e-300):
        raise AccuracyError(f"principal-value ladder did not converge at r = {r}",
                            partial_value=best, err_est=change, ladder=ladder)
    return best


def _tail(r: float, p: ModelParams, spec: PVQuadSpec) -> float:
    """int_{2k}^inf rho^{d-1} Lambda(rho r)/(rho^{2 alpha} - k^{2 alpha}) drho, oscillatory weights."""
    d, k, a = p.d, p.k, p.alpha
    start = 2 * k
    c = math.sqrt(2 / math.pi)
    if d == 1:
        amp = lambda rho: c / (rho ** (2 * a) - k ** (2 * a))
        return _quad(amp, start, np.inf, spec.quad_limit, weight="cos", wvar=r)
    if d == 2:
        # J0(x) = Re(h) cos x - Im(h) sin x with h = H0^(1)(x) e^{-ix}
        def amp_cos(rho):
            return rho / (rho ** (2 * a) - k ** (2 * a)) * special.hankel1e(0, rho * r).real

        def amp_sin(rho):
            return -rho / (rho ** (2 * a) - k ** (2 * a)) * special.hankel1e(0, rho * r).imag

        return (_quad(amp_cos, start, np.inf, spec.quad_limit, weight="cos", wvar=r)
                + _quad(amp_sin, start, np.inf, spec.quad_limit, weight="sin", wvar=r))
    beta = 1 - 2 * a
    if beta < 0:
        amp = lambda rho: c / r * rho / (rho ** (2 * a) - k ** (2 * a))
        return _quad(amp, start, np.inf, spec.quad_limit, weight="sin", wvar=r)
    # rho^{1-2 alpha} sin(rho r) is only Abel summable: split it off in closed form
    full = special.gamma(beta + 1) * math.sin(math.pi * (beta + 1) / 2) / r ** (beta + 1)
    head = _quad(lambda rho: rho ** beta * math.sin(rho * r), 0.0, start, spec.quad_limit)
    remainder = lambda rho: rho ** beta * k ** (2 * a) / (rho ** (2 * a) - k ** (2 * a))
    return c / r * (full - head + _quad(remainder, start, np.inf, spec.quad_limit, weight="sin", wvar=r))


def green_delta_pv(x_norm: float, p: ModelParams, spec: Optional[PVQuadSpec] = None,
                   outgoing: bool = False) -> complex:
    """
    G^{k,delta}(x) = (2 pi)^{-d/2} PV int_0^inf rho^{d-1} Lambda_d(rho |x|)/(rho^{2 alpha} - k^{2 alpha}) drho.

    With outgoing=True the half residue on |xi| = k is added, which gives G^k.
    """
    if x_norm <= 0:
        raise DomainError("the radial representation needs |x| > 0")
    spec = spec or PVQuadSpec()
    d, k, a = p.d, p.k, p.alpha
    value = (2 * math.pi) ** (-d / 2) * (_pv_core(x_norm, p, spec) + _tail(x_norm, p, spec))
    if not outgoing:
        return complex(value)
    residue = (2 * math.pi) ** (-d / 2) * k ** (d - 1) * float(_radial_factor(d, k * x_norm)) / (2 * a * k ** (2 * a - 1))
    return complex(value, math.pi * residue)


def weighted_norm(field: np.ndarray, s: float, p: float, delta: float, grid: Grid) -> float:
    """Discrete ||<x>^delta (I - Delta)^{s/2} field||_{L^p}."""
    xi = grid.frequency_norm()
    smoothed = np.fft.ifftn((1 + xi ** 2) ** (s / 2) * np.fft.fftn(field))
    r2 = sum(c ** 2 for c in grid.mesh())
    weighted = np.abs((1 + r2) ** (delta / 2) * smoothed)
    return float((np.sum(weighted ** p) * grid.cell_volume) ** (1 / p))


def fourier_side_norm(field: np.ndarray, s: float, delta: float, grid: Grid) -> float:
    """
    (2 pi)^{-d/2} ||(I - Delta_xi)^{delta/2} (<xi>^s field^)||_{L^2} on the frequency lattice.

    The grid must be centred on the origin when delta != 0.
    """
    if delta and not np.allclose(np.asarray(grid.lower), -np.asarray(grid.lengths) / 2):
        raise DomainError("the Fourier-side weighted norm needs a grid centred on the origin")
    axes = grid.frequency_axes()
    xi_mesh = np.meshgrid(*axes, indexing="ij")
    phase = np.exp(-1j * sum(x * lo for x, lo in zip(xi_mesh, grid.lower)))
    xi2 = sum(x ** 2 for x in xi_mesh)
    psi = (1 + xi2) ** (s / 2) * grid.cell_volume * phase * np.fft.fftn(field)
    if delta:
        offsets = np.meshgrid(*[grid.spacing * np.fft.fftfreq(n, d=1.0 / n) for n in grid.shape], indexing="ij")
        t2 = sum(t ** 2 for t in offsets)
        psi = np.fft.fftn((1 + t2) ** (delta / 2) * np.fft.ifftn(psi))
    dxi = np.prod([2 * math.pi / length for length in grid.lengths])
    return float((2 * math.pi) ** (-grid.d / 2) * math.sqrt(np.sum(np.abs(psi) ** 2) * dxi))


def fractional_pde_residual(u: np.ndarray, f_rhs: np.ndarray, q: Optional[np.ndarray], p: ModelParams,
                            grid: Grid, mask: Optional[np.ndarray] = None) -> float:
    """
    Relative L2 residual of (-Delta)^alpha u - k^{2 alpha} u + q u = f, spectral fractional Laplacian.

    The residual is measured relative to ||f|| (or ||k^{2 alpha} u|| when f = 0) on mask.
    """
    xi = grid.frequency_norm()
    lap = np.fft.ifftn(xi ** (2 * p.alpha) * np.fft.fftn(u))
    defect = lap - p.k ** (2 * p.alpha) * u - f_rhs
    if q is not None:
        defect = defect + q * u
    select = np.ones(grid.shape, dtype=bool) if mask is None else mask
    scale = np.linalg.norm(f_rhs[select])
    if scale == 0:
        scale = np.linalg.norm(p.k ** (2 * p.alpha) * u[select])
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(defect[select]) / scale)


def resolvent_decay_probe(solver, phi: np.ndarray, p: ModelParams, s: float, p_exp: float,
                          wavenumbers: Sequence[float], eps: float = 0.1) -> Dict:
    """
    Fit the k-decay of ||H_k phi|| in the surrogate H^{s/p}_{-1/2-eps} norm.

    Args:
        solver: BornSolver whose grid carries phi
        phi: smooth compactly supported test field
        p: model parameters (k is taken from wavenumbers)
        s, p_exp: Sobolev order and integrability exponent
        wavenumbers: sweep, typically dyadic

    Returns:
        dict with fitted_slope, predicted_slope = -2 s (1 - 1/p), wavenumbers and norms
    """
    ks = np.asarray(wavenumbers, dtype=float)
    norms = np.array([
        weighted_norm(solver.apply_resolvent(phi, p.with_k(k)), s / p_exp, 2.0, -0.5 - eps, solver.grid)
        for k in ks
    ])
    slope = float(np.polyfit(np.log(ks), np.log(norms), 1)[0])
    predicted = -2 * s * (1 - 1 / p_exp)
    logger.info("Resolvent decay slope %.3f (predicted %.3f)", slope, predicted)
    return {"fitted_slope": slope, "predicted_slope": predicted, "wavenumbers": ks.tolist(), "norms": norms.tolist()}


def continuum_kernel(m: float, d: int, r) -> np.ndarray:
    """(2 pi)^{-d} int e^{i x.xi} |xi|^{-m} dxi = Gamma((d-m)/2)/(2^m pi^{d/2} Gamma(m/2)) |x|^{m-d}."""
    if not 0 < m < d:
        raise DomainError("the Riesz kernel formula needs 0 < m < d")
    coeff = special.gamma((d - m) / 2) / (2 ** m * math.pi ** (d / 2) * special.gamma(m / 2))
    return coeff * np.asarray(r, dtype=float) ** (m - d)


def resonant_modes(k: float, alpha: float, grid: Grid, pad: int = 1, tol: float = 1e-9) -> np.ndarray:
    """Lattice frequencies with |xi|^{2 alpha} = k^{2 alpha} (relative tol), shape (M, d)."""
    axes = grid.frequency_axes(pad)
    mesh = np.meshgrid(*axes, indexing="ij")
    xi = np.sqrt(sum(c ** 2 for c in mesh))
    hit = np.abs(xi ** (2 * alpha) - k ** (2 * alpha)) <= tol * k ** (2 * alpha)
    return np.stack([c[hit] for c in mesh], axis=-1)


def _quadratic_form(v1: np.ndarray, v2: np.ndarray, density: np.ndarray, grid: Grid) -> complex:
    """sum_{y1, y2} conj(v1(y1)) C_m(y1 - y2) v2(y2) for the lattice covariance C_m."""
    return complex(np.vdot(v1, np.fft.ifftn(density * np.fft.fftn(v2))) / grid.cell_volume)


def f0_cross_moment(spec: SourceSpec, p: ModelParams, x_hat, k: float, tau: float,
                    relation: bool = False) -> complex:
    """
    Exact sampler moment E[conj F0(x, k) F0(x, k + tau)] (or E[F0(-x, k) F0(x, k + tau)]).
    """
    grid = spec.grid
    density = spectral_density(grid, spec.m)
    y_dot = grid.points() @ np.asarray(x_hat, dtype=float)
    y_dot = y_dot.reshape(grid.shape)
    c1 = far_field_constant(p.with_k(k))
    c2 = far_field_constant(p.with_k(k + tau))
    total = 0j
    for envelope, sign in ((spec.phi1, 1.0), (spec.phi2, -1.0 if relation else 1.0)):
        v1 = envelope * np.exp(-1j * k * y_dot)
        v2 = envelope * np.exp(-1j * (k + tau) * y_dot)
        total += sign * _quadratic_form(v1, v2, density, grid)
    constant = c1 * c2 if relation else np.conj(c1) * c2
    return complex(constant * grid.cell_volume ** 2 * total)


def monte_carlo_moments(spec: SourceSpec, p: ModelParams, x_hat, k: float, tau: float,
                        seeds: Sequence[int], threads: int = 1) -> Dict:
    """Sample means and standard errors of the two F0 cross moments over seeds."""
    x_hat = np.asarray(x_hat, dtype=float)
    zetas = np.stack([k * x_hat, (k + tau) * x_hat, -k * x_hat])
    c1 = far_field_constant(p.with_k(k))
    c2 = far_field_constant(p.with_k(k + tau))

    def draw(seed: int) -> np.ndarray:
        f = sample_field(spec, seed).samples
        plus_k, plus_kt, minus_k = fourier_transform_at(f, spec.grid, zetas)
        return np.array([np.conj(c1 * plus_k) * c2 * plus_kt, c1 * minus_k * c2 * plus_kt])

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        samples = np.array(list(pool.map(draw, seeds)))
    n = len(samples)
    mean = samples.mean(axis=0)
    stderr = samples.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(2, np.inf)
    return {"covariance": complex(mean[0]), "relation": complex(mean[1]),
            "covariance_stderr": float(np.abs(stderr[0])), "relation_stderr": float(np.abs(stderr[1])),
            "samples": n}
