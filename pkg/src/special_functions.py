"""
Complex special functions for the fractional Helmholtz kernels.

Contains the complex Gamma function, the Bessel orders used by the radial
Fourier representation, the Mellin transforms g_1/g_2 and the Fox
H-function H^{2,1}_{2,4}(z) evaluated by Mellin-Barnes quadrature, with an
asymptotic expansion for large arguments and a cached table for fast
vectorised evaluation.
"""
import logging
import math
import threading
from fractions import Fraction
from typing import Dict, Optional, Tuple, Union

import mpmath
import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy import special
from scipy.interpolate import CubicSpline

from src.errors import AccuracyError, DomainError

logger = logging.getLogger(__name__)

ArrayOrScalar = Union[float, np.ndarray]

# Agreement required between contour and asymptotic values at the crossover
CROSSOVER_TOL = 1e-8
SUPPORTED_BESSEL_ORDERS = (-0.5, 0.0, 0.5)
# |Im z| above which gamma_complex evaluates in extended precision
GAMMA_FAR_IMAG = 20.0

_warned_strips = set()


class HParams(BaseModel):
    """Parameters of H^{2,1}_{2,4} for dimension d and fractional order alpha."""

    model_config = ConfigDict(frozen=True)

    d: int
    alpha: float

    @field_validator("d")
    @classmethod
    def _check_d(cls, value: int) -> int:
        if value not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")
        return value

    @field_validator("alpha")
    @classmethod
    def _check_alpha(cls, value: float) -> float:
        if not 0 < value < 1:
            raise ValueError("alpha must lie in (0, 1)")
        return value

    def _exact(self) -> Tuple[Fraction, Fraction]:
        return Fraction(self.d), Fraction(self.alpha)

    def _pairs(self):
        d, al = self._exact()
        inv = 1 / (2 * al)
        a = ((1 - d * inv, inv), (Fraction(1, 2) - d * inv, inv))
        b = (
            (Fraction(0), Fraction(1, 2)),
            (1 - d * inv, inv),
            (1 - d / 2, Fraction(1, 2)),
            (Fraction(1, 2) - d * inv, inv),
        )
        return a, b

    @property
    def a(self) -> Tuple[Tuple[float, float], ...]:
        """(a_i, alpha_i) for i = 1, 2."""
        return tuple((float(x), float(y)) for x, y in self._pairs()[0])

    @property
    def b(self) -> Tuple[Tuple[float, float], ...]:
        """(b_j, beta_j) for j = 1..4."""
        return tuple((float(x), float(y)) for x, y in self._pairs()[1])

    @property
    def a_star(self) -> Fraction:
        a, b = self._pairs()
        return a[0][1] - a[1][1] + b[0][1] + b[1][1] - b[2][1] - b[3][1]

    @property
    def delta(self) -> Fraction:
        a, b = self._pairs()
        return sum(y for _, y in b) - sum(y for _, y in a)

    def left_poles(self, count: int = 8) -> np.ndarray:
        """Poles of Gamma(b_j + beta_j s), j = 1, 2: {-2l} and {d - 2 alpha - 2 alpha l}."""
        l = np.arange(count)
        poles = np.concatenate([-2.0 * l, self.d - 2 * self.alpha - 2 * self.alpha * l])
        return np.sort(poles)[::-1]

    def right_poles(self, count: int = 8) -> np.ndarray:
        """Poles of Gamma(1 - a_1 - alpha_1 s): {d + 2 alpha k}."""
        return self.d + 2 * self.alpha * np.arange(count)

    @property
    def strip(self) -> Tuple[float, float]:
        return max(self.d - 2 * self.alpha, 0.0), self.d / 2 + 0.5

    def contour_strip(self) -> Tuple[float, float]:
        """Admissible abscissae; falls back to the pole-separating strip when empty."""
        lo, hi = self.strip
        if lo < hi:
            return lo, hi
        return lo, float(self.d)

    def default_gamma(self) -> float:
        lo, hi = self.contour_strip()
        return 0.5 * (lo + hi)

    def pole_distance(self, gamma: float) -> float:
        lo = max(self.d - 2 * self.alpha, 0.0)
        return min(gamma - lo, self.d - gamma)


class ContourSpec(BaseModel):
    """Quadrature controls for the Mellin-Barnes contour."""

    gamma: float
    half_height: float = 0.0  # initial truncation; 0 picks one from z
    step: float = 0.0  # initial spacing; 0 picks one from the pole distance
    tol: float = 1e-12
    bend: float = 2.0
    max_refinements: int = 8
    max_extensions: int = 12

    @field_validator("tol")
    @classmethod
    def _check_tol(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("tol must be positive")
        return value

    @classmethod
    def default(cls, p: HParams, **overrides) -> "ContourSpec":
        return cls(gamma=p.default_gamma(), **overrides)


def gamma_complex(z):
    """
    Complex Gamma function.

    Args:
        z: complex scalar or array, not a non-positive integer

    Returns:
        Gamma(z) with the same shape as z
    """
    arr = np.asarray(z, dtype=complex)
    on_axis = np.abs(arr.imag) == 0
    pole = on_axis & (arr.real <= 0) & (arr.real == np.round(arr.real))
    if np.any(pole):
        bad = arr[pole].ravel()[0].real
        raise DomainError(f"Gamma has a pole at z = {int(bad)}")
    out = np.atleast_1d(np.exp(special.loggamma(arr)))
    # the phase Im log Gamma grows like |Im z| log|Im z| and loses digits in double precision
    far = np.atleast_1d(np.abs(arr.imag) > GAMMA_FAR_IMAG)
    if np.any(far):
        with mpmath.workdps(30):
            out[far] = [complex(mpmath.gamma(mpmath.mpc(v.real, v.imag))) for v in np.atleast_1d(arr)[far]]
    return complex(out[0]) if np.ndim(z) == 0 else out


def bessel_j(nu: float, x: ArrayOrScalar) -> ArrayOrScalar:
    """Bessel function J_nu for the orders d/2 - 1 with d = 1, 2, 3."""
    if not any(abs(nu - o) < 1e-14 for o in SUPPORTED_BESSEL_ORDERS):
        raise DomainError(f"unsupported Bessel order nu = {nu}; expected one of {SUPPORTED_BESSEL_ORDERS}")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise DomainError("bessel_j requires x >= 0")
    if nu < 0 and np.any(arr == 0):
        raise DomainError("J_{-1/2} is singular at x = 0")
    out = special.jv(nu, arr)
    return float(out) if np.ndim(x) == 0 else out


def mellin_g1(s: complex, d: int) -> complex:
    """Mellin transform of J_{d/2-1}: 2^{s-1} Gamma(d/4 + s/2 - 1/2) / Gamma(d/4 - s/2 + 1/2)."""
    s = complex(s)
    log_val = (s - 1) * math.log(2) + special.loggamma(d / 4 + s / 2 - 0.5) - special.loggamma(d / 4 - s / 2 + 0.5)
    return complex(np.exp(log_val))


def mellin_g2(s: complex, alpha: float, k: float) -> complex:
    """
    Principal-value Mellin transform of (x^{2 alpha} - k^{2 alpha})^{-1}.

    Returns -(pi / 2 alpha) k^{s - 2 alpha} cot(pi s / 2 alpha) for Re s in (0, 2 alpha).
    """
    s = complex(s)
    if not 0 < s.real < 2 * alpha:
        raise DomainError(f"mellin_g2 needs Re s in (0, {2 * alpha}), got {s}")
    ratio = s / (2 * alpha)
    if abs(ratio - round(ratio.real)) < 1e-8:
        raise DomainError(f"s = {s} is on a cotangent pole")
    cot = np.cos(np.pi * ratio) / np.sin(np.pi * ratio)
    return complex(-(np.pi / (2 * alpha)) * k ** (s - 2 * alpha) * cot)


def log_mellin_kernel(s: np.ndarray, p: HParams) -> np.ndarray:
    """log of the Mellin-Barnes integrand H^{2,1}_{2,4}(s), any branch."""
    s = np.asarray(s, dtype=complex)
    (a1, al1), (a2, al2) = p.a
    (b1, be1), (b2, be2), (b3, be3), (b4, be4) = p.b
    num = special.loggamma(b1 + be1 * s) + special.loggamma(b2 + be2 * s) + special.loggamma(1 - a1 - al1 * s)
    den = special.loggamma(a2 + al2 * s) + special.loggamma(1 - b3 - be3 * s) + special.loggamma(1 - b4 - be4 * s)
    return num - den


def mellin_kernel(s, p: HParams):
    """Mellin-Barnes integrand H^{2,1}_{2,4}(s)."""
    val = np.exp(log_mellin_kernel(s, p))
    val = np.where(np.isfinite(val), val, 0.0)
    return complex(val) if np.ndim(s) == 0 else val


def _contour_integral(z: float, p: HParams, c: ContourSpec) -> Tuple[float, float]:
    """
    Trapezoidal quadrature of (1/2 pi i) int H(s) z^{-s} ds.

    The contour leaves the real axis at s = gamma and bends into the left
    half-plane along s(u) = gamma - delta (sqrt(u^2 + 1) - 1) + i u, so the
    integrand decays super-exponentially. Conjugate symmetry reduces the
    integral to u >= 0.
    """
    log_z = math.log(z)
    width = 1.0
    delta = min(1.0, c.bend / z)
    dist = min(p.pole_distance(c.gamma), 0.9 * width)
    h = c.step or 2 * math.pi * 0.8 * dist / (math.log(1 / c.tol) + 6)
    half_height = c.half_height or 20.0 + 12.0 * z

    def integrand(u: np.ndarray) -> np.ndarray:
        root = np.sqrt(u * u + width * width)
        s = c.gamma - delta * (root - width) + 1j * u
        ds = 1.0 + 1j * delta * u / root  # (ds/du) / i
        g = np.exp(log_mellin_kernel(s, p) - s * log_z) * ds
        return np.where(np.isfinite(g), g, 0.0)

    n = int(math.ceil(half_height / h))
    for _ in range(c.max_extensions):
        g = integrand(h * np.arange(n + 1))
        tail = np.abs(g[-max(n // 10, 1):]).max() * max(1.0, 1.0 / delta)
        scale = max(1.0, abs(h * (0.5 * g[0] + g[1:].sum()).real) / math.pi)
        if tail < 0.1 * c.tol * scale:
            break
        n *= 2
    else:
        partial = h * (0.5 * g[0] + g[1:].sum()).real / math.pi
        raise AccuracyError(
            f"contour tail did not decay for z = {z}",
            partial_value=complex(partial),
            err_est=float(tail),
        )

    total = h * (0.5 * g[0] + g[1:].sum())
    value = total.real / math.pi
    for level in range(c.max_refinements):
        mid = integrand(h * (np.arange(n) + 0.5))
        total = 0.5 * total + 0.5 * h * mid.sum()
        h *= 0.5
        n *= 2
        refined = total.real / math.pi
        err = abs(refined - value)
        value = refined
        logger.debug("contour z=%.4g level=%d h=%.3g err=%.2e", z, level, h, err)
        if err <= c.tol * max(1.0, abs(value)):
            return value, max(err, tail / math.pi)
    raise AccuracyError(
        f"contour quadrature did not converge for z = {z}",
        partial_value=complex(value),
        err_est=float(err),
    )


def fox_h_eval(z: float, p: HParams, c: Optional[ContourSpec] = None) -> Tuple[complex, float]:
    """H^{2,1}_{2,4}(z) by contour quadrature, with its error estimate."""
    if z <= 0:
        raise DomainError(f"fox_h_2124 requires z > 0, got {z}")
    c = c or ContourSpec.default(p)
    lo, hi = p.contour_strip()
    if not lo < c.gamma < hi:
        raise DomainError(f"contour abscissa {c.gamma} outside the admissible strip ({lo}, {hi})")
    if p.strip[0] >= p.strip[1] and (p.d, p.alpha) not in _warned_strips:
        _warned_strips.add((p.d, p.alpha))
        logger.warning(
            "empty convergence strip for d=%d alpha=%.3f; using pole-separating strip (%.3f, %.3f)",
            p.d, p.alpha, lo, hi,
        )
    value, err = _contour_integral(float(z), p, c)
    return complex(value, 0.0), err


def fox_h_2124(z: float, p: HParams, c: Optional[ContourSpec] = None) -> complex:
    """H^{2,1}_{2,4}(z) for z > 0 by Mellin-Barnes quadrature."""
    return fox_h_eval(z, p, c)[0]


def _oscillatory_part(z: np.ndarray, d: int) -> np.ndarray:
    if d == 1:
        return 2 / math.sqrt(math.pi) * np.sin(2 * z)
    if d == 2:
        return 2 * special.y0(2 * z)
    return -2 / math.sqrt(math.pi) * np.cos(2 * z) / z


def _leading_terms(z: np.ndarray, d: int) -> np.ndarray:
    e_out = np.exp(2j * z)
    e_in = np.exp(-2j * z)
    root_pi = math.sqrt(math.pi)
    if d == 1:
        return -1j / root_pi * e_out + 1j / root_pi * e_in
    if d == 2:
        amp = 1 / np.sqrt(2 * math.pi * z)
        return -(1 + 1j) * amp * e_out + (1j - 1) * amp * e_in
    return -2 / (2 * z * root_pi) * (e_out + e_in)


def algebraic_tail(z: ArrayOrScalar, p: HParams, max_terms: int = 60) -> Tuple[np.ndarray, np.ndarray]:
    """
    Optimally truncated algebraic series (2 alpha / pi) sum_j Gamma(d/2 + alpha j) / Gamma(-alpha j) z^{-d - 2 alpha j}.

    Returns:
        (tail values, truncation error estimates)
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    x = p.alpha * np.arange(1, max_terms + 1)
    log_env = (
        special.gammaln(p.d / 2 + x)[None, :]
        + special.gammaln(1 + x)[None, :]
        - (p.d + 2 * x)[None, :] * np.log(z)[:, None]
    )
    cut = np.argmin(log_env, axis=1)
    keep = np.arange(max_terms)[None, :] <= cut[:, None]
    coeff = 2 * p.alpha / math.pi ** 2
    terms = -coeff * np.sin(np.pi * x)[None, :] * np.exp(np.where(keep, log_env, -np.inf))
    tail = terms.sum(axis=1)
    err = coeff * np.exp(log_env[np.arange(len(z)), cut])
    return tail, err


def fox_h_asymptotic(z: ArrayOrScalar, p: HParams, mode: str = "refined", with_error: bool = False):
    """
    Large-argument form of H^{2,1}_{2,4}(z).

    mode="leading" gives the dominant oscillatory exponentials; mode="refined"
    adds the exact Bessel/trigonometric oscillatory part and the algebraic
    tail series.
    """
    arr = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(arr <= 0):
        raise DomainError("fox_h_asymptotic requires z > 0")
    if mode == "leading":
        value = _leading_terms(arr, p.d)
        order = {1: 1 + 2 * p.alpha, 2: 1.5, 3: 3 + 2 * p.alpha}[p.d]
        err = arr ** (-order)
    elif mode == "refined":
        tail, err = algebraic_tail(arr, p)
        value = _oscillatory_part(arr, p.d) + tail + 0j
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if np.ndim(z) == 0:
        value, err = complex(value[0]), float(err[0])
    return (value, err) if with_error else value


_crossover_cache: Dict[Tuple[int, float, float], float] = {}
_crossover_lock = threading.Lock()


def crossover_point(d: int, alpha: float, tol: float = CROSSOVER_TOL) -> float:
    """
    Smallest scanned z beyond which contour and refined asymptotic agree to tol.

    Computed once per (d, alpha) and cached.
    """
    key = (d, float(alpha), float(tol))
    with _crossover_lock:
        if key in _crossover_cache:
            return _crossover_cache[key]
        p = HParams(d=d, alpha=alpha)
        scan = np.geomspace(0.5, 64.0, 48)
        contour = np.array([fox_h_2124(z, p).real for z in scan])
        asym = fox_h_asymptotic(scan, p).real
        scale = scan ** (-(d - 1) / 2)
        agree = np.abs(contour - asym) <= tol * scale
        crossover = float(scan[-1])
        for i in range(len(scan)):
            if np.all(agree[i:]):
                crossover = float(scan[i])
                break
        else:
            logger.warning("no contour/asymptotic agreement to %.1e for d=%d alpha=%.3f", tol, d, alpha)
        logger.info("crossover for d=%d alpha=%.3f at z=%.3f", d, alpha, crossover)
        _crossover_cache[key] = crossover
        return crossover


class HTable:
    """Cubic-spline table of H^{2,1}_{2,4} below the crossover, asymptotic above."""

    def __init__(self, p: HParams, z_lo: float = 1e-4, step: float = 0.02, n_geometric: int = 160):
        self.params = p
        self.z_lo = z_lo
        self.crossover = crossover_point(p.d, p.alpha)
        nodes = np.concatenate([
            np.geomspace(z_lo, 0.5, n_geometric, endpoint=False),
            np.arange(0.5, self.crossover + 2 * step, step),
        ])
        values = np.array([fox_h_2124(z, p).real for z in nodes])
        self._spline = CubicSpline(np.log(nodes), values)
        self.z_hi = float(nodes[-1])
        logger.info("H table for d=%d alpha=%.3f: %d nodes up to z=%.2f", p.d, p.alpha, len(nodes), self.z_hi)

    def __call__(self, z: ArrayOrScalar) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        out = np.empty(z.shape, dtype=float)
        low = z < self.z_lo
        high = z >= self.crossover
        mid = ~low & ~high
        if np.any(mid):
            out[mid] = self._spline(np.log(z[mid]))
        if np.any(high):
            out[high] = fox_h_asymptotic(z[high], self.params).real
        if np.any(low):
            out[low] = [fox_h_2124(v, self.params).real for v in z[low]]
        return out


_table_cache: Dict[Tuple[int, float], HTable] = {}
_table_lock = threading.Lock()


def h_table(d: int, alpha: float) -> HTable:
    """Shared HTable for (d, alpha), built on first use."""
    key = (d, float(alpha))
    with _table_lock:
        table = _table_cache.get(key)
        if table is None:
            table = HTable(HParams(d=d, alpha=alpha))
            _table_cache[key] = table
        return table
