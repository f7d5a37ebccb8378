"""
Radiating Green's function of the fractional Helmholtz operator.

G^k = G^{k,delta} + C~ G^{k,0}: the principal-value part G^{k,delta} comes from
the Fox H-function, the homogeneous correction removes the incoming wave.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy import special

from src.errors import DomainError
from src.special_functions import (
    ContourSpec,
    HParams,
    crossover_point,
    fox_h_asymptotic,
    fox_h_eval,
    h_table,
)

logger = logging.getLogger(__name__)

GREEN_METHODS = ("contour", "asymptotic", "hybrid")

# Admissibility thresholds m_{d,alpha} = M_OFFSET[d] - 2 alpha and alpha_d
M_OFFSET = {1: 1.5, 2: 2.5, 3: 3.75}
ALPHA_MIN = {1: 0.25, 2: 0.25, 3: 0.375}


class ModelParams(BaseModel):
    """Dimension, fractional order, source order and wavenumber."""

    model_config = ConfigDict(frozen=True)

    d: int
    alpha: float
    m: Optional[float] = None
    k: float = 1.0

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

    @field_validator("k")
    @classmethod
    def _check_k(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("wavenumber must be positive")
        return value

    def with_k(self, k: float) -> "ModelParams":
        return ModelParams(d=self.d, alpha=self.alpha, m=self.m, k=k)

    @property
    def h_params(self) -> HParams:
        return HParams(d=self.d, alpha=self.alpha)

    @property
    def m_critical(self) -> float:
        return M_OFFSET[self.d] - 2 * self.alpha

    @property
    def alpha_critical(self) -> float:
        return ALPHA_MIN[self.d]

    def inversion_admissible(self) -> bool:
        return self.m is not None and self.m_critical < self.m < self.d and self.alpha > self.alpha_critical

    def direct_admissible(self) -> bool:
        return self.m is not None and self.d - 2 * self.alpha < self.m < self.d


@dataclass(frozen=True)
class GreenEval:
    """Green's function value with the method used and an error estimate."""

    value: complex
    method: str
    err_est: float

    def __post_init__(self):
        if self.method not in GREEN_METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not (math.isfinite(self.err_est) and self.err_est >= 0):
            raise ValueError("err_est must be finite and non-negative")


def green_prefactor(p: ModelParams) -> float:
    """-2^{-d-1} pi^{1-d/2} alpha^{-1} k^{d-2 alpha}."""
    d, a = p.d, p.alpha
    return -(2.0 ** (-d - 1)) * math.pi ** (1 - d / 2) / a * p.k ** (d - 2 * a)


def far_field_coefficient(d: int, alpha: float, k: float) -> complex:
    """C_{k,d,alpha} without parameter validation (allows alpha = 1)."""
    if d == 1:
        return 1j * k ** (1 - 2 * alpha) / (2 * alpha)
    if d == 2:
        return (1 + 1j) * k ** (1.5 - 2 * alpha) / (4 * alpha * math.sqrt(math.pi))
    if d == 3:
        return k ** (2 - 2 * alpha) / (4 * math.pi * alpha) + 0j
    raise DomainError(f"unsupported dimension {d}")


def far_field_constant(p: ModelParams) -> complex:
    """Coefficient of |x|^{(1-d)/2} e^{ik|x|} in the far field of G^k."""
    return far_field_coefficient(p.d, p.alpha, p.k)


def outgoing_correction_constant(p: ModelParams) -> complex:
    """C~_{k,d,alpha} multiplying G^{k,0}."""
    k, a = p.k, p.alpha
    if p.d == 1:
        return 1j * k ** (1 - 2 * a) / (2 * a)
    if p.d == 2:
        return 1j * k ** (2 - 2 * a) / (4 * a)
    return 1j * k ** (2 - 2 * a) / (4 * math.pi * a)


def decay_exponent(d: int, alpha: float) -> float:
    """N_d: decay order of G^k minus its outgoing leading term."""
    return {1: 1 + 2 * alpha, 2: 1.5, 3: 3 + 2 * alpha}[d]


def green_homogeneous(x_norm, p: ModelParams):
    """G^{k,0}: cos(k|x|), J_0(k|x|) or sin(k|x|)/|x| for d = 1, 2, 3."""
    r = np.asarray(x_norm, dtype=float)
    kr = p.k * r
    if p.d == 1:
        out = np.cos(kr)
    elif p.d == 2:
        out = special.j0(kr)
    else:
        small = kr < 1e-4
        safe = np.where(small, 1.0, r)
        out = np.where(small, p.k * (1 - kr ** 2 / 6), np.sin(kr) / safe)
    return complex(out) if np.ndim(x_norm) == 0 else out.astype(complex)


def green_delta(x_norm: float, p: ModelParams, c: Optional[ContourSpec] = None) -> GreenEval:
    """
    Principal-value Green's function G^{k,delta}(x).

    Args:
        x_norm: |x| > 0
        p: model parameters
        c: contour controls (defaults to the midpoint abscissa)

    Returns:
        GreenEval with method "contour"
    """
    if x_norm <= 0:
        raise DomainError("G^{k,delta} is singular at x = 0")
    pre = green_prefactor(p)
    h_value, err = fox_h_eval(p.k * x_norm / 2, p.h_params, c)
    return GreenEval(value=complex(pre * h_value.real), method="contour", err_est=abs(pre) * err)


def green(x_norm: float, p: ModelParams) -> GreenEval:
    """Radiating Green's function G^k(x), contour below the crossover, asymptotic above."""
    if x_norm <= 0:
        raise DomainError("G^k is singular at x = 0")
    z = p.k * x_norm / 2
    pre = green_prefactor(p)
    correction = outgoing_correction_constant(p) * green_homogeneous(x_norm, p)
    if z >= crossover_point(p.d, p.alpha):
        h_value, err = fox_h_asymptotic(z, p.h_params, with_error=True)
        method = "asymptotic"
    else:
        h_value, err = fox_h_eval(z, p.h_params)
        method = "contour"
    logger.debug("G^k at k=%g |x|=%g via %s, err %.2e", p.k, x_norm, method, err)
    return GreenEval(value=pre * h_value.real + correction, method=method, err_est=abs(pre) * float(err))


def green_truncated(x_norm, p: ModelParams, correction: str = "displayed"):
    """
    Truncated kernel G^k_N for d = 2, 3.

    correction="displayed" uses C(1, x) = (10 + i)/(32 alpha) sqrt(2/pi) sin(k|x| - pi/4);
    correction="hankel" uses the second Hankel term (1/(32 alpha)) sqrt(2/pi) e^{i(k|x| - pi/4)}.
    """
    if p.d == 1:
        raise DomainError("the truncated kernel is defined for d = 2, 3 only")
    r = np.asarray(x_norm, dtype=float)
    if np.any(r <= 0):
        raise DomainError("G^k_N is singular at x = 0")
    k, a = p.k, p.alpha
    phase = np.exp(1j * k * r)
    if p.d == 3:
        out = k ** (2 - 2 * a) / (4 * math.pi * a * r) * phase
    else:
        lead = (1 + 1j) * k ** (1.5 - 2 * a) / (4 * a * np.sqrt(math.pi * r)) * phase
        if correction == "displayed":
            c1 = (10 + 1j) / (32 * a) * math.sqrt(2 / math.pi) * np.sin(k * r - math.pi / 4)
        elif correction == "hankel":
            c1 = 1 / (32 * a) * math.sqrt(2 / math.pi) * np.exp(1j * (k * r - math.pi / 4))
        else:
            raise ValueError(f"unknown correction {correction!r}")
        out = lead + c1 * k ** (0.5 - 2 * a) * r ** -1.5
    return complex(out) if np.ndim(x_norm) == 0 else out


def green_kernel(r: np.ndarray, p: ModelParams, kind: str = "full", correction: str = "displayed") -> np.ndarray:
    """
    Vectorised kernel values at radii r > 0.

    kind: "full" (G^k), "delta" (G^{k,delta}), "homogeneous" (G^{k,0}) or
    "truncated" (G^k_N).
    """
    r = np.asarray(r, dtype=float)
    if kind == "homogeneous":
        return green_homogeneous(r, p) if r.ndim else np.asarray(green_homogeneous(r, p))
    if kind == "truncated":
        return np.asarray(green_truncated(r, p, correction))
    if np.any(r <= 0):
        raise DomainError("kernel radii must be positive")
    table = h_table(p.d, p.alpha)
    values = green_prefactor(p) * table(p.k * r / 2) + 0j
    if kind == "delta":
        return values
    if kind != "full":
        raise ValueError(f"unknown kernel kind {kind!r}")
    return values + outgoing_correction_constant(p) * green_homogeneous(r, p)
