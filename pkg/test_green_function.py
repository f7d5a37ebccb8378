"""
Tests for the radiating Green's function, its far-field constants and the truncated kernel.
"""

import cmath
import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add repo root to path
sys.path.insert(0, str(Path(__file__).parent))

from src.errors import DomainError
from src.green_function import (
    GreenEval,
    ModelParams,
    decay_exponent,
    far_field_coefficient,
    far_field_constant,
    green,
    green_delta,
    green_homogeneous,
    green_kernel,
    green_prefactor,
    green_truncated,
    outgoing_correction_constant,
)
from src.special_functions import crossover_point


def _slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(d=4, alpha=0.5)
    with pytest.raises(ValueError):
        ModelParams(d=2, alpha=0.0)
    with pytest.raises(ValueError):
        ModelParams(d=2, alpha=0.5, k=0.0)


def test_admissibility_thresholds():
    p = ModelParams(d=2, alpha=0.5, m=1.6)
    assert p.m_critical == pytest.approx(1.5)
    assert p.inversion_admissible()
    assert not ModelParams(d=2, alpha=0.5, m=1.4).inversion_admissible()
    assert ModelParams(d=2, alpha=0.5, m=1.4).direct_admissible()
    assert not ModelParams(d=1, alpha=0.2, m=0.9).inversion_admissible()
    assert ModelParams(d=3, alpha=0.8, m=2.5).m_critical == pytest.approx(2.15)


def test_far_field_constants():
    assert far_field_constant(ModelParams(d=1, alpha=0.5, k=2)) == pytest.approx(1j)
    assert far_field_constant(ModelParams(d=2, alpha=0.75, k=4)) == pytest.approx((1 + 1j) / (3 * math.sqrt(math.pi)))
    assert far_field_constant(ModelParams(d=3, alpha=0.5, k=2)) == pytest.approx(1 / math.pi)


def test_classical_helmholtz_limit():
    k = 5.0
    assert far_field_coefficient(3, 1.0, k) == pytest.approx(1 / (4 * math.pi))
    assert far_field_coefficient(1, 1.0, k) == pytest.approx(1j / (2 * k))
    # (i/4) H_0^(1)(kr) ~ (i/4) sqrt(2/(pi k r)) e^{i(kr - pi/4)}
    expected = 0.25j * math.sqrt(2 / (math.pi * k)) * cmath.exp(-1j * math.pi / 4)
    assert far_field_coefficient(2, 1.0, k) == pytest.approx(expected)


def test_outgoing_correction_constant():
    assert outgoing_correction_constant(ModelParams(d=1, alpha=0.5, k=3)) == pytest.approx(1j)
    assert outgoing_correction_constant(ModelParams(d=2, alpha=0.5, k=3)) == pytest.approx(0.75j)


def test_decay_exponents():
    assert decay_exponent(1, 0.6) == pytest.approx(2.2)
    assert decay_exponent(2, 0.6) == 1.5
    assert decay_exponent(3, 0.6) == pytest.approx(4.2)


def test_homogeneous_part():
    assert green_homogeneous(0.0, ModelParams(d=1, alpha=0.5)) == 1
    assert green_homogeneous(0.0, ModelParams(d=3, alpha=0.5, k=2)) == pytest.approx(2.0)
    assert green_homogeneous(1e-9, ModelParams(d=3, alpha=0.5, k=2)) == pytest.approx(2.0)
    assert abs(green_homogeneous(2.4048255577, ModelParams(d=2, alpha=0.5, k=1))) < 1e-9
    r = np.array([0.5, 1.0, 3.0])
    assert np.allclose(green_homogeneous(r, ModelParams(d=3, alpha=0.5, k=2)), np.sin(2 * r) / r)


def test_prefactor_and_scaling():
    p = ModelParams(d=3, alpha=0.5, k=1)
    assert green_prefactor(p) == pytest.approx(-1 / (8 * math.sqrt(math.pi)))
    for d, alpha in ((1, 0.75), (2, 0.6), (3, 0.8)):
        base = green_delta(1.0, ModelParams(d=d, alpha=alpha, k=1.0)).value
        scaled = green_delta(0.5, ModelParams(d=d, alpha=alpha, k=2.0)).value
        assert scaled == pytest.approx(2 ** (d - 2 * alpha) * base, rel=1e-10)


def test_singularities_rejected():
    p = ModelParams(d=2, alpha=0.6)
    with pytest.raises(DomainError):
        green(0.0, p)
    with pytest.raises(DomainError):
        green_delta(0.0, p)
    with pytest.raises(DomainError):
        green_kernel(np.array([0.0, 1.0]), p)


def test_green_eval_contract():
    with pytest.raises(ValueError):
        GreenEval(value=1.0, method="series", err_est=0.0)
    with pytest.raises(ValueError):
        GreenEval(value=1.0, method="contour", err_est=float("nan"))


def test_hybrid_method_selection():
    p = ModelParams(d=1, alpha=0.6, k=1.0)
    z0 = crossover_point(1, 0.6)
    near = green(z0, p)
    far = green(4 * z0, p)
    assert near.method == "contour"
    assert far.method == "asymptotic"
    assert far.err_est >= 0


def test_green_is_radial():
    p = ModelParams(d=3, alpha=0.7, k=2.0)
    x = np.array([0.3, -0.4, 1.2])
    assert green(float(np.linalg.norm(x)), p).value == green(float(np.linalg.norm(-x)), p).value


@pytest.mark.parametrize("d,alpha,window", [(1, 0.6, (10, 1000)), (2, 0.8, (30, 3000)), (3, 0.75, (10, 1000))])
def test_far_field_decay(d, alpha, window):
    p = ModelParams(d=d, alpha=alpha, k=1.0)
    r = np.geomspace(*window, 12)
    coeff = far_field_constant(p)
    defect = np.array([abs(green(x, p).value - coeff * x ** (-(d - 1) / 2) * np.exp(1j * x)) for x in r])
    assert abs(_slope(r, defect) + decay_exponent(d, alpha)) <= 0.3


def test_radiation_condition():
    p = ModelParams(d=2, alpha=0.8, k=1.0)
    scale = abs(green(1.0, p).value)
    h = 1e-3

    def residual(r):
        dg = (green(r + h, p).value - green(r - h, p).value) / (2 * h)
        return abs(math.sqrt(r) * (dg - 1j * p.k * green(r, p).value))

    assert residual(1000.0) <= 1e-2 * scale
    assert residual(1000.0) < residual(100.0)


def test_kernel_matches_pointwise_green():
    p = ModelParams(d=2, alpha=0.6, k=3.0)
    r = np.array([0.05, 0.4, 1.3, 7.0])
    values = green_kernel(r, p)
    exact = np.array([green(x, p).value for x in r])
    assert np.allclose(values, exact, rtol=1e-5)
    delta = green_kernel(r, p, kind="delta")
    assert np.allclose(values - delta, outgoing_correction_constant(p) * green_homogeneous(r, p))


def test_truncated_kernel_values():
    p = ModelParams(d=3, alpha=0.5, k=2.0)
    assert green_truncated(1.0, p) == pytest.approx(cmath.exp(2j) / math.pi)
    with pytest.raises(DomainError):
        green_truncated(1.0, ModelParams(d=1, alpha=0.5))
    with pytest.raises(ValueError):
        green_truncated(1.0, ModelParams(d=2, alpha=0.5), correction="other")


def test_truncated_leading_amplitude_d2():
    # the displayed correction vanishes where sin(k r - pi/4) = 0
    alpha, k = 0.7, 1.0
    r = math.pi / 4 + 2 * math.pi
    value = green_truncated(r, ModelParams(d=2, alpha=alpha, k=k))
    expected = abs(1 + 1j) * k ** (1.5 - 2 * alpha) / (4 * alpha * math.sqrt(math.pi * r))
    assert abs(value) == pytest.approx(expected, rel=1e-12)


def test_truncation_slope_d3():
    x = 1.0
    ks = np.geomspace(20, 200, 10)
    alpha = 0.75
    defect = [abs(green(x, ModelParams(d=3, alpha=alpha, k=k)).value
                  - green_truncated(x, ModelParams(d=3, alpha=alpha, k=k))) for k in ks]
    assert abs(_slope(ks, defect) + 4 * alpha) <= 0.3


def test_truncation_slope_d2_hankel():
    x = 4.0
    ks = np.geomspace(20, 200, 10)
    alpha = 0.8
    defect = [abs(green(x, ModelParams(d=2, alpha=alpha, k=k)).value
                  - green_truncated(x, ModelParams(d=2, alpha=alpha, k=k), correction="hankel")) for k in ks]
    assert abs(_slope(ks, defect) + 0.5 + 2 * alpha) <= 0.3


def _displayed_extrema(x, k_lo, k_hi, count=10):
    # wavenumbers with sin(k x - pi/4) = +-1, where the displayed correction is off by exactly 10 units
    n = np.unique(np.round(np.geomspace(k_lo * x / math.pi, k_hi * x / math.pi, count)))
    return (0.75 * math.pi + n * math.pi) / x


def test_truncation_slope_d2_displayed():
    x, alpha = 4.0, 0.8
    ks = _displayed_extrema(x, 20, 200)
    defect = np.array([abs(green(x, ModelParams(d=2, alpha=alpha, k=k)).value
                           - green_truncated(x, ModelParams(d=2, alpha=alpha, k=k))) for k in ks])
    assert abs(_slope(ks, defect) - (0.5 - 2 * alpha)) <= 0.1
    unit = math.sqrt(2 / math.pi) / (32 * alpha) * ks[-1] ** (0.5 - 2 * alpha) * x ** -1.5
    assert defect[-1] == pytest.approx(10 * unit, rel=0.05)


@pytest.mark.parametrize("correction,extra", [("displayed", 0.0), ("hankel", 1.0)])
def test_truncation_decay_in_distance_d2(correction, extra):
    alpha = 0.8
    p = ModelParams(d=2, alpha=alpha, k=1.0)
    r = _displayed_extrema(1.0, 30, 1000)
    defect = np.array([abs(green(x, p).value - green_truncated(x, p, correction)) for x in r])
    # the displayed form keeps an error of the leading decay order; the Hankel form gains one power
    assert abs(_slope(r, defect) + decay_exponent(2, alpha) + extra) <= 0.2


if __name__ == "__main__":
    print("=" * 60)
    print("GREEN'S FUNCTION TESTS")
    print("=" * 60)
    sys.exit(pytest.main([__file__, "-v"]))
