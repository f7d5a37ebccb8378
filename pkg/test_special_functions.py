"""
Tests for the complex special functions and the Fox H-function H^{2,1}_{2,4}.
Reference values come from mpmath where an independent evaluation is needed.
"""

import math
import sys
from fractions import Fraction
from pathlib import Path

import mpmath
import numpy as np
import pytest

# Add repo root to path
sys.path.insert(0, str(Path(__file__).parent))

from src.errors import DomainError
from src.special_functions import (
    ContourSpec,
    HParams,
    bessel_j,
    crossover_point,
    fox_h_2124,
    fox_h_asymptotic,
    fox_h_eval,
    gamma_complex,
    h_table,
    mellin_g1,
    mellin_g2,
)


def test_gamma_simple_values():
    assert gamma_complex(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-13)
    assert gamma_complex(1.0) == pytest.approx(1.0, rel=1e-14)


def test_gamma_against_mpmath():
    for z in (2.5 + 3j, -3.7 + 0.2j, 0.1 - 40j, 7.25 + 150j):
        ref = complex(mpmath.gamma(mpmath.mpc(z.real, z.imag)))
        assert abs(gamma_complex(z) - ref) <= 1e-12 * abs(ref), z


def test_gamma_accuracy_on_tall_strip():
    rng = np.random.default_rng(5)
    z = np.concatenate([[0.3 + 199j, -9.5 - 200j, 0.5 + 50.5j],
                        rng.uniform(-10, 10, 40) + 1j * rng.uniform(-200, 200, 40)])
    values = gamma_complex(z)
    for zi, value in zip(z, values):
        ref = complex(mpmath.gamma(mpmath.mpc(zi.real, zi.imag)))
        assert abs(value - ref) <= 1e-13 * abs(ref), zi


def test_gamma_reflection_identities():
    rng = np.random.default_rng(3)
    z = rng.uniform(-10, 10, 100) + 1j * rng.uniform(-50, 50, 100)
    lhs = gamma_complex(z) * gamma_complex(1 - z)
    rhs = np.pi / np.sin(np.pi * z)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=0)
    lhs = gamma_complex(z + 0.5) * gamma_complex(0.5 - z)
    rhs = np.pi / np.cos(np.pi * z)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=0)


@pytest.mark.parametrize("pole", [0.0, -1.0, -7.0])
def test_gamma_pole_is_named(pole):
    with pytest.raises(DomainError, match=str(int(pole))):
        gamma_complex(pole)


def test_bessel_values():
    assert bessel_j(0.0, 0.0) == pytest.approx(1.0)
    assert bessel_j(0.5, math.pi / 2) == pytest.approx(2 / math.pi, rel=1e-12)
    assert abs(bessel_j(0.0, 2.4048255577)) < 1e-9
    x = np.linspace(0.1, 50, 40)
    assert np.allclose(bessel_j(-0.5, x), np.sqrt(2 / (np.pi * x)) * np.cos(x), atol=1e-12)


def test_bessel_rejects_other_orders():
    with pytest.raises(DomainError):
        bessel_j(1.0, 1.0)
    with pytest.raises(DomainError):
        bessel_j(-0.5, 0.0)


def test_mellin_g1_integrals():
    # int_0^inf J_0 = int_0^inf J_{1/2} = 1
    assert mellin_g1(1.0, 2) == pytest.approx(1.0, rel=1e-13)
    assert mellin_g1(1.0, 3) == pytest.approx(1.0, rel=1e-13)


def test_mellin_g2_closed_form():
    assert abs(mellin_g2(0.5, 0.5, 1.0)) < 1e-14
    assert mellin_g2(0.25, 0.5, 2.0) == pytest.approx(-math.pi * 2 ** -0.75, rel=1e-13)
    for alpha, k in ((0.3, 1.7), (0.8, 5.0)):
        assert abs(mellin_g2(alpha, alpha, k)) < 1e-13


def test_mellin_g2_domain():
    with pytest.raises(DomainError):
        mellin_g2(1.5, 0.5, 1.0)
    with pytest.raises(DomainError):
        mellin_g2(0.0 + 1e-10, 0.5, 1.0)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.75, 0.9])
def test_hparams_exact_invariants(d, alpha):
    p = HParams(d=d, alpha=alpha)
    assert p.a_star == 0
    assert p.delta == 1
    assert isinstance(p.delta, Fraction)
    left = set(np.round(p.left_poles(20), 12))
    right = set(np.round(p.right_poles(20), 12))
    assert left.isdisjoint(right)


def test_hparams_validation():
    with pytest.raises(ValueError):
        HParams(d=4, alpha=0.5)
    with pytest.raises(ValueError):
        HParams(d=2, alpha=1.0)


def test_fox_h_domain_errors():
    p = HParams(d=3, alpha=0.75)
    with pytest.raises(DomainError):
        fox_h_2124(0.0, p)
    with pytest.raises(DomainError):
        fox_h_2124(1.0, p, ContourSpec(gamma=2.5))


@pytest.mark.parametrize("d,alpha", [(1, 0.6), (1, 0.3), (2, 0.8), (3, 0.75), (3, 0.9)])
def test_contour_independence(d, alpha):
    p = HParams(d=d, alpha=alpha)
    lo, hi = p.contour_strip()
    g1 = lo + 0.3 * (hi - lo)
    g2 = lo + 0.7 * (hi - lo)
    tol = 1e-11
    for z in (0.3, 1.0, 4.0):
        v1 = fox_h_2124(z, p, ContourSpec(gamma=g1, tol=tol))
        v2 = fox_h_2124(z, p, ContourSpec(gamma=g2, tol=tol))
        assert abs(v1 - v2) <= 10 * tol * max(1.0, abs(v1)), (z, v1, v2)


def test_error_estimate_is_reported():
    value, err = fox_h_eval(2.0, HParams(d=2, alpha=0.6))
    assert value.imag == 0.0
    assert 0 <= err < 1e-8


def test_leading_asymptotic_coefficients():
    z = np.array([7.0, 30.0])
    # d = 2: -(1+i)/sqrt(pi k|x|) multiplies e^{ik|x|}, with k|x| = 2z
    lead = fox_h_asymptotic(z, HParams(d=2, alpha=0.6), mode="leading")
    expected = -(1 + 1j) / np.sqrt(np.pi * 2 * z) * np.exp(2j * z) + (1j - 1) / np.sqrt(np.pi * 2 * z) * np.exp(-2j * z)
    assert np.allclose(lead, expected, rtol=1e-14)
    lead = fox_h_asymptotic(z, HParams(d=3, alpha=0.6), mode="leading")
    expected = -2 / (2 * z * math.sqrt(math.pi)) * (np.exp(2j * z) + np.exp(-2j * z))
    assert np.allclose(lead, expected, rtol=1e-14)


def test_large_argument_matches_contour():
    p = HParams(d=1, alpha=0.6)
    z = 100.0
    contour = fox_h_2124(z, p).real
    lead = fox_h_asymptotic(z, p, mode="leading").real
    assert abs(contour - lead) <= 5 * z ** (-1 - 2 * p.alpha)
    refined = fox_h_asymptotic(z, p).real
    assert abs(contour - refined) < 1e-9


def _fit_slope(z, values):
    return float(np.polyfit(np.log(z), np.log(values), 1)[0])


@pytest.mark.parametrize("d,alpha,window", [(1, 0.6, (20, 200)), (3, 0.75, (8, 40))])
def test_algebraic_decay_slope(d, alpha, window):
    p = HParams(d=d, alpha=alpha)
    z = np.geomspace(*window, 10)
    diff = np.array([abs(fox_h_2124(v, p).real - fox_h_asymptotic(v, p, mode="leading").real) for v in z])
    expected = -(1 + 2 * alpha) if d == 1 else -(3 + 2 * alpha)
    assert abs(_fit_slope(z, diff) - expected) <= 0.3


def test_d2_envelope_slope():
    # the leading-term defect oscillates like cos(2z - pi/4); sample its extrema
    p = HParams(d=2, alpha=0.8)
    n = np.unique(np.geomspace(13, 127, 10).astype(int))
    z = (n * np.pi + np.pi / 4) / 2
    diff = np.array([abs(fox_h_2124(v, p).real - fox_h_asymptotic(v, p, mode="leading").real) for v in z])
    assert abs(_fit_slope(z, diff) + 1.5) <= 0.3


def test_crossover_is_cached_and_consistent():
    z0 = crossover_point(1, 0.6)
    assert z0 == crossover_point(1, 0.6)
    p = HParams(d=1, alpha=0.6)
    for z in (z0, z0 * 1.3, z0 * 2):
        assert abs(fox_h_2124(z, p).real - fox_h_asymptotic(z, p).real) <= 1e-6


def test_table_interpolates_contour():
    table = h_table(1, 0.6)
    z = np.array([0.01, 0.2, 0.77, 1.9, table.crossover * 0.9])
    exact = np.array([fox_h_2124(v, table.params).real for v in z])
    assert np.allclose(table(z), exact, rtol=1e-5, atol=1e-9)


if __name__ == "__main__":
    print("=" * 60)
    print("SPECIAL FUNCTION TESTS")
    print("=" * 60)
    sys.exit(pytest.main([__file__, "-v"]))
