"""
Tests for the Gaussian random source: envelopes, sampling, kernels and the assumption validator.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

# Add repo root to path
sys.path.insert(0, str(Path(__file__).parent))

from src.errors import DomainError, InvalidGeometryError, InvalidSpecError
from src.green_function import ModelParams
from src.grid import Grid, Region
from src.oracle import continuum_kernel
from src.random_source import (
    AssumptionValidator,
    BumpProfile,
    SourceSpec,
    derive_envelopes,
    kernel_eval,
    lattice_covariance,
    required_smoothness,
    sample_field,
    smoothness_order,
    spectral_density,
)

GRID = Grid.centered(1, 256, 4.0)
D_BALL = Region(kind="ball", center=(0.5,), radius=0.4)
U_BALL = Region(kind="ball", center=(-0.5,), radius=0.4)


def make_spec(mu_c_amp=1.0, mu_r_amp=0.5, m=0.9, with_potential=False):
    mu_c = BumpProfile(center=(0.5,), radius=0.4, amplitude=mu_c_amp).symbol(GRID)
    mu_r = BumpProfile(center=(0.5,), radius=0.4, amplitude=mu_r_amp).symbol(GRID)
    q = BumpProfile(center=(-0.5,), radius=0.4, amplitude=5.0).potential(GRID) if with_potential else None
    return SourceSpec(grid=GRID, mu_c=mu_c, mu_r=mu_r, m=m, domain_d=D_BALL,
                      domain_u=U_BALL if with_potential else None, q=q)


def test_envelopes():
    phi1, phi2 = derive_envelopes(np.array([2.0]), np.array([1.0]))
    assert phi1[0] == pytest.approx(math.sqrt(1.5))
    assert phi2[0] == pytest.approx(math.sqrt(0.5))
    phi1, phi2 = derive_envelopes(np.array([1.0]), np.array([1.0]))
    assert phi2[0] == 0.0
    with pytest.raises(InvalidSpecError):
        derive_envelopes(np.array([1.0]), np.array([1.5]))
    with pytest.raises(InvalidSpecError):
        derive_envelopes(np.array([1.0]), np.array([-0.1]))


def test_bump_profile_is_supported_in_region():
    mu = BumpProfile(center=(0.5,), radius=0.4).symbol(GRID)
    x = GRID.points()[:, 0]
    assert np.all(mu[np.abs(x - 0.5) >= 0.4] == 0)
    assert mu.max() == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(ValueError):
        BumpProfile(center=(0.0,), radius=0.2, amplitude=-1.0)


def test_spec_validation():
    with pytest.raises(InvalidSpecError):
        SourceSpec(grid=GRID, mu_c=np.ones(GRID.shape), mu_r=np.zeros(GRID.shape), m=0.9, domain_d=D_BALL)
    with pytest.raises(InvalidSpecError):
        make_spec(m=0.0)
    overlapping = Region(kind="ball", center=(0.2,), radius=0.4)
    q = BumpProfile(center=(0.2,), radius=0.1).potential(GRID)
    spec = make_spec()
    with pytest.raises(InvalidGeometryError):
        SourceSpec(grid=GRID, mu_c=spec.mu_c, mu_r=spec.mu_r, m=0.9, domain_d=D_BALL,
                   domain_u=overlapping, q=q)
    with pytest.raises(InvalidSpecError):
        SourceSpec(grid=GRID, mu_c=spec.mu_c, mu_r=spec.mu_r, m=0.9, domain_d=D_BALL, q=q)


def test_zero_symbols_give_zero_field():
    spec = make_spec(mu_c_amp=0.0, mu_r_amp=0.0)
    assert not np.any(sample_field(spec, 3).samples)


def test_seed_reproducibility():
    spec = make_spec()
    a = sample_field(spec, 11)
    b = sample_field(spec, 11)
    c = sample_field(spec, 12)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)
    assert a.seed == 11
    assert a.spectral_floor == pytest.approx(2 * math.pi / 4.0)


def test_field_supported_in_domain():
    spec = make_spec()
    f = sample_field(spec, 5).samples
    outside = ~D_BALL.mask(GRID)
    assert not np.any(f[outside])


def test_spectral_density_has_no_zero_mode():
    density = spectral_density(GRID, 0.9)
    assert density[0] == 0.0
    assert np.all(density[1:] > 0)


def test_lattice_kernel_homogeneity():
    # the lattice misses a near-constant low-frequency part, so compare differences
    m = 0.5
    grid = Grid.centered(1, 65536, 64.0)
    cov = lattice_covariance(grid, m)
    j1, j2 = int(round(0.5 / grid.spacing)), int(round(1.0 / grid.spacing))
    lattice = cov[j1] - cov[j2]
    continuum = continuum_kernel(m, 1, 0.5) - continuum_kernel(m, 1, 1.0)
    assert lattice == pytest.approx(continuum, rel=2e-2)


def test_kernel_translation_invariance():
    region = Region(kind="box", center=(0.0,), half_widths=(1.5,))
    mu = region.mask(GRID).astype(float)
    spec = SourceSpec(grid=GRID, mu_c=mu, mu_r=np.zeros(GRID.shape), m=0.9, domain_d=region)
    a = kernel_eval("c", spec, (-0.5,), (0.25,))
    b = kernel_eval("c", spec, (0.0,), (0.75,))
    assert a == pytest.approx(b, rel=1e-12)
    assert abs(kernel_eval("r", spec, (-0.5,), (0.25,))) < 1e-14
    assert kernel_eval("c", spec, (-0.5,), (0.25,), principal=True) == pytest.approx(a)


def test_kernel_errors():
    spec = make_spec()
    with pytest.raises(DomainError):
        kernel_eval("c", spec, (0.5,), (0.5,))
    with pytest.raises(ValueError):
        kernel_eval("x", spec, (0.5,), (0.6,))


MC_SEEDS = 10_000
PAIRS = [((0.4,), (0.6,)), ((0.5,), (0.55,)), ((0.3,), (0.7,)), ((0.45,), (0.5,)), ((0.6,), (0.75,))]


@pytest.fixture(scope="module")
def draws():
    spec = make_spec()
    return spec, np.array([sample_field(spec, s).samples for s in range(MC_SEEDS)])


def at(fields, point):
    return fields[(slice(None), *GRID.nearest_index(point))]


def test_empirical_moments_match_kernel(draws):
    spec, fields = draws
    for x, y in PAIRS:
        fx, fy = at(fields, x), at(fields, y)
        for eta, values in (("c", np.conj(fx) * fy), ("r", fx * fy)):
            stderr = values.std(ddof=1) / math.sqrt(len(values))
            assert abs(values.mean() - kernel_eval(eta, spec, x, y)) <= 3 * stderr, (eta, x, y)


def test_field_has_zero_mean(draws):
    spec, fields = draws
    inside = spec.phi2 > 0.1 * spec.phi2.max()
    for part in (fields.real, fields.imag):
        mean = part.mean(axis=0)[inside]
        stderr = part.std(axis=0, ddof=1)[inside] / math.sqrt(MC_SEEDS)
        assert np.max(np.abs(mean) / stderr) < 4.5


def test_marginals_are_gaussian(draws):
    spec, fields = draws
    stationary_sd = math.sqrt(lattice_covariance(GRID, spec.m)[(0,)])
    for point in ((0.3,), (0.5,), (0.7,)):
        i = GRID.nearest_index(point)
        values = at(fields, point)
        for part, envelope in ((values.real, spec.phi1[i]), (values.imag, spec.phi2[i])):
            assert stats.normaltest(part).pvalue > 1e-3
            assert stats.kstest(part / (envelope * stationary_sd), "norm").pvalue > 1e-3


def test_required_smoothness():
    assert required_smoothness(1, 0.8, 0.9) == 0
    assert required_smoothness(3, 0.8, 2.0) == 4
    assert required_smoothness(2, 0.8, 1.2) == math.ceil(2.5 + 1.2 - 1.6)


def test_smoothness_order_separates_smooth_and_rough():
    smooth = BumpProfile(center=(-0.5,), radius=0.4).potential(GRID)
    rough = U_BALL.mask(GRID).astype(complex)
    assert smoothness_order(rough, GRID) == 0
    assert smoothness_order(smooth, GRID) > smoothness_order(rough, GRID)
    assert smoothness_order(np.zeros(GRID.shape), GRID) == 8


def test_validator_accepts_default_model():
    spec = make_spec(with_potential=True)
    ok, message, report = AssumptionValidator().validate_assumption(
        ModelParams(d=1, alpha=0.8, m=0.9), spec, k_max=20.0, tau_max=1.0)
    assert ok, message
    assert report["m_range"]["passed"]
    assert report["separation"]["passed"]
    assert report["nyquist"]["passed"]


def test_validator_rejects_small_alpha():
    ok, message, report = AssumptionValidator().validate_assumption(ModelParams(d=1, alpha=0.2), make_spec())
    assert not ok
    assert not report["alpha_range"]["passed"]
    assert "alpha_range" in message


def test_validator_m_threshold_d2():
    grid = Grid.centered(2, 32, 4.0)
    region = Region(kind="ball", center=(0.5, 0.0), radius=0.4)
    mu = BumpProfile(center=(0.5, 0.0), radius=0.4).symbol(grid)
    validator = AssumptionValidator()
    p = ModelParams(d=2, alpha=0.5)
    for m, expected in ((1.4, False), (1.6, True)):
        spec = SourceSpec(grid=grid, mu_c=mu, mu_r=np.zeros(grid.shape), m=m, domain_d=region)
        ok, _, report = validator.validate_assumption(p, spec)
        assert report["m_range"]["passed"] is expected
        assert ok is expected


def test_validator_nyquist_and_warnings():
    spec = make_spec()
    ok, message, report = AssumptionValidator().validate_assumption(
        ModelParams(d=1, alpha=0.8), spec, k_max=GRID.nyquist, tau_max=0.0)
    assert not ok
    assert "nyquist" in message
    # a warning-level condition does not fail the check
    ok, message, report = AssumptionValidator().validate_assumption(ModelParams(d=1, alpha=0.3), make_spec(m=0.2))
    assert report["direct_m_range"]["severity"] == "warning"
    assert not report["direct_m_range"]["passed"]
    assert "direct_m_range" not in message


if __name__ == "__main__":
    print("=" * 60)
    print("RANDOM SOURCE TESTS")
    print("=" * 60)
    sys.exit(pytest.main([__file__, "-v"]))
