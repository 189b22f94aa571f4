import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dsag.latency import (
    Deterministic,
    GammaParams,
    WorkerProfile,
    comp_load,
    fit_gamma_from_moments,
    pool_profiles,
    sample_total_latency,
    scale_comp_moments,
    scale_dist,
)

positive = st.floats(min_value=1e-6, max_value=1e6, allow_nan=False)


def test_fit_from_moments_examples():
    g = fit_gamma_from_moments(2.0, 2.0)
    assert (g.shape, g.scale) == (2.0, 1.0)
    g = fit_gamma_from_moments(1.0, 1.0)  # exponential special case
    assert (g.shape, g.scale) == (1.0, 1.0)
    g = fit_gamma_from_moments(0.03, 9e-6)
    assert g.shape == pytest.approx(100.0, rel=1e-12)
    assert g.scale == pytest.approx(3e-4, rel=1e-12)


@pytest.mark.parametrize("mean,var", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -2.0)])
def test_fit_rejects_nonpositive_moments(mean, var):
    with pytest.raises(ValueError):
        fit_gamma_from_moments(mean, var)


@given(positive, positive)
def test_moment_round_trip(mean, variance):
    g = fit_gamma_from_moments(mean, variance)
    g2 = fit_gamma_from_moments(g.mean(), g.variance())
    assert math.isclose(g2.shape, g.shape, rel_tol=1e-12)
    assert math.isclose(g2.scale, g.scale, rel_tol=1e-12)


def test_empirical_fit_round_trip(rng):
    g = GammaParams(3.0, 0.2)
    xs = g.sample(rng, size=100_000)
    fitted = fit_gamma_from_moments(float(xs.mean()), float(xs.var(ddof=1)))
    assert fitted.shape == pytest.approx(3.0, rel=0.05)
    assert fitted.scale == pytest.approx(0.2, rel=0.05)


def test_comp_load_examples():
    assert comp_load(0.5, 4, 2, 10) == 80
    assert comp_load(1.0, 1, 1, 1) == 2
    assert comp_load(0.0536, 2504, 3, 1000) == pytest.approx(2 * 0.0536 * 2504 * 3 * 1000)


def test_comp_load_preconditions():
    with pytest.raises(ValueError):
        comp_load(0.0, 2, 2, 2)
    with pytest.raises(ValueError):
        comp_load(1.5, 2, 2, 2)
    with pytest.raises(ValueError):
        comp_load(0.5, 0, 2, 2)


def test_scale_comp_moments_examples():
    assert scale_comp_moments(1.0, 0.04, 2, 4) == (0.5, 0.01)
    assert scale_comp_moments(1.0, 0.04, 2, 2) == (1.0, 0.04)
    e, v = scale_comp_moments(0.022, 1e-6, 100, 50)
    assert e == pytest.approx(0.044, rel=1e-12)
    assert v == pytest.approx(4e-6, rel=1e-12)
    with pytest.raises(ValueError):
        scale_comp_moments(1.0, 0.1, 0, 2)


@given(positive, positive, st.integers(1, 500), st.integers(1, 500))
def test_scale_preserves_coefficient_of_variation(e, v, p_old, p_new):
    e2, v2 = scale_comp_moments(e, v, p_old, p_new)
    assert math.isclose(v2 / e2**2, v / e**2, rel_tol=1e-9)


def test_deterministic_profile_sampling(rng):
    prof = WorkerProfile(0, Deterministic(0.1), Deterministic(0.9), ref_load_c=10.0)
    for _ in range(5):
        assert sample_total_latency(prof, 10.0, rng) == 1.0


def test_sample_mean_scales_linearly_with_load(rng):
    prof = WorkerProfile(
        0, GammaParams(4.0, 0.05), fit_gamma_from_moments(1.0, 0.04), ref_load_c=100.0
    )
    draws = np.array([sample_total_latency(prof, 200.0, rng) for _ in range(100_000)])
    assert draws.mean() == pytest.approx(0.2 + 2.0, rel=0.02)


def test_sample_mean_moment_arithmetic(rng):
    prof = WorkerProfile(0, GammaParams(3, 0.1), GammaParams(9, 0.1), ref_load_c=1.0)
    draws = prof.comm.sample(rng, size=100_000) + prof.comp.sample(rng, size=100_000)
    assert draws.mean() == pytest.approx(1.2, rel=0.02)


def test_mean_affine_in_load(rng):
    # Matches the linear fit through the origin of the computation component.
    comm_mean, comp_mean, ref = 0.3, 1.0, 50.0
    prof = WorkerProfile(
        0,
        fit_gamma_from_moments(comm_mean, 0.01),
        fit_gamma_from_moments(comp_mean, 0.05),
        ref_load_c=ref,
    )
    for load in (25.0, 50.0, 100.0):
        draws = np.array([sample_total_latency(prof, load, rng) for _ in range(60_000)])
        expected = comm_mean + comp_mean * load / ref
        assert draws.mean() == pytest.approx(expected, rel=0.03)


def test_scale_dist_kinds():
    g = scale_dist(GammaParams(2.0, 0.5), 2.0)
    assert (g.shape, g.scale) == (2.0, 1.0)
    d = scale_dist(Deterministic(3.0), 0.5)
    assert d.value == 1.5
    with pytest.raises(ValueError):
        scale_dist(Deterministic(1.0), 0.0)


def test_pool_profiles_matches_global_moments():
    profiles = [
        WorkerProfile(0, GammaParams(4, 0.1), fit_gamma_from_moments(1.0, 0.01)),
        WorkerProfile(1, GammaParams(4, 0.1), fit_gamma_from_moments(3.0, 0.09)),
    ]
    pooled = pool_profiles(profiles)
    assert pooled[0].comp == pooled[1].comp
    assert pooled[0].comp.mean() == pytest.approx(2.0)
    # law of total variance: mean of variances plus variance of means
    assert pooled[0].comp.variance() == pytest.approx(0.05 + 1.0)


def test_zero_total_latency_rejected():
    with pytest.raises(ValueError):
        WorkerProfile(0, Deterministic(0.0), Deterministic(0.0))
