import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from roughpde import drivers as D
from roughpde import paths as P
from roughpde import tensor as T
from roughpde.errors import DriverError


def endpoints(spec, n, offset=0):
    return np.array([D.sample_lift(spec.with_seed(offset + s)).levels[0][-1] for s in range(n)])


def test_determinism_is_bitwise():
    spec = D.DriverSpec(kind="brownian", dim=2, steps=16, seed=123)
    a, b = D.sample_lift(spec), D.sample_lift(spec)
    for u, v in zip(a.levels, b.levels):
        np.testing.assert_array_equal(u, v)
    c = D.sample_lift(spec.with_seed(124))
    assert not np.array_equal(a.levels[0], c.levels[0])


def test_spec_validation():
    for bad in (dict(kind="levy"), dict(steps=1), dict(horizon=0.0), dict(hurst=0.2), dict(eps=-1.0)):
        with pytest.raises(DriverError):
            D.DriverSpec(**bad)


@pytest.mark.parametrize("kind", ["brownian", "fbm", "ou", "bridge", "mcshane"])
def test_lifts_satisfy_path_invariants(kind):
    spec = D.DriverSpec(kind=kind, dim=2, steps=16, seed=5, hurst=0.3, area_c=0.7)
    x = D.sample_lift(spec)
    assert len(x) == 17 and x.horizon == pytest.approx(1.0)
    assert x.max_shuffle_defect() < 1e-12
    for i, j, k in [(0, 3, 16), (2, 9, 11), (5, 5, 12)]:
        assert x.increment(i, k).allclose(T.multiply(x.increment(i, j), x.increment(j, k)), atol=1e-12)


def test_eps_scaling_is_exact_dilation():
    base = D.DriverSpec(kind="brownian", dim=2, steps=32, seed=9)
    for eps in (0.25, 0.01):
        scaled = D.sample_lift(D.DriverSpec(kind="brownian", dim=2, steps=32, seed=9, eps=eps))
        ref = P.dilate_path(math.sqrt(eps), D.sample_lift(base))
        for u, v in zip(scaled.levels, ref.levels):
            np.testing.assert_array_equal(u, v)


def test_eps_zero_is_identity_path():
    x = D.sample_lift(D.DriverSpec(kind="brownian", dim=3, steps=8, eps=0.0))
    assert all(not np.any(lev) for lev in x.levels)


def test_brownian_moments():
    spec = D.DriverSpec(kind="brownian", dim=1, horizon=2.0, steps=2, refinement=1)
    b = endpoints(spec, 10_000)[:, 0]
    assert abs(b.mean()) < 4 * math.sqrt(2.0 / 10_000)
    assert b.var(ddof=1) == pytest.approx(2.0, rel=0.05)


def test_fbm_half_matches_brownian_marginals():
    bm = endpoints(D.DriverSpec(kind="brownian", steps=2, refinement=1), 10_000)[:, 0]
    fb = endpoints(D.DriverSpec(kind="fbm", hurst=0.5, steps=2, refinement=1), 10_000, offset=10_000)[:, 0]
    assert stats.ks_2samp(bm, fb).pvalue > 0.01


def test_fbm_variance_hurst_075():
    x = endpoints(D.DriverSpec(kind="fbm", hurst=0.75, steps=4, refinement=2), 10_000)[:, 0]
    assert x.var(ddof=1) == pytest.approx(1.0, rel=0.05)


def test_fbm_rough_regime_needs_step_three():
    spec = D.DriverSpec(kind="fbm", hurst=0.3, dim=2, steps=8)
    x = D.sample_lift(spec)
    assert 2 / 0.6 < x.p < 4 and x.step == 3


def test_default_p():
    assert D.default_p(D.DriverSpec()) == 2.5
    assert D.default_p(D.DriverSpec(kind="fbm", hurst=0.75)) == 2.0


def test_fbm_fine_grid_cap():
    with pytest.raises(DriverError):
        D.sample_path(D.DriverSpec(kind="fbm", steps=2 ** 13, refinement=1))


def test_mcshane_c_zero_matches_brownian():
    a = D.sample_lift(D.DriverSpec(kind="mcshane", dim=2, steps=16, seed=4))
    b = D.sample_lift(D.DriverSpec(kind="brownian", dim=2, steps=16, seed=4))
    for u, v in zip(a.levels, b.levels):
        np.testing.assert_array_equal(u, v)


def test_mcshane_mean_area():
    c, n = 0.8, 4000
    spec = D.DriverSpec(kind="mcshane", dim=2, steps=4, refinement=16, area_c=c)
    areas = []
    for s in range(n):
        x2 = D.sample_lift(spec.with_seed(s)).levels[1][-1]
        areas.append(0.5 * (x2[0, 1] - x2[1, 0]))
    areas = np.array(areas)
    se = areas.std(ddof=1) / math.sqrt(n)
    assert abs(areas.mean() - c) < 4 * se


def test_mcshane_requires_plane():
    with pytest.raises(DriverError):
        D.sample_lift(D.DriverSpec(kind="mcshane", dim=3))


def test_mcshane_norm_stable_under_refinement():
    norms = [P.holder_norm(D.sample_lift(D.DriverSpec(kind="mcshane", dim=2, steps=64, refinement=r, area_c=0.5)))
             for r in (16, 64)]
    assert np.isfinite(norms).all()
    assert norms[1] == pytest.approx(norms[0], rel=0.25)


def test_bridge_is_pinned():
    x = D.sample_lift(D.DriverSpec(kind="bridge", dim=2, steps=16, seed=3))
    assert np.all(x.levels[0][-1] == 0.0)


def test_ou_theta_zero_couples_to_brownian():
    ou = D.sample_lift(D.DriverSpec(kind="ou", dim=2, theta=0.0, sigma=1.0, steps=16, seed=11))
    bm = D.sample_lift(D.DriverSpec(kind="brownian", dim=2, steps=16, seed=11))
    np.testing.assert_allclose(ou.levels[0], bm.levels[0], atol=1e-12)


def test_ou_variance():
    theta, sigma = 5.0, 0.7
    spec = D.DriverSpec(kind="ou", theta=theta, sigma=sigma, steps=4, refinement=4)
    x = endpoints(spec, 10_000)[:, 0]
    assert x.var(ddof=1) == pytest.approx(sigma ** 2 / (2 * theta), rel=0.05)


def test_cameron_martin_actions():
    zero = P.CameronMartinPath.zero(2, 1.0)
    assert D.action(zero) == 0.0
    assert all(not np.any(lev) for lev in D.lift_cameron_martin(zero).levels)
    v = np.array([0.6, -1.2])
    horizon = 2.0
    line = P.CameronMartinPath.linear(v, horizon)
    assert D.action(line) == pytest.approx(0.5 * v @ v * horizon)
    two = P.CameronMartinPath(np.array([0.0, 1.0, 1.5]), np.array([[0.0], [1.0], [0.0]]))
    assert D.action(two) == pytest.approx(0.5 * 1.0 + 0.5 * 4.0 * 0.5)
    x = D.lift_cameron_martin(line, times=np.linspace(0, horizon, 9))
    np.testing.assert_allclose(x.levels[0][-1], v * horizon, atol=1e-14)
    np.testing.assert_allclose(x.levels[1][-1], np.outer(v, v) * horizon ** 2 / 2, atol=1e-13)


def test_cameron_martin_driver_spec():
    spec = D.DriverSpec(kind="cameron_martin", dim=1, steps=4, cm_times=(0.0, 1.0), cm_values=((0.0,), (2.0,)))
    x = D.sample_lift(spec)
    np.testing.assert_allclose(x.levels[0][:, 0], np.linspace(0, 2, 5), atol=1e-14)


def test_time_space_lift_first_channel_is_time():
    spec = D.DriverSpec(kind="brownian", dim=2, steps=8, seed=2)
    z = D.time_space_lift(spec)
    assert z.dim == 3
    np.testing.assert_allclose(z.levels[0][:, 0], z.times, atol=1e-14)
    np.testing.assert_array_equal(z.levels[0][:, 1:], D.sample_lift(spec).levels[0])


@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 2 ** 20))
def test_trajectory_seed_is_u64_and_invertible(seed, k):
    s = D.trajectory_seed(seed, k)
    assert 0 <= s < 2 ** 64
    assert D.trajectory_seed(s, k) == seed


@settings(max_examples=20)
@given(st.integers(0, 2 ** 32), st.floats(0.0, 4.0))
def test_scaling_property(seed, eps):
    spec = D.DriverSpec(kind="brownian", dim=2, steps=4, refinement=4, seed=seed)
    scaled = D.sample_lift(D.DriverSpec(kind="brownian", dim=2, steps=4, refinement=4, seed=seed, eps=eps))
    ref = P.dilate_path(math.sqrt(eps), D.sample_lift(spec))
    for u, v in zip(scaled.levels, ref.levels):
        np.testing.assert_array_equal(u, v)
