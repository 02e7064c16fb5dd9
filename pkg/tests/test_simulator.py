import math

import numpy as np
import pytest

from illiquid_hjb.errors import DomainError, ParameterError
from illiquid_hjb.model import ModelParams, SuperExponential
from illiquid_hjb.simulator import (PathConfig, TabulatedPolicy, illiquid_moment, merton_policy, perturbation_sweep,
                                    policy_from_grid, simulate_utility)
from illiquid_hjb.solvers import merton_value, solve_ode

PURE = ModelParams().with_(eta=0.0, delta=0.0, mu=0.0)


def test_merton_policy_value_within_sampling_error():
    pol = merton_policy(PURE)
    est = simulate_utility(PURE, None, pol, 1.0, 1.0, PathConfig(dt=2e-3, n_paths=4000, rng_seed=1))
    V = float(merton_value(PURE, 0.0, 1.0, 1.0))
    assert est.flagged == 0 and not est.unreliable
    assert abs(est.mean - V) <= 3 * est.stderr + est.truncation_bound


def test_sampled_liquidation_time_agrees():
    pol = merton_policy(PURE)
    cfg = PathConfig(dt=2e-3, n_paths=4000, rng_seed=1)
    a = simulate_utility(PURE, None, pol, 1.0, 1.0, cfg)
    b = simulate_utility(PURE, None, pol, 1.0, 1.0, cfg, sample_T=True)
    assert abs(a.mean - b.mean) <= 3 * math.hypot(a.stderr, b.stderr)
    with pytest.raises(ParameterError):
        simulate_utility(PURE, SuperExponential(0.3, 0.5), pol, 1.0, 1.0, cfg, sample_T=True)


def test_deterministic_given_seed():
    pol = merton_policy(PURE)
    cfg = PathConfig(dt=1e-2, n_paths=200, rng_seed=9)
    a = simulate_utility(PURE, None, pol, 1.0, 1.0, cfg)
    b = simulate_utility(PURE, None, pol, 1.0, 1.0, cfg)
    c = simulate_utility(PURE, None, pol, 1.0, 1.0, PathConfig(dt=1e-2, n_paths=200, rng_seed=10))
    assert a.mean == b.mean and a.stderr == b.stderr and a.mean != c.mean


def test_overconsumption_is_flagged():
    z = np.exp(np.linspace(-3, 3, 64))
    greedy = TabulatedPolicy(-3.0, 6.0 / 63, 0 * z, 5.0 * (z + 1.0), 1.0)
    est = simulate_utility(ModelParams(), None, greedy, 1.0, 1.0, PathConfig(dt=1e-2, n_paths=100))
    assert est.flagged == 100 and est.unreliable


def test_illiquid_moment_matches_drift():
    p = ModelParams()
    times = np.array([0.5, 1.0, 2.0])
    m, s = illiquid_moment(p, 1.5, times, dt=1e-2, n_paths=20_000, seed=3)
    expect = 1.5 * (1 + (p.mu - p.delta) * 1e-2) ** np.rint(times / 1e-2)
    assert np.all(np.abs(m - expect) <= 4 * s)


def test_sweep_shape_and_center():
    pol = merton_policy(PURE)
    res = perturbation_sweep(PURE, None, pol, 1.0, 1.0, PathConfig(dt=1e-2, n_paths=400, rng_seed=5),
                             pi_scales=(0.5, 1.0), c_scales=(1.0, 2.0, 3.0))
    assert res.means.shape == (2, 3) and res.center() == (1, 0)
    assert res.diff_stderrs[1, 0] == 0.0
    header, rows = res.rows()
    assert len(rows) == 6 and header[0] == "pi_scale"
    assert res.center_not_beaten()
    with pytest.raises(ParameterError):
        perturbation_sweep(PURE, None, pol, 1.0, 1.0, PathConfig(n_paths=2), pi_scales=(0.9, 1.1))


def test_tabulated_policy_interpolation_and_rays():
    z = np.exp(np.linspace(-1, 1, 5))
    pol = TabulatedPolicy(-1.0, 0.5, 2.0 * (z + 2.0), 0.1 * (z + 2.0), 2.0)
    h = np.array([1.0, 2.0])
    pi, c = pol(np.array([1.0, 2.0]), h)
    assert np.allclose(pi, 2.0 * (1.0 + 2.0) * h, rtol=1e-12)
    # homogeneous of degree one and exact on affine data outside the grid
    pi, c = pol(np.array([0.01, 50.0]), np.array([1.0, 1.0]))
    assert np.allclose(pi, 2.0 * (np.array([0.01, 50.0]) + 2.0), rtol=1e-12)
    assert np.allclose(pol.z, z)


def test_policy_from_grid_uses_interior_nodes():
    g = solve_ode("HARA_EXP_H8_ODE", n=128, left_bc="income")
    pol = policy_from_grid(g)
    assert len(pol.p) == 126 and pol.shift == 0.0
    assert np.all(pol.q > 0)


def test_config_validation():
    with pytest.raises(ParameterError):
        PathConfig(dt=0.0)
    with pytest.raises(ParameterError):
        PathConfig(n_paths=3)
    with pytest.raises(ParameterError):
        PathConfig(t_max=1.0).horizon(SuperExponential(0.3, 0.5))
    with pytest.raises(DomainError):
        simulate_utility(PURE, None, merton_policy(PURE), -1.0, 1.0, PathConfig(n_paths=2))
    with pytest.raises(ParameterError):
        simulate_utility(PURE, None, merton_policy(PURE), 1.0, 1.0, PathConfig(n_paths=2), utility="cara")
