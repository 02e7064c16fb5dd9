import dataclasses

import numpy as np
import pytest
import sympy as sp

from illiquid_hjb.errors import DegenerateSubstitutionError, NonConcaveJetError, ParameterError
from illiquid_hjb.model import ModelParams
from illiquid_hjb.reductions import (CASE_IDS, ReducedJet, ReducedOperator, _exp, _cH, forward_map, get_case,
                                     inverse_map, pushforward_jet, reduced_policy, reduced_residual,
                                     verify_reduction)

P = ModelParams()
GAUGE_BROKEN = {"HARA_EXP_H5", "LOG_EXP_H5"}


def _sym_master(V, t, l, h, cross_sigma):
    r, al, si, mu, de, et, rh, g, k = [sp.nsimplify(x) for x in
                                        (P.r, P.alpha, P.sigma, P.mu, P.delta, P.eta, P.rho, P.gamma, P.kappa)]
    Vt, Vl, Vh = [sp.diff(V, x) for x in (t, l, h)]
    Vll, Vlh, Vhh = sp.diff(V, l, 2), sp.diff(V, l, h), sp.diff(V, h, 2)
    a = al - r
    cs = si if cross_sigma else 1
    num = a**2 * Vl**2 + 2 * a * et * rh * cs * h * Vl * Vlh + et**2 * rh**2 * si**2 * h**2 * Vlh**2
    src = (1 - g) ** 2 / g * sp.exp(-k * t / (1 - g)) * Vl ** (-g / (1 - g)) - (1 - g) / g * sp.exp(-k * t)
    return Vt + et**2 / 2 * h**2 * Vhh + (r * l + de * h) * Vl + (mu - de) * h * Vh - num / (2 * si**2 * Vll) + src


@pytest.mark.parametrize("cross", ["hjb", "printed"])
def test_ode_reduction_matches_symbolic_chain_rule(cross):
    t, l, h = sp.symbols("t l h", positive=True)
    g, k = sp.nsimplify(P.gamma), sp.nsimplify(P.kappa)
    z0, y = 1.7, (0.3, 0.8, -0.6)
    zz = l / h
    Y = y[0] + y[1] * (zz - z0) + sp.Rational(1, 2) * y[2] * (zz - z0) ** 2
    V = sp.exp(-k * t) * (h**g * Y - (1 - g) / (g * k))
    R = float((_sym_master(V, t, l, h, cross == "hjb") * sp.exp(k * t) * h ** (-g)).subs({t: 0, h: 1, l: z0}))
    case = get_case("HARA_EXP_H8_ODE", cross_term=cross)
    rj = ReducedJet((np.array([z0]),), *[np.array([v]) for v in y])
    assert float(reduced_residual(case, rj, "derived")[0]) == pytest.approx(R, rel=1e-12)


def test_pde_reduction_matches_symbolic_chain_rule():
    t, l, h = sp.symbols("t l h", positive=True)
    g, k = sp.nsimplify(P.gamma), sp.nsimplify(P.kappa)
    z0, tau0 = 1.7, 0.4
    w = [0.2, 0.9, -0.3, -0.7, 0.25, 0.15]  # W, W_z, W_tau, W_zz, W_ztau, W_tautau
    dz, dt = l / h - z0, k / g * t - sp.log(h) - sp.nsimplify(tau0)
    W = w[0] + w[1] * dz + w[2] * dt + sp.Rational(1, 2) * w[3] * dz**2 + w[4] * dz * dt + sp.Rational(1, 2) * w[5] * dt**2
    V = W - (1 - g) / (g * k) * sp.exp(-k * t)
    R = float(_sym_master(V, t, l, h, True).subs({h: 1, t: sp.nsimplify(tau0) * g / k, l: z0}))
    case = get_case("HARA_EXP_H2")
    rj = ReducedJet((np.array([z0]), np.array([tau0])), *[np.array([x]) for x in (w[0], w[1], w[3], w[2], w[4], w[5])])
    assert float(reduced_residual(case, rj, "derived")[0]) == pytest.approx(R, rel=1e-12)


@pytest.mark.parametrize("case_id", ["HARA_EXP_H4_RK", "LOG_EXP_H2", "LOG_EXP_H4_RK"])
def test_exact_printed_forms(case_id):
    rep = verify_reduction(get_case(case_id, cross_term="printed"), n=60, rng=0)
    assert rep.passed and rep.flags == [] and rep.lambda_model_defect <= 1e-10


def test_printed_forms_against_sigma_correct_equation_are_flagged():
    rep = verify_reduction(get_case("LOG_EXP_H2"), n=30, rng=0)
    assert not rep.passed and "W_zz" in rep.flags


@pytest.mark.parametrize("case_id", ["HARA_RES_H11_ODE", "LOG_GEN_H1", "HARA_EXP_H8_ODE"])
def test_suspect_cases_flagged(case_id):
    rep = verify_reduction(get_case(case_id, cross_term="printed"), n=30, rng=1)
    assert not rep.passed and rep.flags


@pytest.mark.parametrize("case_id", [c for c in CASE_IDS if c not in GAUGE_BROKEN])
def test_derived_residual_is_gauge_independent(case_id):
    assert verify_reduction(get_case(case_id), n=20, rng=2).gauge_defect <= 1e-12


def test_h5_offsets_have_wrong_sign():
    # the printed affine parts are not invariant; flipping the sign of B restores invariance
    c = get_case("HARA_EXP_H5")
    assert verify_reduction(c, n=20, rng=3).gauge_defect > 1e-3
    kk = P.kappa - P.r * P.gamma
    fixed = dataclasses.replace(c, affine=lambda t, l, h: (_exp(kk * t) + 0.0 * l, _cH(P) * _exp(-P.r * P.gamma * t) + 0.0 * l))
    assert verify_reduction(fixed, n=20, rng=3).gauge_defect <= 1e-12
    c = get_case("LOG_EXP_H5")
    assert verify_reduction(c, n=20, rng=3).gauge_defect > 1e-3
    fixed = dataclasses.replace(c, affine=lambda t, l, h: (_exp(P.kappa * t) + 0.0 * l, -P.r / P.kappa * t + 0.0 * l))
    assert verify_reduction(fixed, n=20, rng=3).gauge_defect <= 1e-12


@pytest.mark.parametrize("case_id", ["HARA_EXP_H2", "HARA_EXP_H8_ODE", "LOG_EXP_H4_RK", "HARA_RES_H4"])
def test_forward_inverse_round_trip(case_id):
    c = get_case(case_id)
    rng = np.random.default_rng(4)
    t, l, h, V = rng.uniform(0, 2, 8), rng.uniform(0.5, 4, 8), rng.uniform(0.5, 4, 8), rng.uniform(-1, 1, 8)
    pt = forward_map(c, t, l, h, V)
    nv = len(c.var_names)
    gauge_vals = {"t": t, "h": h, "l": l}
    gauge = tuple(gauge_vals[g] for g in c.gauge_names)
    t2, l2, h2, V2 = inverse_map(c, pt[:nv], pt[nv], gauge)
    assert np.allclose([t2, l2, h2, V2], [t, l, h, V], rtol=1e-12, atol=1e-12)


def test_operator_matches_reduced_residual():
    c = get_case("HARA_EXP_H8_ODE")
    z = np.linspace(0.2, 3, 7)
    rj = ReducedJet((z,), np.full(7, 0.4), np.full(7, 0.9), np.full(7, -0.5))
    op = ReducedOperator(c, (z,))
    assert np.allclose(op([rj.W, rj.W_1, rj.W_11]), reduced_residual(c, rj, "derived"), rtol=1e-14)
    pol = reduced_policy(c, rj, which="derived")
    assert np.allclose(op.policy([rj.W, rj.W_1, rj.W_11]).pi, pol.pi)


def test_derived_policy_matches_full_policy():
    from illiquid_hjb.pde import policy
    c = get_case("HARA_EXP_H4_RK")
    rj = ReducedJet((np.array([1.2]), np.array([0.8])), *[np.array([x]) for x in (0.1, 0.7, -0.4, 0.2, 0.05, -0.1)])
    a = reduced_policy(c, rj, which="derived").pi
    assert np.allclose(a, policy(c.spec, pushforward_jet(c, rj)).pi, rtol=1e-14, atol=0)


def test_errors():
    c = get_case("HARA_EXP_H8_ODE")
    with pytest.raises(NonConcaveJetError):
        reduced_policy(c, ReducedJet((np.array([1.0]),), 0.1, 0.5, 0.2))
    with pytest.raises(ParameterError):
        reduced_residual(c, ReducedJet((np.array([1.0]),), 0.1, 0.5, -0.2), which="other")
    with pytest.raises(ParameterError):
        get_case("HARA_EXP_H4_GEN", omega=1 / P.gamma)
    with pytest.raises((ParameterError, KeyError)):
        get_case("NOPE")
    with pytest.raises(ValueError):
        verify_reduction(c, n=1)
    assert issubclass(DegenerateSubstitutionError, ValueError)
