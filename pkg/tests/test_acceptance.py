"""Acceptance suite: one pass/fail line per criterion at the stated tolerances.

Run with pytest (the lines are printed in the terminal summary) or directly
with ``python tests/test_acceptance.py``.  Criteria whose failure is analysed
in the decision ledger are marked ``xfail(strict=True)``: they must keep
failing for the documented reason, and an unexpected pass is reported.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from illiquid_hjb.errors import UnsupportedExtensionError
from illiquid_hjb.jet_engine import sample_jets
from illiquid_hjb.lie_algebra import (LABELS, base_generators, catalog, classify, linf_sample, symmetry_defect,
                                      symmetry_defects, time_generator, verify_structure)
from illiquid_hjb.model import Exponential, ModelParams, SuperExponential
from illiquid_hjb.pde import SPEC_IDS, make_spec, residual
from illiquid_hjb.reductions import CASE_IDS, KNOWN_SUSPECTS, get_case, verify_reduction
from illiquid_hjb.simulator import PathConfig, perturbation_sweep, policy_from_grid, simulate_utility
from illiquid_hjb.solvers import merton_constant, reconstruct_value, solve_ode, solve_pde2d

RESULTS: dict[int, list[str]] = {}


def _record(k: int, title: str, ok: bool, detail: str, info=()) -> bool:
    lines = [f"[{k:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}"]
    lines += [f"       info: {s}" for s in info]
    RESULTS[k] = lines
    return ok


def _survival_for(spec_id: str, p: ModelParams):
    if spec_id in ("HARA_GENERAL", "LOG_GENERAL"):
        return SuperExponential(0.1, 0.01)
    return None


# ---------------------------------------------------------------------------
# criteria


def criterion_1() -> bool:
    t0 = time.perf_counter()
    p = ModelParams()
    worst, count = 0.0, 0
    for sid in SPEC_IDS:
        spec = make_spec(sid, p, _survival_for(sid, p))
        gens = list(base_generators(spec).values())
        gens += [linf_sample(spec.params, kind).generator() for kind in ("const", "power", "exp_h")]
        for i, g in enumerate(gens):
            worst = max(worst, symmetry_defect(spec, g, n=1000, rng=100 + i))
            count += 1
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and dt < 30
    return _record(1, "symmetry certification", ok,
                   f"{count} generators over 5 specs, max defect {worst:.2e} (<= 1e-8), {dt:.1f} s (< 30 s)")


def _iff_exponential(surv) -> tuple[float, float, list]:
    fracs, base_worst = [], 0.0
    for sid in ("HARA_GENERAL", "LOG_GENERAL"):
        spec = make_spec(sid, ModelParams(), surv)
        d4 = symmetry_defects(spec, time_generator(surv.kappa), n=100, rng=7)
        fracs.append(float(np.mean(d4 >= 1e-2)))
        for g in base_generators(spec).values():
            base_worst = max(base_worst, symmetry_defect(spec, g, n=100, rng=7))
    return min(fracs), base_worst, fracs


def criterion_2() -> bool:
    surv = SuperExponential(0.3, 0.5)
    frac, base_worst, fracs = _iff_exponential(surv)
    weak = SuperExponential(0.1, 0.01)
    f2, _, fr2 = _iff_exponential(weak)
    ok = frac >= 0.95 and base_worst <= 1e-8
    return _record(2, "iff-exponential", ok,
                   f"SuperExponential(kappa=0.3, eps=0.5): U4 defect >= 1e-2 at {fracs[0]:.0%} (HARA) / "
                   f"{fracs[1]:.0%} (log) of 100 jets, U1-U3 max {base_worst:.1e}",
                   [f"SuperExponential(0.1, 0.01): fractions {fr2[0]:.0%} / {fr2[1]:.0%} "
                    "(a weak quadratic tilt leaves many jets below 1e-2)"])


def criterion_3() -> bool:
    worst = 0.0
    labels = []
    for sid in SPEC_IDS:
        cat = catalog(make_spec(sid, ModelParams(), _survival_for(sid, ModelParams())))
        rep = verify_structure(cat, rng=3)
        worst = max(worst, rep.max_deviation)
        got = classify(rep.computed)
        labels.append(got)
        if got != cat.classification or rep.closure_failures:
            worst = max(worst, np.inf)
    ok = worst <= 1e-10 and set(labels) == set(LABELS)
    return _record(3, "structure constants", ok,
                   f"max deviation {worst:.1e} (<= 1e-10); labels {sorted(set(labels))}")


def criterion_4() -> bool:
    params = ModelParams()
    worst = 0.0
    flagged = {}
    n_sound = 0
    for cid in CASE_IDS:
        rep = verify_reduction(get_case(cid, params, cross_term="printed"), n=500, rng=11)
        worst = max(worst, rep.max_defect)
        n_sound += rep.max_defect <= 1e-8
        keys = set(rep.flags) | {f"pi:{x}" if x == "pi" else f"policy:{x}" for x in rep.policy_flags}
        if keys:
            flagged[cid] = keys
    expected = {"HARA_RES_H11_ODE", "LOG_GEN_H1", "HARA_EXP_H4_GEN"}
    only_known = set(flagged) == expected
    ok = worst <= 1e-8 and only_known
    flagged_cases = ", ".join(sorted(flagged))
    return _record(4, "reduction soundness", ok,
                   f"{n_sound}/{len(CASE_IDS)} printed residuals at defect <= 1e-8 (max {worst:.2e}); "
                   f"{len(flagged)} cases flagged, expected only {sorted(expected)}",
                   [f"flagged cases: {flagged_cases}",
                    "the derived residual (pushforward of the HJB) is authoritative; see the ledger"])


def criterion_5() -> bool:
    pm = ModelParams().with_(eta=0.0, delta=0.0, mu=0.0)
    A = merton_constant(pm)
    t0 = time.perf_counter()
    g = solve_ode("HARA_EXP_H8_ODE", pm, z0=0.5, z1=5.0, n=512)
    k = g.interior()
    err_y = float(np.max(np.abs(g.Y[k] / (A * g.z[k] ** pm.gamma) - 1)))
    case = get_case("HARA_EXP_H8_ODE", pm)
    _, pol512 = reconstruct_value(case, g, 0.0, 1.0, 1.0)
    g2 = solve_ode("HARA_EXP_H8_ODE", pm, z0=0.5, z1=5.0, n=2048)
    _, pol = reconstruct_value(case, g2, 0.0, 1.0, 1.0)
    dt = time.perf_counter() - t0
    e512 = abs(float(pol512.pi[0]) - pm.merton_ratio)
    e_pi = abs(float(pol.pi[0]) - pm.merton_ratio)
    ok = err_y <= 1e-4 and e_pi <= 1e-6 and dt < 5
    return _record(5, "Merton oracle", ok,
                   f"max rel error of Y {err_y:.1e} (n=512, <= 1e-4); |pi/l - m| at (l,h)=(1,1) {e_pi:.1e} "
                   f"(n=2048, <= 1e-6); {dt:.2f} s",
                   [f"pi/l at n=512: error {e512:.1e} (second-order grid error of Y_zz)"])


def criterion_6() -> bool:
    p0 = ModelParams().with_(eta=0.0)
    g = solve_ode("HARA_EXP_H8_ODE", p0, 0.1, 10.0, 256)
    tmax = 0.5
    sol = solve_pde2d("HARA_EXP_H2", p0, z0=0.1, z1=10.0, n=256, y_min=0.0, y_max=tmax, m=100,
                      seed=np.exp(-p0.gamma * tmax) * g.Y)
    exact = np.exp(-p0.gamma * sol.y)[:, None] * g.Y[None, :]
    err = float(np.max(np.abs(sol.W - exact) / np.max(np.abs(exact))))
    try:
        solve_pde2d("HARA_EXP_H2", ModelParams(), m=4)
        blocked = "eta>0 unexpectedly accepted"
    except UnsupportedExtensionError:
        blocked = "eta>0 correctly rejected (reduced equation has W_ztau, W_tautau)"
    return _record(6, "separable consistency", err <= 1e-6,
                   f"eta=0, 100 steps over tau in [0, 0.5]: max |W - e^(-gamma tau) Y| / max|Y| = {err:.1e} (<= 1e-6)",
                   [blocked])


def criterion_7() -> bool:
    j = sample_jets(100, rng=17)
    log_spec = make_spec("LOG_EXP", ModelParams())
    rl = residual(log_spec, j)
    diffs = []
    for g in (1e-2, 1e-3, 1e-4):
        rh = residual(make_spec("HARA_EXP", ModelParams().with_(gamma=g)), j)
        diffs.append(float(np.max(np.abs(rh - rl))))
    ratios = [diffs[0] / diffs[1], diffs[1] / diffs[2]]
    ok = all(8 <= r <= 12 for r in ratios)
    return _record(7, "gamma -> 0 bridge", ok,
                   f"max |R_HARA - R_LOG| = {diffs[0]:.2e}, {diffs[1]:.2e}, {diffs[2]:.2e}; "
                   f"ratios {ratios[0]:.2f}, {ratios[1]:.2f} (in [8, 12])")


def _full_model(left_bc: str, z1: float = 1e4, n: int = 2048):
    p = ModelParams()
    return p, solve_ode("HARA_EXP_H8_ODE", p, z0=1e-3, z1=z1, n=n, left_bc=left_bc)


def criterion_8() -> bool:
    out = {}
    for bc in ("income", "robin"):
        p, g = _full_model(bc)
        case = get_case("HARA_EXP_H8_ODE", p)
        hs = np.array([1e-1, 1e-2, 1e-3])
        _, pol = reconstruct_value(case, g, 0.0, 1.0, hs)
        out[bc] = np.abs(pol.pi - p.merton_ratio)
    gaps = out["income"]
    ok = gaps[-1] <= 1e-3
    return _record(8, "Merton limit in h", ok,
                   "|pi(1,h) - m| at h = 1e-1, 1e-2, 1e-3: " + ", ".join(f"{x:.2e}" for x in gaps)
                   + " (<= 1e-3 at h = 1e-3)",
                   ["state-constraint closure (c = delta h at the left end), z in [1e-3, 1e4], n = 2048",
                    "Robin closure: " + ", ".join(f"{x:.2e}" for x in out["robin"])
                    + " (borrowing against s h keeps an O(h) gap)"])


def criterion_9(n_paths: int = 100_000) -> bool:
    t0 = time.perf_counter()
    p, g = _full_model("income", z1=1e3)
    case = get_case("HARA_EXP_H8_ODE", p)
    V, _ = reconstruct_value(case, g, 0.0, 1.0, 1.0)
    V = float(V[0])
    pol = policy_from_grid(g)
    est = simulate_utility(p, None, pol, 1.0, 1.0, PathConfig(dt=1e-3, n_paths=n_paths, rng_seed=2024))
    z = (est.mean - V) / est.stderr
    sweep = perturbation_sweep(p, None, pol, 1.0, 1.0, PathConfig(dt=1e-2, n_paths=n_paths, rng_seed=7))
    dt = time.perf_counter() - t0
    peak = sweep.peaks_at_center(2.0)
    ok = abs(z) <= 3 and peak and dt < 300 and not est.unreliable
    return _record(9, "Monte Carlo match", ok,
                   f"MC {est.mean:.5f} +/- {est.stderr:.1e} vs V(0,1,1) = {V:.5f} ({z:+.2f} stderr); "
                   f"flagged {est.flagged}/{est.n_paths}; sweep peaks at (1,1): {peak}; {dt:.0f} s (< 300 s)",
                   ["state-constraint closure (c = delta h at the left end); see the ledger for the Robin closure",
                    f"sweep with dt = 1e-2 and common random numbers, means at scale 0.8/1.0/1.2: "
                    + "; ".join(" ".join(f"{x:.4f}" for x in row) for row in sweep.means)])


def criterion_10() -> bool:
    p = ModelParams()
    sols, notes = [], []
    for cid in ("HARA_EXP_H8_ODE", "LOG_EXP_H8_ODE"):
        for bc in ("robin", "income"):
            sols.append((f"{cid}/{bc}", solve_ode(cid, p, left_bc=bc)))
    p0 = p.with_(eta=0.0)
    sols.append(("HARA_EXP_H2 (eta=0)", solve_pde2d("HARA_EXP_H2", p0, n=128, m=32, y_max=2.0)))
    se = SuperExponential(0.3, 0.05)
    sols.append(("HARA_GEN_H3", solve_pde2d("HARA_GEN_H3", p, se, n=64, m=64, y_max=10.0)))
    sols.append(("LOG_EXP_H2 (eta=0)", solve_pde2d("LOG_EXP_H2", p0, n=64, m=32, y_max=5.0)))
    sols.append(("LOG_GEN_H1", solve_pde2d("LOG_GEN_H1", p, se, n=64, m=64, y_max=10.0)))
    concave = [name for name, s in sols if not s.is_concave()]
    rng = np.random.default_rng(5)
    worst = 0.0
    for cid in ("HARA_EXP_H8_ODE", "LOG_EXP_H8_ODE"):
        g = solve_ode(cid, p)
        case = get_case(cid, p)
        h = rng.uniform(0.5, 2.0, 50)
        l = h * rng.uniform(0.2, 8.0, 50)
        t = rng.uniform(0.0, 10.0, 50)
        V0, _ = reconstruct_value(case, g, 0.0, l, h)
        Vt, _ = reconstruct_value(case, g, t, l, h)
        worst = max(worst, float(np.max(np.abs(Vt / V0 - np.exp(-p.kappa * t)))))
    ok = not concave and worst <= 1e-12
    return _record(10, "concavity and decay", ok,
                   f"{len(sols) - len(concave)}/{len(sols)} solutions strictly concave; "
                   f"max |V(t)/V(0) - e^(-kappa t)| = {worst:.1e}",
                   [f"not concave: {concave}"] if concave else [])


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 11)}


# ---------------------------------------------------------------------------
# pytest entry points


@pytest.mark.parametrize("k", [1, 2, 3, 5, 6, 7, 8, 10])
def test_criterion(k):
    assert CRITERIA[k]()


@pytest.mark.xfail(strict=True, reason="printed reductions deviate beyond the known suspects (ledgered)")
def test_criterion_4_reduction_soundness():
    assert criterion_4()


@pytest.mark.slow
def test_criterion_9_monte_carlo():
    assert criterion_9()


if __name__ == "__main__":
    for k, fn in CRITERIA.items():
        fn()
        print("\n".join(RESULTS[k]), flush=True)
