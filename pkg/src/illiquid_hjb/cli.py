"""Batch front door: ``illiquid-hjb <task> --config cfg.json --out dir``.

Every task writes ``report.json`` (deterministic: config echo, code version
and results, no timings), ``metadata.json`` (timestamps and runtimes), CSV
tables and ``summary.md``.  Exit status: 0 when every predicate of the task
passes, 2 when a predicate fails (the report is still written), 1 on a
configuration or runtime error.

Config schema (JSON, every key optional)::

    {"task": str, "spec": str, "params": {...}, "survival": {"kind": ..., ...},
     "cases": [str], "grid": {"z0", "z1", "n", "tau_max", "m", "left_bc"},
     "paths": {"dt", "t_max", "n_paths", "seed", "antithetic"},
     "n_jets": int, "n_samples": int, "cross_term": str,
     "expect": ["fail-U4"], "sweep": bool, "out": str, "seed": int}
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, HJBError
from .lie_algebra import (LABELS, base_generators, catalog, classify, linf_sample, symmetry_defect,
                          time_generator, verify_structure)
from .model import ModelParams, survival_from_dict
from .pde import SPEC_IDS, make_spec
from .reductions import CASE_IDS, get_case, verify_reduction
from .simulator import PathConfig, perturbation_sweep, policy_from_grid, simulate_utility
from .solvers import ODE_CASES, PDE_CASES, reconstruct_value, solve_ode, solve_pde2d, write_csv, write_json

TASKS = ("verify-symmetries", "verify-structure", "verify-reductions", "solve-ode", "solve-pde", "simulate",
         "full-report")
_KEYS = {"task", "spec", "params", "survival", "cases", "grid", "paths", "n_jets", "n_samples", "cross_term",
         "expect", "sweep", "out", "seed"}
_GRID_KEYS = {"z0", "z1", "n", "tau_max", "m", "left_bc"}
_PATH_KEYS = {"dt", "t_max", "n_paths", "seed", "antithetic"}


# ---------------------------------------------------------------------------
# config


def load_config(path: str | None) -> dict:
    """Read and validate a JSON config; ``None`` gives the defaults."""
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def validate_config(cfg: dict) -> None:
    """Schema checks with field-level diagnostics."""
    unknown = set(cfg) - _KEYS
    if unknown:
        raise ConfigError(f"unknown field(s): {sorted(unknown)}")
    if "task" in cfg and cfg["task"] not in TASKS:
        raise ConfigError(f"field 'task': {cfg['task']!r} not in {TASKS}")
    if "spec" in cfg and cfg["spec"] not in SPEC_IDS + ("all",):
        raise ConfigError(f"field 'spec': {cfg['spec']!r} not in {SPEC_IDS}")
    for key, allowed in (("grid", _GRID_KEYS), ("paths", _PATH_KEYS)):
        sub = cfg.get(key, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"field '{key}' must be an object")
        bad = set(sub) - allowed
        if bad:
            raise ConfigError(f"field '{key}': unknown key(s) {sorted(bad)}")
    cases = cfg.get("cases", [])
    if not isinstance(cases, list):
        raise ConfigError("field 'cases' must be a list")
    for c in cases:
        if c not in CASE_IDS:
            raise ConfigError(f"field 'cases': unknown case id {c!r}")
    if "expect" in cfg and not set(cfg["expect"]) <= {"fail-U4"}:
        raise ConfigError("field 'expect': only 'fail-U4' is supported")


def _params(cfg: dict) -> ModelParams:
    try:
        return ModelParams.from_dict(cfg.get("params", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'params': {exc}") from exc


def _survival(cfg: dict):
    if "survival" not in cfg:
        return None
    try:
        return survival_from_dict(dict(cfg["survival"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'survival': {exc}") from exc


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# ---------------------------------------------------------------------------
# tasks; each returns (results, predicates, csv tables)


def task_verify_symmetries(cfg: dict):
    p = _params(cfg)
    surv = _survival(cfg)
    spec = make_spec(cfg.get("spec", "HARA_EXP"), p, surv)
    n = int(cfg.get("n_jets", 1000))
    seed = int(cfg.get("seed", 0))
    gens = dict(base_generators(spec))
    for kind in ("const", "power", "exp_h"):
        s = linf_sample(spec.params, kind)
        gens[s.generator().name] = s.generator()
    expect_fail_u4 = "fail-U4" in cfg.get("expect", [])
    if expect_fail_u4 and "U4" not in gens:
        gens["U4"] = time_generator(spec.survival.kappa)
    rows, preds = [], {}
    for i, (name, g) in enumerate(gens.items()):
        d = symmetry_defect(spec, g, n=n, rng=seed + i)
        if name == "U4" and expect_fail_u4:
            ok = d >= 1e-2
            preds[f"{name} defect >= 1e-2 (expected failure)"] = ok
        else:
            ok = d <= 1e-8
            preds[f"{name} defect <= 1e-8"] = ok
        rows.append({"generator": name, "max_defect": d, "passed": bool(ok)})
    res = {"spec": spec.id, "survival": spec.survival.to_dict(), "n_jets": n, "generators": rows}
    table = (["generator_index", "max_defect"], [(i, r["max_defect"]) for i, r in enumerate(rows)])
    return res, preds, {"symmetries.csv": table}


def task_verify_structure(cfg: dict):
    p = _params(cfg)
    sid = cfg.get("spec", "all")
    ids = SPEC_IDS if sid == "all" else (sid,)
    out, preds, labels = [], {}, []
    for i in ids:
        surv = _survival(cfg) if i in ("HARA_GENERAL", "LOG_GENERAL") else None
        cat = catalog(make_spec(i, p, surv))
        rep = verify_structure(cat, rng=int(cfg.get("seed", 0)))
        label = classify(rep.computed)
        labels.append(label)
        preds[f"{i} deviation <= 1e-10"] = rep.max_deviation <= 1e-10 and not rep.closure_failures
        preds[f"{i} label {cat.classification}"] = label == cat.classification
        out.append({"spec": i, "label": label, "printed_label": cat.classification,
                    "max_deviation": rep.max_deviation, "max_closure_residual": rep.max_closure_residual,
                    "pairs": {f"{a},{b}": v for (a, b), v in rep.pairs.items()}})
    if sid == "all":
        preds["label set"] = set(labels) == set(LABELS)
    return {"specs": out}, preds, {}


def task_verify_reductions(cfg: dict):
    p = _params(cfg)
    cases = cfg.get("cases") or list(CASE_IDS)
    n = int(cfg.get("n_samples", 500))
    cross = cfg.get("cross_term", "printed")
    reps, rows, preds = [], [], {}
    for i, cid in enumerate(cases):
        rep = verify_reduction(get_case(cid, p, cross_term=cross), n=n, rng=int(cfg.get("seed", 0)) + i)
        reps.append(rep.to_dict())
        preds[f"{cid} defect <= 1e-8"] = rep.passed
        rows.append((i, rep.max_defect, rep.gauge_defect, len(rep.flags), len(rep.policy_flags)))
    table = (["case_index", "max_defect", "gauge_defect", "n_term_flags", "n_policy_flags"], rows)
    return {"cross_term": cross, "cases": cases, "reports": reps}, preds, {"reductions.csv": table}


def _grid(cfg: dict) -> dict:
    return dict(cfg.get("grid", {}))


def task_solve_ode(cfg: dict):
    p = _params(cfg)
    grid = _grid(cfg)
    cases = cfg.get("cases") or ["HARA_EXP_H8_ODE"]
    out, preds, tables = [], {}, {}
    for cid in cases:
        if cid not in ODE_CASES:
            raise ConfigError(f"field 'cases': {cid} is not an ODE case {ODE_CASES}")
        g = solve_ode(cid, p, z0=grid.get("z0", 0.1), z1=grid.get("z1", 10.0), n=int(grid.get("n", 512)),
                      left_bc=grid.get("left_bc", "robin"))
        preds[f"{cid} converged"] = g.converged
        preds[f"{cid} concave"] = g.is_concave()
        out.append(g.metadata())
        tables[f"{cid}.csv"] = g.to_rows()
    return {"solutions": out}, preds, tables


def task_solve_pde(cfg: dict):
    p = _params(cfg)
    surv = _survival(cfg)
    grid = _grid(cfg)
    cases = cfg.get("cases") or ["HARA_GEN_H3"]
    out, preds, tables = [], {}, {}
    for cid in cases:
        if cid not in PDE_CASES:
            raise ConfigError(f"field 'cases': {cid} is not a marching case {PDE_CASES}")
        s = solve_pde2d(cid, p, surv, z0=grid.get("z0", 0.1), z1=grid.get("z1", 10.0), n=int(grid.get("n", 128)),
                        y_max=grid.get("tau_max", 10.0), m=int(grid.get("m", 128)))
        preds[f"{cid} concave"] = s.is_concave()
        out.append(s.metadata())
        tables[f"{cid}.csv"] = s.to_rows()
    return {"solutions": out}, preds, tables


def task_simulate(cfg: dict):
    p = _params(cfg)
    grid = _grid(cfg)
    paths = dict(cfg.get("paths", {}))
    seed = int(paths.pop("seed", cfg.get("seed", 0)))
    pc = PathConfig(dt=paths.get("dt", 1e-3), t_max=paths.get("t_max"), n_paths=int(paths.get("n_paths", 100_000)),
                    rng_seed=seed, antithetic=bool(paths.get("antithetic", True)))
    cid = "HARA_EXP_H8_ODE"
    g = solve_ode(cid, p, z0=grid.get("z0", 1e-3), z1=grid.get("z1", 1e3), n=int(grid.get("n", 2048)),
                  left_bc=grid.get("left_bc", "income"))
    V, _ = reconstruct_value(get_case(cid, p), g, 0.0, 1.0, 1.0)
    V = float(V[0])
    pol = policy_from_grid(g)
    est = simulate_utility(p, None, pol, 1.0, 1.0, pc)
    z = (est.mean - V) / est.stderr
    e = est.to_dict()
    e.pop("runtime")
    res = {"case": cid, "left_bc": g.meta["left_bc"], "l0": 1.0, "h0": 1.0, "value": V, "estimate": e,
           "z_score": z, "paths": pc.to_dict()}
    preds = {"|MC - V| <= 3 stderr": abs(z) <= 3, "flagged <= 0.1%": not est.unreliable}
    tables = {"mc_comparison.csv": (["l0", "h0", "value", "mc_mean", "mc_stderr", "z_score", "flagged"],
                                    [(1.0, 1.0, V, est.mean, est.stderr, z, est.flagged)])}
    if cfg.get("sweep", True):
        sw_cfg = PathConfig(dt=max(pc.dt, 1e-2), t_max=pc.t_max, n_paths=pc.n_paths, rng_seed=seed + 1,
                            antithetic=pc.antithetic)
        sw = perturbation_sweep(p, None, pol, 1.0, 1.0, sw_cfg)
        res["sweep"] = {"config": sw_cfg.to_dict(), "means": sw.means, "stderrs": sw.stderrs,
                        "diff_stderrs": sw.diff_stderrs, "peaks_at_center": sw.peaks_at_center()}
        preds["sweep peaks at (1, 1)"] = sw.peaks_at_center()
        tables["sweep.csv"] = sw.rows()
    return res, preds, tables


def task_full_report(cfg: dict):
    results, preds, tables = {}, {}, {}
    plan = [
        ("symmetries", task_verify_symmetries, {"spec": "HARA_EXP"}),
        ("structure", task_verify_structure, {"spec": "all"}),
        ("reductions", task_verify_reductions, {}),
        ("ode", task_solve_ode, {"cases": ["HARA_EXP_H8_ODE", "LOG_EXP_H8_ODE"]}),
        ("pde", task_solve_pde, {"cases": ["HARA_GEN_H3", "LOG_GEN_H1"],
                                 "survival": {"kind": "superexponential", "kappa": 0.3, "eps": 0.05},
                                 "grid": {"n": 64, "m": 64}}),
        ("simulate", task_simulate, {}),
    ]
    base = {k: v for k, v in cfg.items() if k not in ("task", "cases", "spec")}
    for name, fn, extra in plan:
        sub = {**base, **extra}
        r, pr, tb = fn(sub)
        results[name] = r
        preds.update({f"{name}: {k}": v for k, v in pr.items()})
        tables.update({f"{name}_{k}": v for k, v in tb.items()})
    return results, preds, tables


_DISPATCH = {
    "verify-symmetries": task_verify_symmetries,
    "verify-structure": task_verify_structure,
    "verify-reductions": task_verify_reductions,
    "solve-ode": task_solve_ode,
    "solve-pde": task_solve_pde,
    "simulate": task_simulate,
    "full-report": task_full_report,
}


# ---------------------------------------------------------------------------
# reporting


def _summary_md(task: str, preds: dict, results: dict) -> str:
    lines = [f"# {task}", "", f"version {__version__}", "", "| predicate | result |", "|---|---|"]
    lines += [f"| {k} | {'pass' if v else 'FAIL'} |" for k, v in preds.items()]
    n_fail = sum(not v for v in preds.values())
    lines += ["", f"{len(preds) - n_fail} of {len(preds)} predicates pass.", ""]
    if task in ("simulate", "full-report"):
        sim = results if task == "simulate" else results.get("simulate", {})
        if sim:
            e = sim["estimate"]
            lines += ["## Monte Carlo comparison", "", "| V(0,1,1) | MC mean | stderr | z |", "|---|---|---|---|",
                      f"| {sim['value']:.6f} | {e['mean']:.6f} | {e['stderr']:.2e} | {sim['z_score']:+.2f} |", ""]
    return "\n".join(lines)


def run(task: str, cfg: dict, out: Path) -> int:
    """Execute a task and write its artifacts; returns the exit status."""
    validate_config(cfg)
    if cfg.get("task", task) != task:
        raise ConfigError(f"config task {cfg['task']!r} does not match subcommand {task!r}")
    started = _dt.datetime.now(_dt.timezone.utc)
    t0 = time.perf_counter()
    results, preds, tables = _DISPATCH[task](cfg)
    runtime = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    preds = {k: bool(v) for k, v in preds.items()}
    report = {"task": task, "version": __version__, "config": cfg, "predicates": preds,
              "passed": all(preds.values()), "results": results}
    write_json(out / "report.json", _jsonable(report))
    write_json(out / "metadata.json", {"started": started.isoformat(), "runtime_s": runtime,
                                        "python": sys.version.split()[0]})
    for name, (header, rows) in tables.items():
        write_csv(out / name, header, rows)
    (out / "summary.md").write_text(_summary_md(task, preds, results))
    return 0 if report["passed"] else 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="illiquid-hjb", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="task", required=True)
    for t in TASKS:
        sp = sub.add_parser(t, help=f"run the {t} task")
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help="output directory (default: config 'out' or ./out/<task>)")
        sp.add_argument("--seed", type=int, help="override the config seed")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
            if "paths" in cfg and "seed" in cfg["paths"]:
                cfg["paths"]["seed"] = args.seed
        out = Path(args.out or cfg.get("out") or Path("out") / args.task)
        return run(args.task, cfg, out)
    except (HJBError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
