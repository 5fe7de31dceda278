"""Command-line front end.

Every run writes its CSV reports and a ``manifest.json`` into ``--out`` and
exits nonzero, naming the failing check, when a pass criterion does not hold.
Configuration comes from an optional YAML file; command-line flags override
it. See the README for the file grammar.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .acceptance import CRITERIA, DEFAULT_SEED, run_criterion
from .analysis import (
    GRID_CATALOG,
    DEFAULT_C1,
    catalog_function,
    default_c2,
    deterministic_probe,
    maximal_inequality_check,
    sample_pairs,
    stochastic_gronwall_check,
)
from .convergence import check_modes, equivalence_oracle, example_law_not_pointwise, example_pointwise_not_law
from ._parallel import chunk_ranges, map_ordered
from .direct import simulate_strong_batch
from .driftfree import DomainError, _moment_from_sups, driftfree_sup_squares, simulate_batch
from .feller import default_battery, improved_feller_gap, perturbations, strong_feller_gap
from .girsanov import effective_sample_size, weighted_run
from .model import CONDITIONS, CONDITION_TITLES, ModelError, catalog_names, make_model
from .segments import GridError, TimeGrid, embed_constant

__all__ = ["main", "list_catalog", "ConfigError", "load_config"]

SEED_ENV = "SDDEFELLER_SEED"
COMMANDS = ("simulate", "feller", "convergence", "verify-bounds", "analysis", "catalog", "acceptance")

DEFAULTS = {
    "seed": DEFAULT_SEED,
    "replicas": 10_000,
    "out": "sddefeller-out",
    "workers": 1,
    "kind": None,
    "grid": {"r": 1.0, "T": 2.0, "dt": 1e-3},
    "model": {"name": "linear-delay", "params": {}},
    "initial": 0.0,
    "simulate": {"backend": "direct", "times": [0.5, 1.0, 2.0]},
    "feller": {"backend": "girsanov", "t": 2.0, "deltas": [0.5, 0.25, 0.125, 0.0625],
               "functions": None, "expect": None},
    "convergence": {"family": "random", "budget": 10_000, "examples": True},
    "verify-bounds": {"T": 1.0, "alphas": [0.1, 0.25, 0.4], "x0": [0.0, 1.0],
                      "martingale_models": ["constant-drift", "linear-delay"], "martingale_t": [1.0, 2.0]},
    "analysis": {"functions": ["gaussian-bump", "smoothed-step", "sinusoid"], "h": [0.01, 0.005], "L": 4.0,
                 "dim": 1, "pairs": 10_000, "max_change": 0.10,
                 "gronwall": {"p": [0.25, 0.5, 0.75], "K": 1.0, "C": 1.0, "T": 1.0,
                              "scenario": "martingale-perturbed"}},
    "acceptance": {"criteria": list(CRITERIA)},
}


class ConfigError(ValueError):
    """Malformed configuration or unknown names."""


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at top level")
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}; allowed: {sorted(DEFAULTS)}")
    return data


def resolve_config(args: argparse.Namespace) -> dict:
    user = load_config(args.config)
    cfg = _merge(DEFAULTS, user)
    if args.seed is not None:
        cfg["seed"] = args.seed
    elif os.environ.get(SEED_ENV) and "seed" not in user:
        try:
            cfg["seed"] = int(os.environ[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    for key in ("replicas", "out", "workers"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    if args.dt is not None:
        cfg["grid"] = {**cfg["grid"], "dt": args.dt}
    if cfg["kind"] is not None and cfg["kind"] != args.command:
        raise ConfigError(f"config kind {cfg['kind']!r} does not match subcommand {args.command!r}")
    if int(cfg["replicas"]) < 1:
        raise ConfigError("replicas must be >= 1")
    if int(cfg["workers"]) < 1:
        raise ConfigError("workers must be >= 1")
    return cfg


def _model(cfg: dict, name: str | None = None):
    spec = cfg["model"]
    if isinstance(spec, str):
        spec = {"name": spec, "params": {}}
    name = name or spec.get("name")
    if name not in catalog_names():
        raise ConfigError(f"unknown model {name!r}; catalog: {', '.join(catalog_names())}")
    try:
        params = (spec.get("params") or {}) if name == spec.get("name") else {}
        return make_model(name, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for model {name!r}: {exc}") from exc


def _grid(cfg: dict, T: float | None = None) -> TimeGrid:
    g = cfg["grid"]
    try:
        return TimeGrid(float(g["r"]), float(g["T"] if T is None else T), float(g["dt"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"grid needs numeric r, T and dt: {exc}") from exc


def _initial(cfg: dict, grid: TimeGrid, d: int, value=None):
    v = cfg["initial"] if value is None else value
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.size == 1 and d > 1:
        arr = np.full(d, arr[0])
    if arr.shape != (d,):
        raise ConfigError(f"initial value must be a number or a list of {d} numbers")
    return embed_constant(arr, grid)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _se(v: np.ndarray, axis: int = -1) -> np.ndarray:
    n = v.shape[axis]
    return v.std(axis=axis, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(np.delete(v.shape, axis))


# ---------------------------------------------------------------------------
# subcommands; each returns (files, checks, lines) with checks a name -> bool map


def cmd_simulate(cfg):
    m = _model(cfg)
    sub = cfg["simulate"]
    grid = _grid(cfg)
    x = _initial(cfg, grid, m.d)
    N, seed, workers = int(cfg["replicas"]), int(cfg["seed"]), int(cfg["workers"])
    times = [float(t) for t in sub["times"]]
    if any(not 0 < t <= grid.T for t in times):
        raise ConfigError(f"simulate times must lie in (0, T={grid.T}]")
    backend = sub["backend"]
    rows, checks, lines = [], {}, []
    if backend == "girsanov":
        log_w, _, qv = weighted_run(m, [x], grid.T, [], N, seed, times=times, workers=workers)
        ok = True
        for j, t in enumerate(times):
            w = np.exp(log_w[0, j])
            mean, se = float(w.mean()), float(_se(w))
            ok &= abs(mean - 1) <= 3 * se
            rows.append((m.name, backend, t, mean, se, effective_sample_size(log_w[0, j]),
                         float(np.exp(0.5 * qv[0, j]).mean()), N, seed))
            lines.append(f"t={t:g}: mean weight {mean:.5f} +- {se:.5f}")
        checks["martingale"] = ok
        header = ("model", "backend", "t", "mean_weight", "se", "ess", "novikov", "N", "seed")
    elif backend in ("direct", "driftfree"):
        ks = [grid.n_lag + grid.step_index(t) for t in times]

        def run(span):
            reps = np.arange(*span)
            if backend == "direct":
                p = simulate_strong_batch(m, x, grid.T, seed, reps, method="auto")
            else:
                p = simulate_batch(m, x, grid.T, seed, reps)
            return p.values[:, ks, :]

        heads = np.concatenate(map_ordered(run, chunk_ranges(N), workers), axis=0)
        checks["finite-values"] = bool(np.all(np.isfinite(heads)))
        for j, t in enumerate(times):
            for e in range(m.d):
                v = heads[:, j, e]
                sd = float(v.std(ddof=1)) if N > 1 else 0.0
                rows.append((m.name, backend, t, e, float(v.mean()), float(_se(v)), sd, N, seed))
            lines.append(f"t={t:g}: mean head {np.array2string(heads[:, j].mean(axis=0), precision=5)}")
        header = ("model", "backend", "t", "coord", "mean", "se", "sd", "N", "seed")
    else:
        raise ConfigError(f"simulate backend must be direct, driftfree or girsanov, not {backend!r}")
    return {"simulate.csv": _csv(header, rows)}, checks, lines


def cmd_feller(cfg):
    m = _model(cfg)
    sub = cfg["feller"]
    t = float(sub["t"])
    grid = _grid(cfg, T=t)
    x = _initial(cfg, grid, m.d)
    deltas = [float(d) for d in sub["deltas"]]
    ys = perturbations(x, deltas)
    battery = default_battery(grid)
    if sub.get("functions"):
        try:
            battery = battery.select(sub["functions"])
        except KeyError as exc:
            raise ConfigError(f"unknown test function {exc}; available: {battery.names}") from exc
    N, seed, workers = int(cfg["replicas"]), int(cfg["seed"]), int(cfg["workers"])
    backend = sub["backend"]
    if backend == "coupled":
        rep = improved_feller_gap(m, x, ys, battery, t, N, seed, workers=workers)
    elif backend in ("girsanov", "direct"):
        rep = strong_feller_gap(m, x, ys, battery, t, N, seed, backend=backend, workers=workers)
    else:
        raise ConfigError(f"feller backend must be girsanov, direct or coupled, not {backend!r}")
    checks, lines = {}, list(rep.warnings)
    expect = sub.get("expect")
    if expect == "decay":
        ok = True
        for f in rep.f_names:
            rows = sorted(rep.for_function(f), key=lambda r: -r.delta)
            ok &= rows[-1].gap < 3 * rows[-1].se
            ok &= all(s.gap <= b.gap + 3 * s.se for b, s in zip(rows, rows[1:]))
        checks["gap-decay"] = ok
    elif isinstance(expect, dict) and "min_gap" in expect:
        floor = float(expect["min_gap"])
        checks["gap-floor"] = all(r.gap > floor for r in rep.rows)
    elif expect is not None:
        raise ConfigError("feller.expect must be 'decay', {min_gap: value} or null")
    for r in rep.rows:
        lines.append(f"{r.f_name} delta={r.delta:g}: gap {r.gap:.4f} +- {r.se:.4f}")
    return {"gaps.csv": rep.to_csv()}, checks, lines


def cmd_convergence(cfg):
    sub = dict(cfg["convergence"])
    family = sub.pop("family")
    budget = int(sub.pop("budget"))
    examples = sub.pop("examples", True)
    if family not in ("random", "exhaustive"):
        raise ConfigError("convergence.family must be random or exhaustive")
    kw = {k: int(v) for k, v in sub.items()}
    try:
        rep = equivalence_oracle(family, budget=budget, seed=int(cfg["seed"]), **kw)
    except TypeError as exc:
        raise ConfigError(f"bad convergence options: {exc}") from exc
    s = rep.summary()
    files = {f"oracle_{family}.csv": rep.to_csv()}
    checks = {"equivalence": s["violations"] == 0}
    lines = [", ".join(f"{k}={v}" for k, v in s.items())]
    if examples:
        e1 = check_modes(example_pointwise_not_law())
        e2 = check_modes(example_law_not_pointwise())
        checks["examples"] = e1.triple == (True, False, False) and e2.triple == (False, True, False)
        files["examples.csv"] = _csv(
            ("example", "cond_1a", "cond_1b", "cond_2", "witness_f", "witness_value"),
            [(n, *map(int, v.triple), v.witness_2[1], str(v.witness_2[2]))
             for n, v in (("pointwise-not-law", e1), ("law-not-pointwise", e2))])
    return files, checks, lines


def cmd_verify_bounds(cfg):
    sub = cfg["verify-bounds"]
    N, seed, workers = int(cfg["replicas"]), int(cfg["seed"]), int(cfg["workers"])
    T = float(sub["T"])
    m = make_model("brownian")
    grid = _grid(cfg, T=T)
    rows, lines, ok = [], [], True
    for x0 in sub["x0"]:
        x = embed_constant(float(x0), grid)
        sups = driftfree_sup_squares(m, x, T, N, seed, workers=workers)
        for a in sub["alphas"]:
            try:
                est = _moment_from_sups(sups, float(a), 1, 1.0, T, float(x0) ** 2)
            except DomainError as exc:
                raise ConfigError(str(exc)) from exc
            ok &= est.passed
            rows.append((float(x0), float(a), est.estimate, est.se, est.bound, int(est.passed), N, seed))
            lines.append(f"x0={x0} alpha={a}: {est.estimate:.4f} +- {est.se:.4f} vs bound {est.bound:.4f}")
    files = {"moments.csv": _csv(("x0", "alpha", "estimate", "se", "bound", "passed", "N", "seed"), rows)}
    checks = {"exp-sup-moment": ok}
    times = [float(t) for t in sub["martingale_t"]]
    if sub.get("martingale_models"):
        grid2 = _grid(cfg, T=max(times))
        mrows, mok = [], True
        for name in sub["martingale_models"]:
            mm = _model(cfg, name)
            x = _initial(cfg, grid2, mm.d)
            log_w, _, _ = weighted_run(mm, [x], grid2.T, [], N, seed, times=times, workers=workers)
            for j, t in enumerate(times):
                w = np.exp(log_w[0, j])
                mean, se = float(w.mean()), float(_se(w))
                mok &= abs(mean - 1) <= 3 * se
                mrows.append((name, t, mean, se, N, seed))
                lines.append(f"{name} t={t:g}: mean weight {mean:.5f} +- {se:.5f}")
        checks["martingale"] = mok
        files["martingale.csv"] = _csv(("model", "t", "mean_weight", "se", "N", "seed"), mrows)
    return files, checks, lines


def cmd_analysis(cfg):
    sub = cfg["analysis"]
    hs = [float(h) for h in sub["h"]]
    L, dim, pairs, seed = float(sub["L"]), int(sub["dim"]), int(sub["pairs"]), int(cfg["seed"])
    rows, lines, stable, clean = [], [], True, True
    for name in sub["functions"]:
        if name not in GRID_CATALOG:
            raise ConfigError(f"unknown function {name!r}; catalog: {', '.join(GRID_CATALOG)}")
        coarse = catalog_function(name, hs[0], L, dim)
        pts = sample_pairs(coarse, pairs, seed)
        fits = []
        for h in hs:
            res = maximal_inequality_check(catalog_function(name, h, L, dim), pts)
            fits.append(res.c_d)
            clean &= res.violations == 0
            rows.append((name, dim, h, res.c_d, res.c_dp, res.violations, pairs))
        if len(fits) > 1 and fits[0] > 0:
            change = abs(fits[-1] / fits[0] - 1)
            stable &= change < float(sub["max_change"])
            lines.append(f"{name}: C_d {fits[0]:.4f} -> {fits[-1]:.4f} ({100 * change:.2f}%)")
    files = {"maximal.csv": _csv(("function", "dim", "h", "c_d", "c_dp", "violations", "pairs"), rows)}
    checks = {"maximal-stability": stable, "maximal-violations": clean}
    g = sub.get("gronwall")
    if g:
        grows, gok, pok = [], True, True
        for p in g["p"]:
            p = float(p)
            pok &= deterministic_probe(p, DEFAULT_C1, default_c2(p))
            try:
                res = stochastic_gronwall_check(g["scenario"], K=float(g["K"]), C=float(g["C"]), p=p,
                                                T=float(g["T"]), N=int(cfg["replicas"]), seed=seed,
                                                dt=float(cfg["grid"]["dt"]), workers=int(cfg["workers"]))
            except DomainError as exc:
                raise ConfigError(str(exc)) from exc
            gok &= res.passed
            grows.append((g["scenario"], p, res.c1, res.c2, res.lhs, res.lhs_se, res.rhs, int(res.passed), res.N))
            lines.append(f"gronwall p={p:g}: {res.lhs:.4f} +- {res.lhs_se:.4f} <= {res.rhs:.4f}")
        checks["gronwall-probe"] = pok
        checks["gronwall-mc"] = gok
        files["gronwall.csv"] = _csv(("scenario", "p", "c1", "c2", "lhs", "lhs_se", "rhs", "passed", "N"), grows)
    return files, checks, lines


def cmd_acceptance(cfg):
    files, checks, lines, done = {}, {}, [], {}
    wanted = [int(k) for k in cfg["acceptance"]["criteria"]]
    for k in wanted:
        if k not in CRITERIA:
            raise ConfigError(f"acceptance criteria are numbered {min(CRITERIA)}..{max(CRITERIA)}")
    for k in wanted:
        # the reproducibility criterion reuses first runs made in this invocation
        kw = {"reference": done} if k == 10 else {}
        res = run_criterion(k, seed=int(cfg["seed"]), **kw)
        done[k] = res
        checks[f"criterion-{k}"] = res.passed
        lines += [res.headline(), *res.lines]
        files.update({f"criterion{k}_{name}": body for name, body in res.files.items()})
    return files, checks, lines


def list_catalog() -> list[dict]:
    """Catalog models with their declared condition profiles."""
    out = []
    for name in catalog_names():
        m = make_model(name)
        out.append({"name": name, "d": m.d, "profile": {c: bool(m.profile.get(c, False)) for c in CONDITIONS},
                    "notes": m.notes})
    return out


def _print_catalog(stream) -> None:
    print("Condition legend: " + "; ".join(f"{c} {CONDITION_TITLES[c]}" for c in CONDITIONS), file=stream)
    for e in list_catalog():
        prof = " ".join(f"{c}:{'yes' if v else 'no'}" for c, v in e["profile"].items())
        print(f"{e['name']:20s} d={e['d']}  {prof}  {e['notes']}", file=stream)


HANDLERS = {
    "simulate": cmd_simulate,
    "feller": cmd_feller,
    "convergence": cmd_convergence,
    "verify-bounds": cmd_verify_bounds,
    "analysis": cmd_analysis,
    "acceptance": cmd_acceptance,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sddefeller", description="Delay SDE Feller experiments.")
    ap.add_argument("--config", help="YAML configuration file")
    ap.add_argument("--seed", type=int, help=f"master seed (default: ${SEED_ENV} or {DEFAULT_SEED})")
    ap.add_argument("--replicas", type=int, help="Monte Carlo replicas N")
    ap.add_argument("--dt", type=float, help="time step")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--workers", type=int, help="worker threads")
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")
    helps = {
        "simulate": "simulate paths and summarise heads or Girsanov weights",
        "feller": "strong or improved Feller gaps over the test battery",
        "convergence": "convergence-mode oracle on finite instances",
        "verify-bounds": "exponential sup moment and weight martingale checks",
        "analysis": "maximal inequality and stochastic Gronwall checks",
        "catalog": "list catalog models and condition profiles",
        "acceptance": "run the numbered acceptance criteria",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        if name == "acceptance":
            p.add_argument("criteria", nargs="*", type=int, help="criterion numbers (default: all)")
    return ap


def _versions() -> dict:
    return {"sddefeller": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pyyaml": yaml.__version__}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "catalog":
        _print_catalog(sys.stdout)
        return 0
    t0 = time.perf_counter()
    try:
        cfg = resolve_config(args)
        if args.command == "acceptance" and args.criteria:
            cfg["acceptance"] = {"criteria": args.criteria}
        files, checks, lines = HANDLERS[args.command](cfg)
    except (ConfigError, ModelError, GridError) as exc:
        print(f"sddefeller: config error: {exc}", file=sys.stderr)
        if isinstance(exc, ModelError) or "unknown model" in str(exc):
            _print_catalog(sys.stderr)
        return 2
    wall = time.perf_counter() - t0
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    for name, body in files.items():
        (out / name).write_text(body)
    manifest = {
        "command": args.command,
        "config": cfg,
        "seed": cfg["seed"],
        "versions": _versions(),
        "wall_time_s": wall,
        "outputs": sorted(files),
        "checks": checks,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    for line in lines:
        print(line)
    failed = [k for k, v in checks.items() if not v]
    for k, v in checks.items():
        print(f"{k}: {'PASS' if v else 'FAIL'}")
    if failed:
        print(f"sddefeller: failing criterion: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
