"""Command-line entry point: ``curbflow <subcommand> ...``.

Errors go to standard error as ``E:<code>:<message>``; exit code 2 means a
configuration problem, 3 a numerical failure.  Every run writes
``manifest.json`` into its output directory.
"""
import argparse
import hashlib
import json
import os
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, surrogates
from .ctm import cross_check
from .evaluation import (ExperimentSpec, run_global_suite, run_local_suite, summarize,
                         write_cells, write_manifest, write_summary)
from .fd import DomainError
from .hybrid import simulate
from .laxhopf import ConfigurationError, boundary_counts
from .mpc import DETOUR_REGIMES, detour_sweep, run as mpc_run, write_sweep
from .optimizer import GAConfig, direct_minimize, optimize_with_surrogate, surrogate_minimize
from .problem import FeasibilityError, evaluate, write_solutions
from .sampling import CLASSES, Dataset, SizeError, Template, sample_global, sample_local
from .scenario import Scenario, bundled
from .surrogates.base import NumericalError, SchemaError

CONFIG_ERRORS = (ConfigurationError, FeasibilityError, SchemaError, SizeError, DomainError,
                 FileNotFoundError, IsADirectoryError, PermissionError, ValueError, KeyError)
NUMERICAL_ERRORS = (NumericalError, FloatingPointError, np.linalg.LinAlgError)

#: Keys a ``--config`` JSON file may set; "ga" holds :class:`GAConfig` fields.
CONFIG_KEYS = {"scenario", "positions", "solver", "family", "n_samples", "seed", "workers",
               "out", "ga", "hyper", "mode", "scenario_class", "n", "dataset", "model",
               "sweep", "seeds", "classes", "families", "sizes", "replications",
               "test_size", "no_me", "cell", "ctm_dt", "baseline_seed", "max_time"}


class UsageError(ConfigurationError):
    pass


def _load_scenario(ref):
    if ref is None:
        raise UsageError("a scenario is required")
    p = Path(ref)
    if p.suffix == ".json" or p.exists():
        return Scenario.from_json(p)
    try:
        return bundled(ref)
    except ConfigurationError:
        raise
    except FileNotFoundError:
        raise UsageError(f"scenario file not found: {ref}") from None


def _floats(text):
    if text is None or isinstance(text, list):
        return text
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    if text is None or isinstance(text, list):
        return text
    return [int(v) for v in str(text).split(",") if v.strip()]


def _strs(text):
    if text is None or isinstance(text, list):
        return text
    return [v.strip() for v in str(text).split(",") if v.strip()]


def resolve(args):
    """Merge defaults, the JSON config file, ``CURBFLOW_SEED`` and flags.

    Precedence (lowest first): built-in defaults, config file,
    ``CURBFLOW_SEED``, explicit command-line flags.
    """
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"invalid JSON in {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(cfg) - CONFIG_KEYS
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    env = os.environ.get("CURBFLOW_SEED")
    if env is not None:
        try:
            cfg["seed"] = int(env)
        except ValueError:
            raise UsageError(f"CURBFLOW_SEED must be an integer, got {env!r}") from None
    for k, v in vars(args).items():
        if k not in ("command", "config", "func") and v is not None:
            cfg[k] = v
    cfg.setdefault("seed", 0)
    cfg.setdefault("workers", 1)
    cfg.setdefault("out", "out")
    try:
        ga = GAConfig.from_dict(cfg.get("ga", {}))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad ga section: {exc}") from None
    if cfg.get("max_time") is not None:
        ga = replace(ga, max_time=float(cfg["max_time"]))
    cfg["ga"] = replace(ga, workers=int(cfg["workers"]))
    return cfg


def _out(cfg):
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    return out


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    return str(o)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default)
                          + "\n")


def _manifest(out, command, cfg, argv, outputs, seconds):
    import numba
    import scipy
    import sklearn
    blob = json.dumps(cfg, sort_keys=True, default=_json_default).encode()
    files = {}
    for f in outputs:
        p = Path(f)
        if p.exists():
            files[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    _write_json(out / "manifest.json", {
        "command": command, "argv": argv, "config": cfg,
        "config_hash": hashlib.sha256(blob).hexdigest(), "seed": cfg.get("seed"),
        "versions": {"curbflow": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "sklearn": sklearn.__version__,
                     "numba": numba.__version__, "python": platform.python_version()},
        "backend": os.environ.get("CURBFLOW_NUMBA", "1"),
        "outputs": files, "seconds": seconds})


# -- subcommands -----------------------------------------------------------------

def cmd_simulate(cfg, out):
    scn = _load_scenario(cfg.get("scenario"))
    X = _floats(cfg.get("positions"))
    sol = evaluate(np.asarray(X if X is not None else scn.positions(), dtype=float), scn,
                   check=X is not None)
    res = simulate(scn, X, warn=False)
    surf = res.surface()
    surf.to_csv(out / "density.csv")
    q_in, q_out = boundary_counts(surf, scn.step)
    with open(out / "boundary.csv", "w") as fh:
        fh.write("k,t_start,q_in,q_out,blocked\n")
        for k in range(scn.n_steps):
            fh.write(f"{k},{k * scn.step:g},{q_in[k]:.10g},{q_out[k]:.10g},"
                     f"{res.blocked[k]:.10g}\n")
    _write_json(out / "summary.json", {
        "scenario": scn.name, "positions": sol.X, "objective": sol.f,
        "outflow": sol.outflow_sum, "spillback_penalty": sol.spillback_penalty,
        "detour_penalty": sol.detour_penalty, "unreached": sol.meta["unreached"],
        "arrivals": [None if not np.isfinite(a) else float(a) for a in res.arrivals]})
    print(json.dumps({"objective": sol.f}))
    return ["density.csv", "boundary.csv", "summary.json"]


def cmd_sample(cfg, out):
    seed, n = int(cfg["seed"]), int(cfg.get("n", 100))
    if cfg.get("mode", "local") == "local":
        data = sample_local(_load_scenario(cfg.get("scenario")), n, seed, int(cfg["workers"]))
    else:
        name = cfg.get("scenario_class", "C1")
        if name not in CLASSES:
            raise UsageError(f"unknown scenario class {name}")
        data = sample_global(Template.for_class(name), n, seed, int(cfg["workers"]))
    data.to_csv(out / "dataset.csv")
    return ["dataset.csv", "dataset.csv.json"]


def cmd_train(cfg, out):
    path = cfg.get("dataset")
    if path is None:
        raise UsageError("train needs --dataset")
    try:
        data = Dataset.from_csv(path)
    except FileNotFoundError:
        raise UsageError(f"dataset not found: {path}") from None
    family = cfg.get("family", "GPR")
    model = surrogates.fit_dataset(family, data, cfg.get("hyper"), int(cfg["seed"]))
    model.save(out / "model.json")
    _write_json(out / "train.json", {"family": family, "rows": len(data),
                                     "meta": model.meta, "hyper": model.hyper})
    return ["model.json", "train.json"]


def cmd_optimize(cfg, out):
    scn = _load_scenario(cfg.get("scenario"))
    solver, seed, ga = cfg.get("solver", "direct"), int(cfg["seed"]), cfg["ga"]
    if solver == "direct":
        sol = direct_minimize(scn, replace(ga, seed=seed))
    elif cfg.get("model"):
        sol = surrogate_minimize(surrogates.load(cfg["model"]), scn, replace(ga, seed=seed))
    elif solver in surrogates.FAMILIES:
        sol = optimize_with_surrogate(scn, solver, int(cfg.get("n_samples", 500)), seed, ga,
                                      hyper=cfg.get("hyper"), workers=int(cfg["workers"]))
    else:
        raise UsageError(f"unknown solver {solver!r}")
    write_solutions(out / "solution.csv", [sol])
    meta = {k: v for k, v in sol.meta.items() if k != "history"}
    _write_json(out / "summary.json", {"solver": solver, "positions": sol.X,
                                       "objective": sol.f, "meta": meta})
    print(json.dumps({"objective": sol.f, "positions": [float(x) for x in sol.X]}))
    return ["solution.csv", "summary.json"]


def cmd_mpc_run(cfg, out):
    scn = _load_scenario(cfg.get("scenario", "ride_hailing"))
    solver = cfg.get("solver", "direct")
    seeds = _ints(cfg.get("seeds")) or [int(cfg["seed"])]
    kw = dict(ga=cfg["ga"], n_samples=int(cfg.get("n_samples", 500)),
              baseline_seed=int(cfg.get("baseline_seed", 0)), workers=int(cfg["workers"]))
    if cfg.get("sweep"):
        solvers = _strs(solver)
        rows = detour_sweep(scn, solvers, DETOUR_REGIMES, seeds,
                            weight_seed=int(cfg["seed"]), **kw)
        write_sweep(out / "sweep.csv", rows)
        _write_json(out / "sweep.json", rows)
        return ["sweep.csv", "sweep.json"]
    files = []
    for seed in seeds:
        rep = mpc_run(scn, solver, seed=seed, **kw)
        prefix = out / f"rollout_{solver}_{seed}"
        rep.write(prefix)
        simulate(scn, rep.realized.X, warn=False).surface().to_csv(f"{prefix}_density.csv")
        files += [f"{prefix}.json", f"{prefix}_solves.csv", f"{prefix}_density.csv"]
        print(json.dumps({"seed": seed, "objective": rep.realized.f,
                          "baseline_objective": rep.baseline.f,
                          "improvement_pct": rep.improvement}))
    return files


def _spec(cfg, local):
    kw = {}
    if cfg.get("classes"):
        kw["classes"] = tuple(_strs(cfg["classes"]))
    if cfg.get("families"):
        kw["families"] = tuple(_strs(cfg["families"]))
    if cfg.get("sizes"):
        kw["local_sizes" if local else "global_sizes"] = tuple(_ints(cfg["sizes"]))
    if cfg.get("replications"):
        kw["replications"] = int(cfg["replications"])
    if cfg.get("test_size"):
        kw["test_size"] = int(cfg["test_size"])
    return ExperimentSpec(seed=int(cfg["seed"]), with_me=not cfg.get("no_me", False),
                          ga=cfg["ga"], hyper=cfg.get("hyper") or {},
                          workers=int(cfg["workers"]), **kw)


def _suite(cfg, out, local):
    spec = _spec(cfg, local)
    t0 = time.perf_counter()
    if local:
        rows, _ = run_local_suite(spec)
    else:
        rows = run_global_suite(spec)
    summary = summarize(rows)
    write_cells(out / "cells.csv", rows)
    write_summary(out / "summary.csv", summary)
    write_manifest(out / "suite_manifest.json", spec,
                   {"seconds": time.perf_counter() - t0, "mode": "local" if local else "global"})
    return ["cells.csv", "summary.csv", "suite_manifest.json"]


def cmd_oracle_diff(cfg, out):
    scn = _load_scenario(cfg.get("scenario"))
    r = cross_check(scn, _floats(cfg.get("positions")), float(cfg.get("cell", 7.0)),
                    float(cfg.get("ctm_dt", 0.5)))
    r["lh"].to_csv(out / "density_laxhopf.csv")
    r["ctm"].to_csv(out / "density_ctm.csv")
    summary = {k: v for k, v in r.items() if k not in ("lh", "ctm")}
    _write_json(out / "oracle_diff.json", summary)
    print(json.dumps(summary))
    return ["density_laxhopf.csv", "density_ctm.csv", "oracle_diff.json"]


COMMANDS = {
    "simulate": (cmd_simulate, "simulate a scenario: density CSV and objective"),
    "sample": (cmd_sample, "draw a local or global training set"),
    "train": (cmd_train, "fit a surrogate to a dataset"),
    "optimize": (cmd_optimize, "solve for stop positions (direct or surrogate)"),
    "mpc-run": (cmd_mpc_run, "controller rollout, optionally a detour-weight sweep"),
    "evaluate-local": (lambda c, o: _suite(c, o, True), "local surrogate suite"),
    "evaluate-global": (lambda c, o: _suite(c, o, False), "global surrogate suite"),
    "oracle-diff": (cmd_oracle_diff, "compare Lax-Hopf and cell-transmission fields"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="curbflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"curbflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        s = sub.add_parser(name, help=helptext)
        s.add_argument("scenario", nargs="?",
                       help="scenario JSON path or bundled name (ride_hailing, segment_600)")
        s.add_argument("--config", help="JSON file with run settings (strict keys)")
        s.add_argument("--out", help="output directory (default: out)")
        s.add_argument("--seed", type=int, help="seed (overrides CURBFLOW_SEED)")
        s.add_argument("--workers", type=int, help="parallel worker processes")
        s.add_argument("--max-time", type=float, dest="max_time", help="GA wall-time cap (s)")
        if name in ("simulate", "oracle-diff"):
            s.add_argument("--positions", help="comma-separated stop positions (m)")
        if name == "oracle-diff":
            s.add_argument("--cell", type=float, help="oracle cell length (m)")
            s.add_argument("--ctm-dt", type=float, dest="ctm_dt", help="oracle step (s)")
        if name == "sample":
            s.add_argument("--mode", choices=["local", "global"])
            s.add_argument("--n", type=int, help="rows")
            s.add_argument("--class", dest="scenario_class", help="C1..C5 for global mode")
        if name == "train":
            s.add_argument("--dataset", help="dataset CSV (with .json sidecar)")
            s.add_argument("--family", choices=list(surrogates.FAMILIES))
        if name in ("optimize", "mpc-run"):
            s.add_argument("--solver", help="direct, identity (mpc-run) or a family; "
                                            "comma-separated with --sweep")
            s.add_argument("--n-samples", type=int, dest="n_samples")
        if name == "optimize":
            s.add_argument("--model", help="pre-trained surrogate JSON")
        if name == "mpc-run":
            s.add_argument("--sweep", action="store_true", default=None,
                           help="run the five detour-weight regimes")
            s.add_argument("--seeds", help="comma-separated controller seeds")
            s.add_argument("--baseline-seed", type=int, dest="baseline_seed")
        if name.startswith("evaluate"):
            s.add_argument("--classes", help="comma-separated, e.g. C1,C2")
            s.add_argument("--families", help="comma-separated, e.g. LR,GPR")
            s.add_argument("--sizes", help="comma-separated training sizes")
            s.add_argument("--replications", type=int)
            s.add_argument("--test-size", type=int, dest="test_size")
            s.add_argument("--no-me", action="store_true", default=None, dest="no_me",
                           help="skip the optimisation-based mean error")
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 2
        if code != 0:
            print("E:2:invalid command line", file=sys.stderr)
        return code
    try:
        cfg = resolve(args)
        out = _out(cfg)
        t0 = time.perf_counter()
        outputs = COMMANDS[args.command][0](cfg, out)
        _manifest(out, args.command, cfg, argv, [out / Path(f).name for f in outputs],
                  time.perf_counter() - t0)
        return 0
    except NUMERICAL_ERRORS as exc:
        print(f"E:3:{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except CONFIG_ERRORS as exc:
        print(f"E:2:{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
