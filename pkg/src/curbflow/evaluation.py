"""Surrogate accuracy metrics and the replicated scenario-class suites.

The ranking error counts pairs of test solutions whose order a surrogate
inverts; the mean error is the simulated objective lost by optimising the
surrogate instead of the simulation.  Suites sweep families, training sizes,
scenario classes and replications and write one CSV row per cell.
"""
import csv
import json
import platform
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__, surrogates
from .hybrid import DEFAULT_SIM
from .optimizer import GAConfig, direct_minimize, surrogate_minimize
from .parallel import pmap
from .problem import evaluate
from .sampling import (CLASSES, Template, encode_global, sample_global, sample_local,
                       sub_scenarios, subscenario_seeds)
from .surrogates.base import SchemaError


def ranking_error(f_true, f_pred):
    """Swapped pairs over the squared number of solutions.

    A pair is swapped when the two orderings disagree strictly; ties on
    either side count as agreeing.
    """
    a = np.asarray(f_true, dtype=float)
    b = np.asarray(f_pred, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise SchemaError("f_true and f_pred must be 1-D and of equal length")
    n = a.size
    if n < 2:
        raise SchemaError("need at least two solutions")
    swapped = 0
    # row blocks keep memory at O(block * n)
    for i0 in range(0, n, 512):
        da = a[i0:i0 + 512, None] - a[None, :]
        db = b[i0:i0 + 512, None] - b[None, :]
        swapped += int(np.count_nonzero(da * db < 0))
    return (swapped // 2) / n ** 2


def mean_error(f_surrogate, f_direct):
    """Simulated objective lost against the direct solution, never negative."""
    fs = getattr(f_surrogate, "f", f_surrogate)
    fd = getattr(f_direct, "f", f_direct)
    return max(0.0, float(fs) - float(fd))


@dataclass
class ExperimentSpec:
    classes: tuple = tuple(CLASSES)
    families: tuple = tuple(surrogates.FAMILIES)
    local_sizes: tuple = (100, 200, 300, 400, 500)
    global_sizes: tuple = (5000, 10000, 15000)
    replications: int = 5
    test_size: int = 1000
    seed: int = 0
    seeds: dict = None                  # class -> sub-scenario seeds; None = bundled
    with_me: bool = True
    ga: GAConfig = GAConfig()
    direct_ga: GAConfig = GAConfig(max_time=1800.0)
    hyper: dict = field(default_factory=dict)   # family -> hyperparameters
    workers: int = 1

    def __post_init__(self):
        unknown = set(self.classes) - set(CLASSES)
        if unknown:
            raise ValueError(f"unknown scenario classes {sorted(unknown)}")
        if self.replications < 1 or self.test_size < 2:
            raise ValueError("need replications >= 1 and test_size >= 2")

    def sub_seeds(self, name):
        return (self.seeds or {}).get(name) or subscenario_seeds()[name]

    def to_dict(self):
        d = asdict(self)
        d["ga"], d["direct_ga"] = self.ga.to_dict(), self.direct_ga.to_dict()
        return d


def _seed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _class_index(name):
    return list(CLASSES).index(name)


# -- per-scenario preparation -------------------------------------------------

def _prepare(args):
    """Test set and (optionally) the direct optimum of one sub-scenario."""
    spec, name, j, scn = args
    c = _class_index(name)
    test = sample_local(scn, spec.test_size, _seed(spec.seed, 1, c, j))
    direct = None
    if spec.with_me:
        sol = direct_minimize(scn, replace(spec.direct_ga, seed=_seed(spec.seed, 2, c, j)))
        direct = sol.f
    return test, direct


def _scenarios(spec):
    out = []
    for name in spec.classes:
        for j, scn in enumerate(sub_scenarios(name, spec.sub_seeds(name))):
            out.append((name, j, scn))
    return out


def _score(model, scn, test, direct, spec, suffix=None, rows=None):
    pred = model.predict(test.inputs if rows is None else rows)
    cell = {"RE": ranking_error(test.targets, pred)}
    if spec.with_me:
        t0 = time.perf_counter()
        sol = surrogate_minimize(model, scn, spec.ga, suffix=suffix)
        cell["solve_seconds"] = time.perf_counter() - t0
        cell["ME"] = mean_error(sol, direct)
    return cell


def _local_job(args):
    spec, name, j, scn, rep, test, direct = args
    c = _class_index(name)
    s = _seed(spec.seed, 3, c, j, rep)
    t0 = time.perf_counter()
    train = sample_local(scn, max(spec.local_sizes), s)
    sample_seconds = time.perf_counter() - t0
    rows = []
    for fam in spec.families:
        for n in spec.local_sizes:
            row = {"mode": "local", "family": fam, "size": n, "class": name, "sub": j,
                   "replication": rep, "sample_seconds": sample_seconds * n / len(train)}
            try:
                t1 = time.perf_counter()
                model = surrogates.fit_dataset(fam, train.head(n), spec.hyper.get(fam), s)
                row["fit_seconds"] = time.perf_counter() - t1
                row.update(_score(model, scn, test, direct, spec))
            except Exception as exc:          # a failed cell is reported, not fatal
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows


def _warm_up(spec, scn):
    data = sample_local(scn, 20, 0)
    for fam in spec.families:
        try:
            surrogates.fit_dataset(fam, data, spec.hyper.get(fam), 0).predict(data.inputs)
        except Exception:
            pass


def run_local_suite(spec):
    """Cell rows for every (family, size, class, sub-scenario, replication)."""
    scns = _scenarios(spec)
    _warm_up(spec, scns[0][2])
    prep = pmap(_prepare, [(spec, n, j, s) for n, j, s in scns], spec.workers)
    jobs = [(spec, n, j, s, rep, t, d) for (n, j, s), (t, d) in zip(scns, prep)
            for rep in range(spec.replications)]
    rows = [r for rs in pmap(_local_job, jobs, spec.workers) for r in rs]
    return rows, {(n, j): p for (n, j, _), p in zip(scns, prep)}


def _global_job(args):
    spec, name, rep, subs = args
    c = _class_index(name)
    template = Template.for_class(name)
    s = _seed(spec.seed, 4, c, rep)
    t0 = time.perf_counter()
    train = sample_global(template, max(spec.global_sizes), s)
    sample_seconds = time.perf_counter() - t0
    rows = []
    for fam in spec.families:
        for n in spec.global_sizes:
            base = {"mode": "global", "family": fam, "size": n, "class": name,
                    "replication": rep, "sample_seconds": sample_seconds * n / len(train)}
            try:
                t1 = time.perf_counter()
                model = surrogates.fit_dataset(fam, train.head(n), spec.hyper.get(fam), s)
                fit_seconds = time.perf_counter() - t1
            except Exception as exc:
                for j, *_ in subs:
                    rows.append({**base, "sub": j, "error": f"{type(exc).__name__}: {exc}"})
                continue
            for j, scn, test, direct in subs:
                row = {**base, "sub": j, "fit_seconds": fit_seconds}
                try:
                    enc = np.array([encode_global(template, scn, x) for x in test.inputs])
                    suffix = enc[0, template.n_approaching:]
                    row.update(_score(model, scn, test, direct, spec, suffix, enc))
                except Exception as exc:
                    row["error"] = f"{type(exc).__name__}: {exc}"
                rows.append(row)
    return rows


def run_global_suite(spec, prepared=None):
    """Cell rows for global models, tested on the local test sets."""
    scns = _scenarios(spec)
    if prepared is None:
        prep = pmap(_prepare, [(spec, n, j, s) for n, j, s in scns], spec.workers)
        prepared = {(n, j): p for (n, j, _), p in zip(scns, prep)}
    jobs = []
    for name in spec.classes:
        subs = [(j, s, *prepared[(n, j)]) for n, j, s in scns if n == name]
        for rep in range(spec.replications):
            jobs.append((spec, name, rep, subs))
    return [r for rs in pmap(_global_job, jobs, spec.workers) for r in rs]


# -- tables ------------------------------------------------------------------------

CELL_KEYS = ["mode", "family", "size", "class", "sub", "replication", "RE", "ME",
             "sample_seconds", "fit_seconds", "solve_seconds", "error"]


def write_cells(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, CELL_KEYS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.10g}" if isinstance(r.get(k), float) else r.get(k, ""))
                        for k in CELL_KEYS})


def summarize(rows):
    """Mean RE / ME / timings per (mode, family, size, class), plus per-class-averaged rows."""
    groups = {}
    for r in rows:
        groups.setdefault((r["mode"], r["family"], r["size"], r["class"]), []).append(r)
    out = []
    for key, rs in sorted(groups.items(), key=lambda kv: tuple(map(str, kv[0]))):
        ok = [r for r in rs if "error" not in r]

        def mean(k):
            v = [r[k] for r in ok if k in r]
            return float(np.mean(v)) if v else float("nan")

        out.append({"mode": key[0], "family": key[1], "size": key[2], "class": key[3],
                    "RE": mean("RE"), "ME": mean("ME"), "cells": len(ok),
                    "missing": len(rs) - len(ok), "sample_seconds": mean("sample_seconds"),
                    "fit_seconds": mean("fit_seconds"), "solve_seconds": mean("solve_seconds")})
    return out


def mean_re(summary, mode, family, size):
    """RE averaged over the scenario classes of a summary."""
    v = [r["RE"] for r in summary
         if r["mode"] == mode and r["family"] == family and r["size"] == size]
    return float(np.nanmean(v)) if v else float("nan")


SUMMARY_KEYS = ["mode", "family", "size", "class", "RE", "ME", "cells", "missing",
                "sample_seconds", "fit_seconds", "solve_seconds"]


def write_summary(path, summary):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, SUMMARY_KEYS)
        w.writeheader()
        for r in summary:
            w.writerow({k: (f"{r[k]:.10g}" if isinstance(r[k], float) else r[k])
                        for k in SUMMARY_KEYS})


def manifest(spec, extra=None):
    """Seeds, hyperparameters, versions and machine info of a suite run."""
    import numba
    import scipy
    import sklearn
    d = {"spec": spec.to_dict(), "curbflow": __version__, "numpy": np.__version__,
         "scipy": scipy.__version__, "sklearn": sklearn.__version__,
         "numba": numba.__version__, "python": platform.python_version(),
         "machine": platform.machine(), "processor": platform.processor(),
         "hyper_defaults": {k: v.defaults for k, v in surrogates.FAMILIES.items()},
         "sim": asdict(DEFAULT_SIM)}
    d.update(extra or {})
    return d


def write_manifest(path, spec, extra=None):
    with open(path, "w") as fh:
        json.dump(manifest(spec, extra), fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
