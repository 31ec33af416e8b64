"""Solvers for the stop-position problem.

A genetic algorithm searches the discrete candidate grids of all vehicles
through any objective (the simulation or a surrogate).  Linear and
quadratic surrogates also have exact discrete minimisers.
"""
import itertools
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .hybrid import DEFAULT_SIM
from .parallel import pmap
from .problem import ControlSolution, evaluate, vehicle_grids
from .sampling import sample_local
from . import surrogates


@dataclass(frozen=True)
class GAConfig:
    """Genetic-algorithm settings.

    The run stops when the best fitness improved by less than ``tolerance``
    per generation on average over the last ``stall_generations``
    generations, after ``max_generations``, or when ``max_time`` seconds
    have elapsed.  ``stall_generations=None`` disables the stall rule.
    """

    population: int = 50
    max_generations: int = 500
    stall_generations: Optional[int] = 50
    tolerance: float = 0.5
    crossover_fraction: float = 0.8
    mutation_rate: float = 0.1
    elite: int = 2
    tournament: int = 2
    max_time: Optional[float] = None
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if self.population < 4:
            raise ValueError("population must be >= 4")
        if not 0 <= self.elite < self.population:
            raise ValueError("elite must be in [0, population)")
        if not (0 <= self.crossover_fraction <= 1 and 0 <= self.mutation_rate <= 1):
            raise ValueError("crossover fraction and mutation rate must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown GA settings: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class GAResult:
    X: np.ndarray
    f: float
    generations: int
    evaluations: int
    timed_out: bool
    history: list = field(default_factory=list)   # best-ever f after each generation
    seconds: float = 0.0
    reason: str = ""


# -- objectives -------------------------------------------------------------

class SimulationObjective:
    """``X -> f`` by hybrid simulation, memoised, with a parallel batch call."""

    def __init__(self, scn, config=DEFAULT_SIM, workers=1):
        self.scn = scn
        self.config = config
        self.workers = workers
        self.cache = {}

    def _one(self, X):
        return evaluate(np.asarray(X, dtype=float), self.scn, self.config, check=False).f

    def __call__(self, X):
        return self.batch([X])[0]

    def batch(self, rows):
        keys = [tuple(float(v) for v in r) for r in rows]
        todo = [k for k in dict.fromkeys(keys) if k not in self.cache]
        if todo:
            for k, f in zip(todo, pmap(self._one, todo, self.workers)):
                self.cache[k] = f
        return np.array([self.cache[k] for k in keys])


class SurrogateObjective:
    """``X -> f_hat`` through a trained surrogate.

    Global models take the traffic-state columns ``suffix`` after the stop
    positions.
    """

    def __init__(self, model, suffix=None):
        self.model = model
        self.suffix = np.zeros(0) if suffix is None else np.asarray(suffix, dtype=float)

    def batch(self, rows):
        R = np.asarray(rows, dtype=float)
        R = np.atleast_2d(R)
        if self.suffix.size:
            R = np.hstack([R, np.tile(self.suffix, (R.shape[0], 1))])
        return np.asarray(self.model.predict(R), dtype=float).reshape(-1)

    def __call__(self, X):
        return float(self.batch([X])[0])


def _batch(objective, rows):
    if hasattr(objective, "batch"):
        return np.asarray(objective.batch(rows), dtype=float)
    return np.array([float(objective(r)) for r in rows])


# -- genetic algorithm ------------------------------------------------------

def ga_minimize(objective, grids, cfg=GAConfig(), initial=None):
    """Minimise ``objective`` over the product of the per-vehicle ``grids``.

    Chromosomes are grid indices, so every individual is feasible.
    ``initial`` optionally seeds the first population with position vectors
    (snapped to the nearest grid point).  All randomness comes from one
    generator consumed in the sequential loop, so parallel evaluation never
    changes the trajectory.
    """
    grids = [np.asarray(g, dtype=float) for g in grids]
    if not grids or any(g.size == 0 for g in grids):
        raise ValueError("every vehicle needs a nonempty grid")
    sizes = np.array([g.size for g in grids])
    nv = len(grids)
    rng = np.random.default_rng(cfg.seed)
    start = time.perf_counter()
    P = cfg.population

    def decode(ind):
        return np.array([g[i] for g, i in zip(grids, ind)])

    memo = {}

    def fitness(pop):
        keys = [tuple(int(v) for v in ind) for ind in pop]
        new = [k for k in dict.fromkeys(keys) if k not in memo]
        if new:
            vals = _batch(objective, [decode(k) for k in new])
            memo.update(zip(new, vals.tolist()))
        return np.array([memo[k] for k in keys])

    pop = rng.integers(0, sizes, size=(P, nv))
    if initial is not None:
        for j, X in enumerate(list(initial)[:P]):
            pop[j] = [int(np.argmin(np.abs(g - x))) for g, x in zip(grids, X)]
    fit = fitness(pop)
    b = int(np.argmin(fit))
    best, best_f = pop[b].copy(), float(fit[b])
    history = [best_f]
    timed_out = False
    reason = "max generations"
    gen = 0
    while gen < cfg.max_generations:
        if cfg.max_time is not None and time.perf_counter() - start >= cfg.max_time:
            timed_out = True
            reason = "time limit"
            break
        S = cfg.stall_generations
        if S is not None and len(history) > S and (history[-S - 1] - history[-1]) / S < cfg.tolerance:
            reason = "stall"
            break
        order = np.argsort(fit, kind="stable")
        children = [pop[i].copy() for i in order[:cfg.elite]]

        def pick():
            c = rng.integers(0, P, size=cfg.tournament)
            return pop[c[np.argmin(fit[c])]]

        while len(children) < P:
            a, b2 = pick(), pick()
            if rng.random() < cfg.crossover_fraction:
                mask = rng.random(nv) < 0.5
                c1 = np.where(mask, a, b2)
                c2 = np.where(mask, b2, a)
            else:
                c1, c2 = a.copy(), b2.copy()
            for c in (c1, c2):
                mut = rng.random(nv) < cfg.mutation_rate
                if mut.any():
                    c[mut] = rng.integers(0, sizes[mut])
                if len(children) < P:
                    children.append(c)
        pop = np.array(children)
        fit = fitness(pop)
        gen += 1
        b = int(np.argmin(fit))
        if fit[b] < best_f:
            best, best_f = pop[b].copy(), float(fit[b])
        history.append(best_f)
    return GAResult(decode(best), best_f, gen, len(memo), timed_out, history,
                    time.perf_counter() - start, reason)


# -- exact surrogate minimisers --------------------------------------------

def lr_exact_minimize(model, grids):
    """Exact minimiser of a linear surrogate: each vehicle to a grid end.

    Positive coefficient -> smallest grid point, negative -> largest,
    zero -> smallest.  Only the first ``len(grids)`` coefficients are
    decision variables.
    """
    c = np.asarray(model.coefficients, dtype=float)[:len(grids)]
    return np.array([g[-1] if ci < 0 else g[0] for g, ci in zip(map(np.sort, grids), c)])


def pr_minimize(model, grids, seed=0, limit=1_000_000, restarts=10, objective=None):
    """Minimise a quadratic surrogate over the discrete grids.

    Exhaustive when the product grid has at most ``limit`` points,
    otherwise coordinate descent over grid axes from ``restarts`` random
    starts.  Returns ``(X, f_hat, method)`` with method "exhaustive" or
    "coordinate descent".
    """
    objective = objective or SurrogateObjective(model)
    grids = [np.asarray(g, dtype=float) for g in grids]
    total = math.prod(g.size for g in grids)
    if total <= limit:
        best_X, best_f = None, math.inf
        it = itertools.product(*grids)
        while True:
            chunk = list(itertools.islice(it, 100_000))
            if not chunk:
                break
            vals = _batch(objective, chunk)
            j = int(np.argmin(vals))
            if vals[j] < best_f:
                best_X, best_f = np.array(chunk[j]), float(vals[j])
        return best_X, best_f, "exhaustive"
    rng = np.random.default_rng(seed)
    best_X, best_f = None, math.inf
    for _ in range(restarts):
        X = np.array([rng.choice(g) for g in grids])
        f = float(_batch(objective, [X])[0])
        improved = True
        while improved:
            improved = False
            for i, g in enumerate(grids):
                cand = np.tile(X, (g.size, 1))
                cand[:, i] = g
                vals = _batch(objective, cand)
                j = int(np.argmin(vals))
                if vals[j] < f - 1e-12:
                    X, f = cand[j].copy(), float(vals[j])
                    improved = True
        if f < best_f:
            best_X, best_f = X, f
    return best_X, best_f, "coordinate descent"


# -- end-to-end solvers -----------------------------------------------------

def _scored(X, scn, config, **meta):
    sol = evaluate(np.asarray(X, dtype=float), scn, config)
    sol.meta.update(meta)
    return sol


def direct_minimize(scn, cfg=GAConfig(), config=DEFAULT_SIM, initial=None):
    """GA through the simulation itself."""
    obj = SimulationObjective(scn, config, cfg.workers)
    res = ga_minimize(obj, vehicle_grids(scn), cfg, initial)
    return _scored(res.X, scn, config, solver="direct", timed_out=res.timed_out,
                   generations=res.generations, evaluations=res.evaluations,
                   seconds=res.seconds, stop_reason=res.reason, history=res.history)


def surrogate_minimize(model, scn, cfg=GAConfig(), config=DEFAULT_SIM, suffix=None,
                       initial=None):
    """Minimise a trained surrogate, then re-score the optimum by simulation.

    LR models with local columns use the exact sign rule, PR models the
    discrete quadratic minimiser; every other case runs the GA.
    """
    grids = vehicle_grids(scn)
    t0 = time.perf_counter()
    obj = SurrogateObjective(model, suffix)
    extra = {}
    if model.family == "LR" and suffix is None:
        X = lr_exact_minimize(model, grids)
        method = "sign rule"
    elif model.family == "PR":
        X, _, method = pr_minimize(model, grids, cfg.seed, objective=obj)
    else:
        res = ga_minimize(obj, grids, cfg, initial)
        X, method = res.X, "ga"
        extra = {"timed_out": res.timed_out, "generations": res.generations}
    f_hat = obj(X)
    return _scored(X, scn, config, solver=model.family, method=method, f_hat=f_hat,
                   solve_seconds=time.perf_counter() - t0, **extra)


def optimize_with_surrogate(scn, family, n_samples=500, seed=0, cfg=GAConfig(),
                            config=DEFAULT_SIM, hyper=None, workers=1, initial=None):
    """Sample the scenario, fit a local surrogate, minimise it, re-score.

    When fewer than ``n_samples`` distinct position vectors exist, every one
    of them is sampled.
    """
    t0 = time.perf_counter()
    n_samples = min(n_samples, math.prod(g.size for g in vehicle_grids(scn)))
    data = sample_local(scn, n_samples, seed, workers=workers, config=config)
    t1 = time.perf_counter()
    model = surrogates.fit_dataset(family, data, hyper, seed)
    t2 = time.perf_counter()
    sol = surrogate_minimize(model, scn, replace(cfg, seed=seed), config, initial=initial)
    sol.meta.update(sample_seconds=t1 - t0, fit_seconds=t2 - t1,
                    seconds=time.perf_counter() - t0, n_samples=n_samples)
    return sol


def exhaustive_minimize(scn, config=DEFAULT_SIM, workers=1):
    """Best grid point by simulating every combination (small problems only)."""
    obj = SimulationObjective(scn, config, workers)
    rows = list(itertools.product(*vehicle_grids(scn)))
    vals = obj.batch(rows)
    j = int(np.argmin(vals))
    return _scored(rows[j], scn, config, solver="exhaustive", evaluations=len(rows))
