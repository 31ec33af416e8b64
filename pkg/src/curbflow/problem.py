"""Stop-position optimisation problem: objective, feasibility, evaluator.

Boundary flows in the objective are step averages in veh/s.  The blocked
demand of a step is the demand waiting to enter (fresh arrivals plus the
upstream queue) minus what was admitted, so the spillback sum accumulates
the time vehicles spend blocked upstream.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .hybrid import simulate, DEFAULT_SIM
from .laxhopf import ConfigurationError


class FeasibilityError(ValueError):
    """A stop-position vector violates a named constraint."""


@dataclass
class ControlSolution:
    """Stop positions with the simulated objective and its three terms."""

    X: np.ndarray
    f: float
    outflow_sum: float
    spillback_sum: float
    detour_penalty: float
    w_SB: float
    meta: dict = field(default_factory=dict)

    @property
    def spillback_penalty(self):
        return self.w_SB * self.spillback_sum

    def recombined(self):
        return -self.outflow_sum + self.w_SB * self.spillback_sum + self.detour_penalty

    def row(self):
        return ([float(x) for x in self.X]
                + [self.f, self.outflow_sum, self.spillback_penalty, self.detour_penalty])

    @staticmethod
    def header(n):
        return [f"x{i + 1}" for i in range(n)] + ["f", "outflow", "spillback_penalty",
                                                  "detour_penalty"]


def write_solutions(path, solutions):
    """Results CSV: positions, objective, then its three terms."""
    n = len(solutions[0].X) if solutions else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ControlSolution.header(n))
        for s in solutions:
            w.writerow([f"{v:.10g}" for v in s.row()])


def stability_interval(scn):
    """Open interval of admissible stop positions (m)."""
    fd = scn.fd
    return fd.w_c * scn.step, scn.L - fd.v_f * scn.step


def candidate_grid(scn, vehicle=None):
    """Admissible stop positions, multiples of ``v_f`` (1 s of free flow).

    With ``vehicle`` (index among approaching vehicles) the detour box of
    that vehicle is applied as well.
    """
    lo, hi = stability_interval(scn)
    unit = scn.fd.v_f
    m = np.arange(math.floor(lo / unit), math.ceil(hi / unit) + 1)
    pts = m * unit
    pts = pts[(pts > lo + 1e-9) & (pts < hi - 1e-9)]
    w = scn.weights
    if vehicle is not None and w.X_D is not None:
        xd = w.X_D[vehicle]
        us = w.X_US[vehicle] if w.X_US is not None else math.inf
        ds = w.X_DS[vehicle] if w.X_DS is not None else math.inf
        pts = pts[(pts >= xd - us - 1e-9) & (pts <= xd + ds + 1e-9)]
    if pts.size == 0:
        raise ConfigurationError("empty candidate grid")
    return pts


def vehicle_grids(scn):
    """Per-vehicle candidate grids for the approaching vehicles."""
    return [candidate_grid(scn, i) for i in range(len(scn.approaching))]


def check_feasible(X, scn):
    X = np.asarray(X, dtype=float)
    n = len(scn.approaching)
    if X.shape != (n,):
        raise FeasibilityError(f"expected {n} stop positions, got shape {X.shape}")
    lo, hi = stability_interval(scn)
    for i, x in enumerate(X):
        if not lo < x < hi:
            raise FeasibilityError(f"stability: x[{i}]={x} outside ({lo:g}, {hi:g})")
    w = scn.weights
    if w.X_D is not None:
        xd = np.asarray(w.X_D, dtype=float)
        if w.X_US is not None and np.any(X < xd - np.asarray(w.X_US) - 1e-9):
            raise FeasibilityError("detour box: position upstream of X_D - X_US")
        if w.X_DS is not None and np.any(X > xd + np.asarray(w.X_DS) + 1e-9):
            raise FeasibilityError("detour box: position downstream of X_D + X_DS")
    return X


def detour_penalty(X, scn):
    w = scn.weights
    if w.W_D is None or w.X_D is None:
        return 0.0
    return float(np.dot(np.asarray(w.W_D, dtype=float),
                        np.abs(np.asarray(w.X_D, dtype=float) - np.asarray(X, dtype=float))))


def objective_terms(result, scn):
    """(outflow_sum, spillback_sum) of a simulation result, in veh/s summed over steps."""
    outflow = float(np.sum(result.q_out) / scn.step)
    spill = float(np.sum(result.blocked) / scn.step)
    return outflow, spill


def evaluate(X, scn, config=DEFAULT_SIM, check=True):
    """Simulate ``scn`` with approaching stops at ``X`` and score it."""
    X = check_feasible(X, scn) if check else np.asarray(X, dtype=float)
    res = simulate(scn, X, config, warn=False)
    outflow, spill = objective_terms(res, scn)
    det = detour_penalty(X, scn)
    w_SB = float(scn.weights.w_SB)
    f = -outflow + w_SB * spill + det
    return ControlSolution(X.copy(), f, outflow, spill, det, w_SB,
                           {"unreached": list(res.unreached)})


def objective_function(scn, config=DEFAULT_SIM):
    """Memoised ``X -> f`` closure over ``scn`` for the optimisers."""
    cache = {}

    def fn(X):
        key = tuple(float(x) for x in X)
        if key not in cache:
            cache[key] = evaluate(np.array(key), scn, config, check=False).f
        return cache[key]

    fn.cache = cache
    return fn
