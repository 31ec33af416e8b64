"""Rolling-horizon stop-position controller.

Every control interval the controller looks for vehicles that will enter
within the MPC range, rebuilds the prediction scenario from the realised
traffic state, solves for their stop positions and commits each vehicle's
position when it enters the segment.
"""
import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from .hybrid import DEFAULT_SIM, simulate
from .optimizer import GAConfig, direct_minimize, optimize_with_surrogate
from .problem import candidate_grid, evaluate
from .scenario import Scenario, StopVehicle, Weights, segment_snapshot

#: Detour-weight regimes: all zero, then uniform draws within each bound pair.
DETOUR_REGIMES = [(0.0, 0.0), (1e-4, 1e-3), (1e-3, 1e-2), (1e-2, 1e-1), (1e-1, 1.0)]


@dataclass
class ControllerState:
    """Clock, assignments and solve log of one rollout.

    ``pending`` positions may change until the vehicle enters; ``committed``
    ones never change.
    """

    t: float = 0.0
    pending: dict = field(default_factory=dict)
    committed: dict = field(default_factory=dict)
    mpc_range: float = 150.0
    horizon: float = 600.0
    interval: float = 10.0
    solver: str = "direct"
    log: list = field(default_factory=list)

    def commit(self, vid, x):
        if vid in self.committed:
            raise RuntimeError(f"vehicle {vid} is already committed")
        self.pending.pop(vid, None)
        self.committed[vid] = float(x)


@dataclass
class Controller:
    """Controller settings around a scenario.

    ``solver`` is "direct", "identity" (always the no-control positions),
    a surrogate family name, or a callable ``(window_scenario, state,
    initial) -> (X, meta)``.  ``baseline`` maps vehicle id to its
    no-control position.
    """

    scn: Scenario
    baseline: dict
    solver: Union[str, Callable] = "direct"
    ga: GAConfig = GAConfig()
    n_samples: int = 500
    seed: int = 0
    mpc_range: float = 150.0
    horizon: float = 600.0
    interval: float = 10.0
    state_cells: int = 30
    workers: int = 1
    config: object = DEFAULT_SIM

    def new_state(self):
        name = self.solver if isinstance(self.solver, str) else getattr(
            self.solver, "__name__", "custom")
        return ControllerState(0.0, {}, {}, self.mpc_range, self.horizon, self.interval, name)

    # -- information available at the clock ------------------------------
    def realized(self, state):
        """Simulation of ``[0, t]`` with the committed vehicles that have entered."""
        scn, t = self.scn, state.t
        k = int(round(t / scn.step))
        vehicles = [replace(v, stop_position=state.committed[v.id])
                    for v in scn.vehicles if v.approaching and v.entry_time < t]
        vehicles += [v for v in scn.vehicles if not v.approaching]
        past = Scenario(fd=scn.fd, L=scn.L, T=t, initial_density=scn.initial_density,
                        demand=scn.demand[:k], supply=scn.supply[:k], n_lanes=scn.n_lanes,
                        step=scn.step, signal=scn.signal, vehicles=vehicles,
                        weights=Weights(w_SB=scn.weights.w_SB),
                        initial_queue=scn.initial_queue)
        return past, simulate(past, config=self.config, warn=False)

    def window(self, state, ids):
        """Prediction scenario at the clock for the approaching vehicles ``ids``.

        Demand and supply are held at their current values over the
        horizon (persistence forecast).
        """
        scn, t = self.scn, state.t
        k = min(int(round(t / scn.step)), scn.n_steps - 1)
        if t > 0:
            past, res = self.realized(state)
            edges = np.linspace(0.0, scn.L, self.state_cells + 1)
            M = res.count(np.full_like(edges, t), edges)
            rho = np.clip(-np.diff(M) / np.diff(edges), 0.0, scn.fd.rho_m)
            queue = float(res.blocked[-1])
            on_seg = self._on_segment(past, res, t)
        else:
            rho, queue = scn.initial_density, scn.initial_queue
            on_seg = [v for v in scn.vehicles if not v.approaching]
        by_id = {v.id: v for v in scn.vehicles}
        app = [StopVehicle(i, by_id[i].stop_duration, entry_time=by_id[i].entry_time - t)
               for i in ids]
        forecast = replace(scn, demand=np.full(scn.n_steps, scn.demand[k]),
                           supply=np.full(scn.n_steps, scn.supply[k]))
        return segment_snapshot(forecast, t, rho, on_seg, app, self.horizon, queue,
                                self._weights(ids))

    def _on_segment(self, past, res, t):
        """Vehicles still travelling to or standing at their stop at ``t``."""
        out = []
        for j, v in enumerate(past.vehicles):
            a = res.arrivals[j]
            if np.isfinite(a):
                if a + v.stop_duration <= t + 1e-9:
                    continue
                out.append(StopVehicle(v.id, a + v.stop_duration - t,
                                       start_position=v.stop_position,
                                       stop_position=v.stop_position))
            else:
                x = float(res.trajectories[-1, j])
                out.append(StopVehicle(v.id, v.stop_duration,
                                       start_position=min(x, v.stop_position),
                                       stop_position=v.stop_position))
        return out

    def _weights(self, ids):
        w = self.scn.weights
        index = {v.id: i for i, v in enumerate(self.scn.approaching)}
        pick = (lambda a: None if a is None else [a[index[i]] for i in ids])
        return Weights(w.w_SB, pick(w.W_D), pick(w.X_D), pick(w.X_US), pick(w.X_DS))

    # -- one control interval --------------------------------------------
    def step(self, state):
        """Solve for vehicles in range, then commit those entering now."""
        scn, t = self.scn, state.t
        for v in scn.approaching:
            if v.entry_time < t and v.id not in state.committed:
                state.commit(v.id, state.pending.get(v.id, self.baseline[v.id]))
        ids = [v.id for v in scn.approaching
               if v.id not in state.committed and t <= v.entry_time <= t + self.mpc_range]
        if ids and t < scn.T:
            self._solve(state, ids)
        for v in scn.approaching:
            if v.entry_time <= t and v.id not in state.committed:
                state.commit(v.id, state.pending.get(v.id, self.baseline[v.id]))
        state.t = t + self.interval
        return state

    def _solve(self, state, ids):
        win = self.window(state, ids)
        initial = [[state.pending.get(i, self.baseline[i]) for i in ids]]
        seed = int(np.random.SeedSequence([self.seed, len(state.log)]).generate_state(1)[0])
        t0 = time.perf_counter()
        timed_out = False
        if callable(self.solver):
            X, meta = self.solver(win, state, initial)
            f = evaluate(X, win, self.config, check=False).f
        elif self.solver == "identity":
            X, meta = np.array([self.baseline[i] for i in ids]), {}
            f = evaluate(X, win, self.config, check=False).f
        elif self.solver == "direct":
            sol = direct_minimize(win, replace(self.ga, seed=seed), self.config, initial)
            X, f, meta = sol.X, sol.f, sol.meta
            timed_out = bool(meta.get("timed_out"))
        else:
            sol = optimize_with_surrogate(win, self.solver, self.n_samples, seed, self.ga,
                                          self.config, workers=self.workers, initial=initial)
            X, f, meta = sol.X, sol.f, sol.meta
            timed_out = bool(meta.get("timed_out"))
        for i, x in zip(ids, X):
            if timed_out and i in state.pending:
                continue        # keep the previous recommendation
            state.pending[i] = float(x)
        state.log.append({"t": state.t, "vehicles": list(ids), "X": [float(x) for x in X],
                          "f_window": float(f), "seconds": time.perf_counter() - t0,
                          "timed_out": timed_out, "horizon": win.T,
                          "stop_reason": meta.get("stop_reason", meta.get("method", ""))})

    def rollout(self):
        state = self.new_state()
        while state.t < self.scn.T - 1e-9:
            self.step(state)
        for v in self.scn.approaching:
            if v.id not in state.committed:
                state.commit(v.id, state.pending.get(v.id, self.baseline[v.id]))
        return state


# -- baselines and reports ------------------------------------------------------

def baseline_positions(scn, seed=0):
    """No-control stop positions by vehicle id.

    Desired positions ``X_D`` when given, else the positions stored in the
    scenario, else a seeded uniform draw from the candidate grid.
    """
    app = scn.approaching
    if scn.weights.X_D is not None:
        X = list(scn.weights.X_D)
    elif app and all(v.stop_position is not None for v in app):
        X = [v.stop_position for v in app]
    else:
        X = list(np.random.default_rng(seed).choice(candidate_grid(scn), len(app)))
    return {v.id: float(x) for v, x in zip(app, X)}


def _pct(base, new):
    return 100.0 * (base - new) / abs(base) if base != 0 else 0.0


@dataclass
class RolloutReport:
    solver: str
    realized: object
    baseline: object
    solves: list
    committed: dict
    seconds: float
    seed: int = 0

    @property
    def improvement(self):
        """Objective improvement over no control, percent."""
        return _pct(self.baseline.f, self.realized.f)

    def summary(self):
        b, r = self.baseline, self.realized
        return {
            "solver": self.solver, "seed": self.seed,
            "objective": r.f, "baseline_objective": b.f,
            "improvement_pct": self.improvement,
            "outflow": r.outflow_sum, "baseline_outflow": b.outflow_sum,
            "outflow_improvement_pct": -_pct(b.outflow_sum, r.outflow_sum),
            "spillback_penalty": r.spillback_penalty,
            "baseline_spillback_penalty": b.spillback_penalty,
            "spillback_improvement_pct": _pct(b.spillback_penalty, r.spillback_penalty),
            "detour_penalty": r.detour_penalty,
            "detour_improvement": b.detour_penalty - r.detour_penalty,
            "positions": [float(x) for x in r.X],
            "baseline_positions": [float(x) for x in b.X],
            "solves": len(self.solves),
            "solve_seconds_mean": (float(np.mean([s["seconds"] for s in self.solves]))
                                   if self.solves else 0.0),
            "seconds": self.seconds,
        }

    def write(self, prefix):
        """``prefix``.json summary and ``prefix``_solves.csv per-solve rows."""
        with open(f"{prefix}.json", "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(f"{prefix}_solves.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "vehicles", "X", "f_window", "seconds", "timed_out", "horizon",
                        "stop_reason"])
            for s in self.solves:
                w.writerow([f"{s['t']:g}", " ".join(map(str, s["vehicles"])),
                            " ".join(f"{x:g}" for x in s["X"]), f"{s['f_window']:.10g}",
                            f"{s['seconds']:.4f}", int(s["timed_out"]), f"{s['horizon']:g}",
                            s["stop_reason"]])


def run(scn, solver="direct", ga=GAConfig(), n_samples=500, seed=0, baseline_seed=0,
        config=DEFAULT_SIM, **settings):
    """Controller rollout over ``[0, T]`` plus the no-control baseline.

    The committed positions are replayed in one simulation of the full
    scenario and scored with the same objective as the baseline.
    """
    t0 = time.perf_counter()
    base = baseline_positions(scn, baseline_seed)
    ctl = Controller(scn, base, solver, ga, n_samples, seed, config=config, **settings)
    state = ctl.rollout()
    app = scn.approaching
    X = [state.committed[v.id] for v in app]
    Xb = [base[v.id] for v in app]
    realized = evaluate(np.array(X, dtype=float), scn, config, check=False)
    baseline = evaluate(np.array(Xb, dtype=float), scn, config, check=False)
    return RolloutReport(state.solver, realized, baseline, state.log, dict(state.committed),
                         time.perf_counter() - t0, seed)


def with_detour_weights(scn, regime, seed=0, baseline_seed=0):
    """Scenario whose desired positions are the no-control ones, weighted per ``regime``."""
    lo, hi = regime
    base = baseline_positions(scn, baseline_seed)
    n = len(scn.approaching)
    W = np.random.default_rng(seed).uniform(lo, hi, n) if hi > 0 else np.zeros(n)
    w = Weights(scn.weights.w_SB, [float(x) for x in W],
                [base[v.id] for v in scn.approaching])
    return replace(scn, weights=w)


def detour_sweep(scn, solvers=("direct",), regimes=DETOUR_REGIMES, seeds=(0,),
                 weight_seed=0, baseline_seed=0, **kw):
    """Rollouts for every (regime, solver, seed); returns a list of summary dicts."""
    rows = []
    for r, regime in enumerate(regimes):
        s = with_detour_weights(scn, regime, weight_seed + r, baseline_seed)
        for solver in solvers:
            for seed in (seeds if solver not in ("direct", "identity") else seeds[:1]):
                rep = run(s, solver, seed=seed, baseline_seed=baseline_seed, **kw)
                row = rep.summary()
                row.update(regime=r, W_lo=regime[0], W_hi=regime[1])
                rows.append(row)
    return rows


def write_sweep(path, rows):
    keys = ["regime", "W_lo", "W_hi", "solver", "seed", "objective", "baseline_objective",
            "improvement_pct", "outflow_improvement_pct", "spillback_improvement_pct",
            "detour_improvement", "solve_seconds_mean", "seconds"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in rows:
            w.writerow([r[k] if isinstance(r[k], str) else f"{r[k]:.10g}" for k in keys])
