"""Hybrid simulation: macroscopic LWR flow with microscopic stopping vehicles.

Each stop becomes an internal value condition at the stop position whose
passing rate is the capacity of the remaining lanes.  The loop is
chronological: conditions created at time ``s`` only influence the surface
after ``s``, so a single forward march (re-anchoring every ``dt``) is
equivalent to re-solving after each placed vehicle.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernels import kernels
from .laxhopf import (ConditionSet, Grid, ValueCondition, check_cfl, initial_conditions,
                      CountSurface)


class UnreachedStopWarning(UserWarning):
    """A vehicle did not reach its stop within the simulated horizon."""


@dataclass(frozen=True)
class SimConfig:
    """Numerical settings of the hybrid simulation.

    ``dt`` is the march step (boundary and bottleneck conditions are
    re-anchored every ``dt``); ``probe`` is the length (m) over which local
    density is read for vehicle speeds and upstream supply.
    """

    dt: float = 1.0
    probe: float = 1.0
    upstream_queue: bool = True


DEFAULT_SIM = SimConfig()


@dataclass
class SimResult:
    conditions: ConditionSet
    arrivals: np.ndarray          # per vehicle (scenario order), nan if unreached
    q_in: np.ndarray              # vehicles entering per step
    q_out: np.ndarray             # vehicles leaving per step
    trajectories: np.ndarray      # (n_dt + 1, n_vehicles) positions, nan before entry
    vehicle_ids: list
    T: float
    L: float
    dt: float
    unreached: list = field(default_factory=list)
    blocked: np.ndarray = None    # demand (incl. upstream queue) not admitted, per step

    def surface(self, dx=None):
        fd = self.conditions.fd
        grid = Grid(L=self.L, T=self.T, dt=self.dt, dx=dx or fd.v_f * self.dt)
        tt, xx = np.meshgrid(grid.t, grid.x, indexing="ij")
        M = self.conditions.evaluate(tt, xx)
        return CountSurface(grid.t, grid.x, M, fd)

    def count(self, t, x):
        return self.conditions.evaluate(t, x)

    def stored(self, t):
        """Vehicles on the segment at time ``t``."""
        return float(self.count(t, 0.0) - self.count(t, self.L))


def _vehicle_table(scn):
    rows = []
    ids = []
    for v in scn.vehicles:
        if v.stop_position is None:
            raise ValueError(f"vehicle {v.id} has no stop position")
        if v.approaching:
            rows.append((v.entry_time, 0.0, v.stop_position, v.stop_duration))
        else:
            rows.append((0.0, v.start_position, v.stop_position, v.stop_duration))
        ids.append(v.id)
    return np.array(rows, dtype=float).reshape(-1, 4), ids


def simulate(scn, X=None, config=DEFAULT_SIM, warn=True):
    """Run the hybrid simulation of ``scn`` with approaching stops at ``X``.

    Returns a :class:`SimResult`; boundary counts are per ``scn.step``.
    Vehicles stuck in congestion until ``T`` never stop; they are listed
    in ``unreached`` and, with ``warn``, reported as a warning.
    """
    if X is not None:
        scn = scn.with_positions(X)
    fd = scn.fd
    dt = config.dt
    check_cfl(fd, scn.L, dt)
    ratio = scn.step / dt
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValueError("scenario step must be a multiple of dt")
    veh, ids = _vehicle_table(scn)
    for e in veh[:, 0]:
        if abs(e / dt - round(e / dt)) > 1e-9:
            raise ValueError("entry times must be multiples of dt")
    # stable processing order: ascending id
    order = np.argsort(np.array(ids, dtype=float), kind="stable") if ids else np.zeros(0, int)
    veh = veh[order]
    nsteps = int(round(scn.T / dt))
    nv = veh.shape[0]

    sp = np.array([(c.t_start, c.x_start, c.x_end, c.value, c.rate)
                   for c in initial_conditions(scn.initial_density, scn.L)]).reshape(-1, 5)
    caps = [nsteps + 1, 3 * nsteps + 8]
    for i in range(nv):
        caps.append(int(math.ceil(veh[i, 3] / dt)) + 3)
    off = np.concatenate([[0], np.cumsum(caps)[:-1]]).astype(np.int64)
    cnt = np.zeros(len(caps), dtype=np.int64)
    tm = np.zeros((int(np.sum(caps)), 5))
    vtab = np.zeros((nv, 5))
    vtab[:, :4] = veh
    vtab[:, 4] = np.arange(nv) + 2
    if scn.signal is not None:
        sig = np.array([1.0, scn.signal.cycle, scn.signal.red, scn.signal.red_start])
    else:
        sig = np.zeros(4)
    kinds = ["upstream", "downstream"] + ["internal"] * nv
    cs = ConditionSet(sp, tm, off, cnt, fd, kinds)
    arrival = np.empty(nv)
    traj = np.full((nsteps + 1, nv), np.nan)
    kernels()["march"](cs.fdp, float(scn.L), float(scn.T), float(dt), float(scn.step),
                       scn.demand, scn.supply, sig, float(scn.passing_rate),
                       float(config.probe), bool(config.upstream_queue),
                       float(scn.initial_queue), cs.sp, cs.tm, cs.off, cs.cnt, vtab, arrival,
                       traj)
    # back to scenario order
    inv = np.empty_like(order)
    inv[order] = np.arange(nv)
    arrival = arrival[inv]
    traj = traj[:, inv]
    unreached = [ids[i] for i in range(nv) if not np.isfinite(arrival[i])]
    if unreached and warn:
        warnings.warn(f"vehicles {unreached} did not reach their stop before T",
                      UnreachedStopWarning, stacklevel=2)
    tk = np.arange(scn.n_steps + 1) * scn.step
    m_up = cs.evaluate(tk, np.zeros_like(tk))
    m_dn = cs.evaluate(tk, np.full_like(tk, scn.L))
    q_in = np.diff(m_up)
    if config.upstream_queue:
        # vehicles still waiting upstream at the end of each step
        offered = scn.initial_queue + np.cumsum(scn.demand * scn.step)
        blocked = np.maximum(offered - (m_up[1:] - m_up[0]), 0.0)
    else:
        blocked = np.maximum(scn.demand * scn.step - q_in, 0.0)
    return SimResult(cs, arrival, q_in, np.diff(m_dn), traj, ids,
                     scn.T, scn.L, dt, unreached, blocked)


def trajectory(cs, entry_time, stop_x, T, start_x=0.0, dt=1.0, probe=1.0):
    """Forward-Euler arrival time at ``stop_x`` through the surface ``cs``.

    Speed at each step comes from the density over ``[x, x + probe]``.
    Returns ``nan`` when the stop is not reached before ``T``.
    """
    fd = cs.fd
    t, x = float(entry_time), float(start_x)
    if x >= stop_x:
        return t
    while t < T - 1e-9:
        rho = (cs.evaluate(t, x) - cs.evaluate(t, x + probe)) / probe
        rho = min(max(rho, 0.0), fd.rho_m)
        v = float(fd.speed(rho))
        t1 = min(t + dt, T)
        xn = x + v * (t1 - t)
        if xn >= stop_x:
            return t + (stop_x - x) / v
        t, x = t1, xn
    return math.nan


def stop_condition(cs, x_i, arrival, duration, n_lanes, T=math.inf):
    """Internal condition of one stop, anchored on the surface at arrival."""
    fd = cs.fd
    r = fd.q_m * (n_lanes - 1) / n_lanes
    anchor = cs.evaluate(arrival, x_i)
    return ValueCondition("internal", x_i, x_i, arrival, min(arrival + duration, T),
                          float(anchor), r)
