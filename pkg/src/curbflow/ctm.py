"""Godunov cell-transmission model used as an independent check.

The oracle shares nothing with the Lax-Hopf code except the fundamental
diagram: densities live in cells, interface fluxes are the minimum of
upstream sending and downstream receiving flow, and a stopped vehicle lowers
the capacity of the interface nearest its stop.
"""
import csv
import math
from dataclasses import dataclass

import numpy as np

from .laxhopf import ConfigurationError


@dataclass
class CtmGrid:
    """Cell state: ``density`` (veh/m) in cells of ``cell`` metres, step ``dt``."""

    cell: float
    dt: float
    density: np.ndarray

    def check(self, fd):
        if self.dt * fd.v_f > self.cell * (1 + 1e-12):
            raise ConfigurationError(
                f"CFL violated: dt={self.dt} > cell/v_f={self.cell / fd.v_f}")
        if np.any(self.density < -1e-12) or np.any(self.density > fd.rho_m + 1e-12):
            raise ConfigurationError("cell densities outside [0, rho_m]")


def sending(rho, fd):
    return np.minimum(fd.v_f * rho, fd.q_m)


def receiving(rho, fd):
    return np.minimum(fd.w_c * (fd.rho_m - rho), fd.q_m)


def ctm_step(grid, fd, demand_in, supply_out, cap=None):
    """Advance one step; returns ``(new_grid, inflow, outflow)`` in veh/s.

    ``cap`` gives per-interface capacities for the ``n - 1`` internal
    interfaces (``q_m`` where absent).
    """
    grid.check(fd)
    rho = grid.density
    s = sending(rho, fd)
    r = receiving(rho, fd)
    flux = np.empty(rho.size + 1)
    flux[0] = min(demand_in, r[0])
    flux[-1] = min(s[-1], supply_out)
    inner = np.minimum(s[:-1], r[1:])
    if cap is not None:
        inner = np.minimum(inner, cap)
    flux[1:-1] = inner
    new = rho + grid.dt / grid.cell * (flux[:-1] - flux[1:])
    new = np.clip(new, 0.0, fd.rho_m)
    return CtmGrid(grid.cell, grid.dt, new), float(flux[0]), float(flux[-1])


@dataclass
class CtmResult:
    t: np.ndarray            # record times (every ``record`` seconds)
    edges: np.ndarray        # cell edges (m)
    density: np.ndarray      # (len(t), n_cells)
    inflow: np.ndarray       # cumulative vehicles in at record times
    outflow: np.ndarray      # cumulative vehicles out at record times
    arrivals: np.ndarray

    def counts(self, x):
        """Cumulative count ``M(t, x)`` at record times for positions ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        widths = np.diff(self.edges)
        stored = np.concatenate([np.zeros((len(self.t), 1)),
                                 np.cumsum(self.density * widths, axis=1)], axis=1)
        out = np.empty((len(self.t), x.size))
        for j, xx in enumerate(x):
            c = min(np.searchsorted(self.edges, xx, side="right") - 1, widths.size - 1)
            part = stored[:, c] + self.density[:, c] * (xx - self.edges[c])
            out[:, j] = self.inflow - part
        return out

    def boundary_counts(self, step):
        k = int(round(step / (self.t[1] - self.t[0])))
        return np.diff(self.inflow[::k]), np.diff(self.outflow[::k])

    def to_csv(self, path):
        mids = 0.5 * (self.edges[:-1] + self.edges[1:])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "M", "rho"])
            M = self.counts(mids)
            for i, t in enumerate(self.t):
                for j, x in enumerate(mids):
                    w.writerow([f"{t:.9g}", f"{x:.9g}", f"{M[i, j]:.9g}",
                                f"{self.density[i, j]:.9g}"])


def ctm_simulate(scn, X=None, cell=7.0, dt=0.5, record=1.0, upstream_queue=True,
                 arrivals=None):
    """Cell-transmission run of ``scn`` with approaching stops at ``X``.

    Vehicles advance with the speed of the cell they occupy; a stop caps the
    interface nearest its position at the passing rate of the free lanes.
    ``arrivals`` (scenario vehicle order) replays given stop arrival times
    instead, which isolates the flow solver from trajectory sensitivity.
    """
    if X is not None:
        scn = scn.with_positions(X)
    fd = scn.fd
    n = int(math.floor(scn.L / cell + 1e-9))
    h = scn.L / n
    edges = np.arange(n + 1) * h
    rho0 = np.asarray(scn.initial_density, dtype=float)
    mids = 0.5 * (edges[:-1] + edges[1:])
    src = np.minimum((mids / (scn.L / rho0.size)).astype(int), rho0.size - 1)
    grid = CtmGrid(h, dt, rho0[src].copy())
    grid.check(fd)

    veh = []
    for v in scn.vehicles:
        if v.approaching:
            veh.append([v.entry_time, 0.0, v.stop_position, v.stop_duration])
        else:
            veh.append([0.0, v.start_position, v.stop_position, v.stop_duration])
    veh = np.array(veh, dtype=float).reshape(-1, 4)
    nv = veh.shape[0]
    pos = veh[:, 1].copy()
    arrival = np.full(nv, np.nan)
    replay = arrivals is not None
    if replay:
        arrival = np.asarray(arrivals, dtype=float).copy()
    iface = np.clip(np.rint(veh[:, 2] / h).astype(int), 1, n - 1) - 1
    r_pass = scn.passing_rate

    nsteps = int(round(scn.T / dt))
    per_rec = int(round(record / dt))
    if per_rec < 1 or abs(per_rec * dt - record) > 1e-9:
        raise ConfigurationError(f"record interval {record} is not a multiple of dt={dt}")
    t_rec, dens, cin, cout = [0.0], [grid.density.copy()], [0.0], [0.0]
    cum_in = cum_out = 0.0
    backlog = scn.initial_queue
    for m in range(nsteps):
        t0 = m * dt
        t1 = t0 + dt
        k = min(int(math.floor(t0 / scn.step + 1e-9)), scn.n_steps - 1)
        mid = 0.5 * (t0 + t1)
        cap = np.full(n - 1, fd.q_m)
        for i in range(nv):
            a = arrival[i]
            if np.isfinite(a) and a <= mid < a + veh[i, 3]:
                cap[iface[i]] = min(cap[iface[i]], r_pass)
        green = 1.0
        if scn.signal is not None and scn.signal.is_red(mid):
            green = 0.0
        want = scn.demand[k] + (backlog / dt if upstream_queue else 0.0)
        # vehicles move on the density at the start of the step
        for i in range(nv):
            if replay or np.isfinite(arrival[i]) or veh[i, 0] > t0 + 1e-9:
                continue
            c = min(int(pos[i] / h), n - 1)
            rho = grid.density[c]
            v = fd.v_f if rho <= fd.rho_c else fd.w_c * (fd.rho_m - rho) / max(rho, 1e-12)
            xn = pos[i] + v * dt
            if xn >= veh[i, 2]:
                arrival[i] = t0 + (veh[i, 2] - pos[i]) / v if v > 0 else t0
                pos[i] = veh[i, 2]
            else:
                pos[i] = xn
        grid, fin, fout = ctm_step(grid, fd, want, scn.supply[k] * green, cap)
        cum_in += fin * dt
        cum_out += fout * dt
        backlog = max(backlog + (scn.demand[k] - fin) * dt, 0.0)
        if (m + 1) % per_rec == 0:
            t_rec.append(t1)
            dens.append(grid.density.copy())
            cin.append(cum_in)
            cout.append(cum_out)
    return CtmResult(np.array(t_rec), edges, np.array(dens), np.array(cin),
                     np.array(cout), arrival)


def compare_density(lh_surface, ctm_result, jump=0.04, dilation=2):
    """Cell-average densities of both solvers on the Lax-Hopf lattice.

    Returns ``(max_abs_diff, keep, rho_lh, rho_ctm)``; ``keep`` marks
    lattice cells farther than ``dilation`` cells from a jump larger than
    ``jump`` in the Lax-Hopf field.
    """
    x = lh_surface.x
    widths = np.diff(x)
    rho_lh = -np.diff(lh_surface.M, axis=1) / widths
    t_idx = np.searchsorted(ctm_result.t, lh_surface.t - 1e-9)
    Mc = ctm_result.counts(x)[t_idx]
    rho_ctm = -np.diff(Mc, axis=1) / widths
    # a jump may straddle a lattice cell, so compare neighbours two apart too
    n = rho_lh.shape[1]
    bad = np.zeros_like(rho_lh, dtype=bool)
    for gap in (1, 2):
        step = np.abs(rho_lh[:, gap:] - rho_lh[:, :-gap]) > jump
        for j in range(step.shape[1]):
            hit = step[:, j]
            if hit.any():
                bad[hit, max(j - dilation + 1, 0):min(j + gap + dilation, n)] = True
    keep = ~bad
    diff = np.abs(rho_lh - rho_ctm)
    worst = float(diff[keep].max()) if keep.any() else 0.0
    return worst, keep, rho_lh, rho_ctm


def cross_check(scn, X=None, cell=7.0, dt=0.5, jump=0.04, dilation=2, config=None):
    """Lax-Hopf hybrid run against the cell-transmission oracle.

    Returns the worst density gap off shocks, the share of lattice cells
    compared and the relative conservation residual of each solver.
    """
    from .hybrid import DEFAULT_SIM, simulate
    if X is not None:
        scn = scn.with_positions(X)
    res = simulate(scn, config=config or DEFAULT_SIM, warn=False)
    lh = res.surface()
    ct = ctm_simulate(scn, cell=cell, dt=dt)
    worst, keep, _, _ = compare_density(lh, ct, jump, dilation)
    return {"max_density_gap": worst, "compared_fraction": float(keep.mean()),
            "ctm_conservation": _conservation(ct), "lh_conservation": _lh_conservation(lh),
            "lh": lh, "ctm": ct}


def _conservation(ct):
    widths = np.diff(ct.edges)
    stored = ct.density @ widths
    resid = (ct.inflow - ct.outflow) - (stored - stored[0])
    scale = max(1.0, float(ct.inflow[-1]), float(stored.max()))
    return float(np.abs(resid).max() / scale)


def _lh_conservation(lh):
    # stored vehicles from the physical (clamped) density field, not from M itself
    from .laxhopf import density_field
    M = lh.M
    stored = density_field(lh) @ np.diff(lh.x)
    inflow = M[:, 0] - M[0, 0]
    outflow = M[:, -1] - M[0, -1]
    resid = (inflow - outflow) - (stored - stored[0])
    scale = max(1.0, float(np.abs(inflow).max()), float(np.abs(stored).max()))
    return float(np.abs(resid).max() / scale)
