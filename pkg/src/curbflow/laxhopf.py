"""Lax-Hopf solution of the LWR model on a single segment.

The cumulative count ``M(t, x)`` is the lower envelope of the component
solutions induced by each value condition (initial density cells,
upstream/downstream boundary flows, internal bottlenecks).
"""
import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .kernels import kernels
from .fd import FundamentalDiagram


class ConfigurationError(ValueError):
    """Invalid solver or scenario configuration."""


class CompatibilityWarning(UserWarning):
    """A value condition is not reproduced by the envelope on its own extent."""


KINDS = ("initial", "upstream", "downstream", "internal")


@dataclass(frozen=True)
class ValueCondition:
    """One constraint block on the cumulative-count surface.

    ``initial``: ``t = t_start``, ``x`` in ``[x_start, x_end]``, value
    ``value - rate * (x - x_start)`` (``rate`` is the density).
    ``upstream``/``downstream``/``internal``: ``x = x_start`` (``x_end`` equal
    to it), ``t`` in ``[t_start, t_end]``, value
    ``value + rate * (t - t_start)`` (``rate`` is the passing flow).
    """

    kind: str
    x_start: float
    x_end: float
    t_start: float
    t_end: float
    value: float
    rate: float
    index: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown condition kind {self.kind!r}")
        if self.kind == "initial":
            if not self.x_end > self.x_start or self.t_end != self.t_start:
                raise ValueError("initial condition needs x_end > x_start and t_end == t_start")
        else:
            if self.x_end != self.x_start or not self.t_end >= self.t_start:
                raise ValueError("temporal condition needs a fixed x and t_end >= t_start")

    @property
    def spatial(self):
        return self.kind == "initial"

    def value_at(self, t, x):
        if self.spatial:
            return self.value - self.rate * (x - self.x_start)
        return self.value + self.rate * (t - self.t_start)


def _fd_params(fd):
    return np.array([fd.v_f, fd.w_c, fd.rho_c, fd.q_m, fd.rho_m])


class ConditionSet:
    """Packed condition arrays consumed by the kernels.

    Temporal conditions live in chains; a chain is a run of contiguous pieces
    at one position, each anchored on the solution at its own start time.
    Arbitrary user conditions are stored as one chain per condition, in
    which case chain pruning is a no-op.
    """

    def __init__(self, spatial, temporal, offsets, counts, fd, kinds=None):
        self.kinds = list(kinds) if kinds is not None else None
        self.sp = np.ascontiguousarray(spatial, dtype=float).reshape(-1, 5)
        self.tm = np.ascontiguousarray(temporal, dtype=float).reshape(-1, 5)
        self.off = np.ascontiguousarray(offsets, dtype=np.int64)
        self.cnt = np.ascontiguousarray(counts, dtype=np.int64)
        self.fd = fd
        self.fdp = _fd_params(fd)

    @classmethod
    def from_conditions(cls, conds, fd):
        sp = [(c.t_start, c.x_start, c.x_end, c.value, c.rate) for c in conds if c.spatial]
        tm = [(c.x_start, c.t_start, c.t_end, c.value, c.rate) for c in conds if not c.spatial]
        kinds = [c.kind for c in conds if not c.spatial]
        n = len(tm)
        return cls(np.array(sp).reshape(-1, 5), np.array(tm).reshape(-1, 5),
                   np.arange(n), np.ones(n), fd, kinds)

    def conditions(self):
        """Unpack into :class:`ValueCondition` objects (chain pieces flattened)."""
        out = []
        for i, (t0, a, b, A, rho) in enumerate(self.sp):
            out.append(ValueCondition("initial", a, b, t0, t0, A, rho, i + 1))
        for c in range(self.off.shape[0]):
            for i in range(self.off[c], self.off[c] + self.cnt[c]):
                p, s0, s1, A, r = self.tm[i]
                if self.kinds is not None:
                    kind = self.kinds[c]
                else:
                    kind = "upstream" if p == 0.0 else "internal"
                out.append(ValueCondition(kind, p, p, s0, s1, A, r, c))
        return out

    def evaluate(self, t, x, prune=True):
        """``M`` at arbitrary points (broadcast ``t`` against ``x``)."""
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        shape = t.shape
        ts = np.ascontiguousarray(t.ravel())
        xs = np.ascontiguousarray(x.ravel())
        out = kernels()["envelope"](ts, xs, self.sp, self.tm, self.off, self.cnt,
                                    bool(prune), self.fdp)
        return out.reshape(shape) if shape else float(out[0])


def component_solution(cond, t, x, fd):
    """Component solution of a single condition at ``(t, x)`` (may be ``inf``)."""
    k = kernels()
    fdp = (fd.v_f, fd.w_c, fd.rho_c, fd.q_m)
    if cond.spatial:
        return float(k["spatial"](float(t), float(x), cond.t_start, cond.x_start,
                                  cond.x_end, cond.value, cond.rate, *fdp))
    if t < cond.t_start:
        return math.inf
    return float(k["temporal"](float(t), float(x), cond.x_start, cond.t_start,
                               cond.t_end, cond.value, cond.rate, *fdp))


@dataclass(frozen=True)
class Grid:
    """Evaluation lattice: ``dt`` seconds by ``dx`` metres over ``[0,T] x [0,L]``.

    The last spatial node is ``L`` even when ``L`` is not a multiple of ``dx``.
    """

    L: float
    T: float
    dt: float = 1.0
    dx: float = 14.0

    def __post_init__(self):
        if not (self.dt > 0 and self.dx > 0 and self.L > 0 and self.T > 0):
            raise ConfigurationError("grid spacings and extents must be positive")

    @classmethod
    def for_fd(cls, fd, L, T, dt=1.0):
        return cls(L=L, T=T, dt=dt, dx=fd.v_f * dt)

    @property
    def t(self):
        n = int(round(self.T / self.dt))
        return np.arange(n + 1) * self.dt

    @property
    def x(self):
        n = int(math.floor(self.L / self.dx + 1e-9))
        xs = np.arange(n + 1) * self.dx
        if self.L - xs[-1] > 1e-9:
            xs = np.append(xs, self.L)
        return xs


@dataclass
class CountSurface:
    """Cumulative count sampled on a lattice; ``M[i, j] = M(t[i], x[j])``."""

    t: np.ndarray
    x: np.ndarray
    M: np.ndarray
    fd: FundamentalDiagram

    @property
    def dt(self):
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    def at(self, t):
        return self.M[int(round(t / self.dt))]

    def to_csv(self, path):
        rho = density_field(self)
        rho_nodes = np.concatenate([rho, rho[:, -1:]], axis=1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "M", "rho"])
            for i, t in enumerate(self.t):
                for j, x in enumerate(self.x):
                    w.writerow([f"{t:.9g}", f"{x:.9g}", f"{self.M[i, j]:.9g}",
                                f"{rho_nodes[i, j]:.9g}"])


def check_cfl(fd, L, dt):
    if dt > L / fd.v_f:
        raise ConfigurationError(f"CFL violated: dt={dt} > L/v_f={L / fd.v_f}")


def solve(conds, grid, fd, check=True):
    """Lower envelope of all component solutions on ``grid``.

    ``conds`` is a list of :class:`ValueCondition` or a :class:`ConditionSet`.
    With ``check`` each condition is evaluated against the envelope on its
    own extent and a :class:`CompatibilityWarning` names the first offender.
    """
    check_cfl(fd, grid.L, grid.dt)
    cs = conds if isinstance(conds, ConditionSet) else ConditionSet.from_conditions(conds, fd)
    tt, xx = np.meshgrid(grid.t, grid.x, indexing="ij")
    M = cs.evaluate(tt, xx)
    # datum M(0, 0) = 0
    m00 = cs.evaluate(0.0, 0.0)
    if np.isfinite(m00) and m00 != 0.0:
        M = M - m00
    if check and not isinstance(conds, ConditionSet):
        _check_compatibility(conds, cs, fd, grid)
    return CountSurface(grid.t.copy(), grid.x.copy(), M, fd)


def _check_compatibility(conds, cs, fd, grid):
    tol = 1e-6 * fd.q_m * grid.T
    for i, c in enumerate(conds):
        if c.spatial:
            xs = np.linspace(c.x_start, c.x_end, 5)
            ts = np.full_like(xs, c.t_start)
        else:
            ts = np.linspace(c.t_start, c.t_end, 5)
            xs = np.full_like(ts, c.x_start)
        want = np.array([c.value_at(t, x) for t, x in zip(ts, xs)])
        got = cs.evaluate(ts, xs)
        if np.max(np.abs(want - got)) > tol:
            warnings.warn(f"condition {i} ({c.kind}) is not compatible with the envelope",
                          CompatibilityWarning, stacklevel=3)
            return i
    return None


def density_field(surface):
    """Cell densities ``-(M(t, x_{j+1}) - M(t, x_j)) / dx_j`` clamped to ``[0, rho_m]``."""
    dx = np.diff(surface.x)
    rho = -np.diff(surface.M, axis=1) / dx[None, :]
    return np.clip(rho, 0.0, surface.fd.rho_m)


def boundary_counts(surface, step):
    """Vehicles entering and leaving the segment during each ``step`` seconds."""
    ratio = step / surface.dt
    if abs(ratio - round(ratio)) > 1e-9:
        raise ConfigurationError("step must be a multiple of the grid dt")
    idx = np.arange(0, len(surface.t), int(round(ratio)))
    q_in = np.diff(surface.M[idx, 0])
    q_out = np.diff(surface.M[idx, -1])
    return q_in, q_out


def initial_conditions(densities, L, t0=0.0, datum=0.0):
    """Initial-density conditions tiling ``[0, L]`` with equal cells."""
    rho = np.asarray(densities, dtype=float)
    dx = L / len(rho)
    out = []
    A = datum
    for l, r in enumerate(rho):
        out.append(ValueCondition("initial", l * dx, (l + 1) * dx, t0, t0, A, float(r), l + 1))
        A -= r * dx
    return out


def boundary_conditions(flows, kind, step, start_value, position):
    """Piecewise-constant boundary flows integrated from ``start_value``."""
    out = []
    A = start_value
    for j, q in enumerate(flows):
        out.append(ValueCondition(kind, position, position, j * step, (j + 1) * step, A,
                                  float(q), j + 1))
        A += q * step
    return out
