"""Training and test samples for local and global surrogates.

Local rows are stop-position vectors for one fixed traffic state.  Global
rows append the traffic state itself (initial densities, demand, supply,
signal offset, vehicle timings) so one model covers many states.
"""
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fd import DEFAULT_FD
from .hybrid import DEFAULT_SIM
from .parallel import pmap
from .problem import candidate_grid, evaluate, vehicle_grids
from .scenario import Scenario, ScenarioError, Signal, StopVehicle, Weights

#: Approaching / on-segment vehicle counts of the five scenario classes.
CLASSES = {"C1": (4, 0), "C2": (4, 2), "C3": (4, 4), "C4": (6, 0), "C5": (6, 2)}

DURATIONS = np.arange(30.0, 181.0, 30.0)
ENTRY_WINDOW = 150          # approaching vehicles enter within the controller range
DENSITY_CELLS = 3


class SizeError(ValueError):
    """More distinct rows requested than the design space holds."""


@dataclass
class Dataset:
    mode: str
    inputs: np.ndarray
    targets: np.ndarray
    columns: list
    seed: int
    scenario_id: str
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.targets)

    def head(self, n):
        return Dataset(self.mode, self.inputs[:n], self.targets[:n], self.columns,
                       self.seed, self.scenario_id, dict(self.meta))

    def to_csv(self, path):
        """Write ``path`` and a JSON sidecar ``path.json`` describing it."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns + ["f"])
            for row, f in zip(self.inputs, self.targets):
                w.writerow([repr(float(v)) for v in row] + [repr(float(f))])
        side = {"mode": self.mode, "columns": self.columns, "target": "f",
                "rows": len(self), "seed": self.seed, "scenario_id": self.scenario_id,
                "meta": self.meta}
        Path(str(path) + ".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        side = json.loads(Path(str(path) + ".json").read_text())
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(side["mode"], data[:, :-1], data[:, -1], side["columns"], side["seed"],
                   side["scenario_id"], side.get("meta", {}))


# -- target evaluation ----------------------------------------------------

def _score_local(args):
    scn, X, config = args
    return evaluate(X, scn, config, check=False).f


def _score_global(args):
    template, row, config = args
    scn, X = decode_global(template, row)
    return evaluate(X, scn, config, check=False).f


# -- local design ---------------------------------------------------------

def _distinct_rows(grids, n, rng):
    total = math.prod(len(g) for g in grids)
    if n > total:
        raise SizeError(f"{n} rows requested but only {total} distinct combinations exist")
    seen = set()
    rows = []
    while len(rows) < n:
        idx = tuple(int(rng.integers(len(g))) for g in grids)
        if idx in seen:
            continue
        seen.add(idx)
        rows.append([g[i] for g, i in zip(grids, idx)])
    return np.array(rows, dtype=float).reshape(n, len(grids))


def sample_local(scn, n, seed, workers=1, config=DEFAULT_SIM):
    """``n`` distinct stop-position vectors for ``scn`` with simulated objectives."""
    if n < 1:
        raise SizeError("n must be >= 1")
    rng = np.random.default_rng(seed)
    X = _distinct_rows(vehicle_grids(scn), n, rng)
    f = pmap(_score_local, [(scn, x, config) for x in X], workers)
    cols = [f"x{i + 1}" for i in range(X.shape[1])]
    return Dataset("local", X, np.array(f, dtype=float), cols, int(seed), scn.digest())


# -- global design --------------------------------------------------------

@dataclass(frozen=True)
class Template:
    """Fixed part of a scenario class; everything else is drawn per row."""

    n_approaching: int
    n_on_segment: int
    L: float = 450.0
    horizon: float = 600.0
    step: float = 10.0
    cycle: float = 120.0
    red: float = 48.0
    n_lanes: int = 2
    w_SB: float = 0.1
    fd: object = DEFAULT_FD

    @classmethod
    def for_class(cls, name, **kw):
        na, no = CLASSES[name]
        return cls(na, no, **kw)

    def columns(self):
        cols = [f"x{i + 1}" for i in range(self.n_approaching)]
        cols += [f"rho{j + 1}" for j in range(DENSITY_CELLS)]
        cols += ["demand", "supply", "red_start"]
        for i in range(self.n_approaching):
            cols += [f"entry{i + 1}", f"duration{i + 1}"]
        for i in range(self.n_on_segment):
            cols += [f"seg_start{i + 1}", f"seg_stop{i + 1}", f"seg_duration{i + 1}"]
        return cols

    def grid(self):
        probe = Scenario(fd=self.fd, L=self.L, T=self.horizon, initial_density=[0.0],
                         demand=0.0, supply=0.0, step=self.step)
        return candidate_grid(probe)


def draw_state(template, rng):
    """One traffic state ``u`` (the non-position part of a global row)."""
    fd = template.fd
    grid = template.grid()
    u = list(rng.uniform(0.0, fd.rho_m, DENSITY_CELLS))
    u += [rng.uniform(0.0, fd.q_m), rng.uniform(0.0, fd.q_m),
          rng.uniform(-template.red, template.cycle - template.red)]
    for _ in range(template.n_approaching):
        u += [float(rng.integers(0, ENTRY_WINDOW + 1)), float(rng.choice(DURATIONS))]
    for _ in range(template.n_on_segment):
        a, b = np.sort(rng.choice(grid, 2))
        u += [float(a), float(b), float(rng.choice(DURATIONS))]
    return np.array(u)


def decode_global(template, row):
    """Scenario and stop positions encoded by a global row."""
    na, no = template.n_approaching, template.n_on_segment
    row = np.asarray(row, dtype=float)
    X = row[:na]
    u = row[na:]
    rho = u[:DENSITY_CELLS]
    demand, supply, red_start = u[DENSITY_CELLS:DENSITY_CELLS + 3]
    k = DENSITY_CELLS + 3
    vehicles = []
    for i in range(na):
        vehicles.append(StopVehicle(i + 1, float(u[k + 1]), entry_time=float(u[k])))
        k += 2
    for i in range(no):
        vehicles.append(StopVehicle(na + i + 1, float(u[k + 2]), start_position=float(u[k]),
                                    stop_position=float(u[k + 1])))
        k += 3
    scn = Scenario(fd=template.fd, L=template.L, T=template.horizon, initial_density=rho,
                   demand=float(demand), supply=float(supply), n_lanes=template.n_lanes,
                   step=template.step,
                   signal=Signal(template.cycle, template.red, float(red_start)),
                   vehicles=vehicles, weights=Weights(w_SB=template.w_SB))
    return scn, X


def encode_global(template, scn, X):
    """Global row for scenario ``scn`` (built from ``template``) with stops ``X``."""
    cols = list(np.asarray(X, dtype=float))
    rho = np.asarray(scn.initial_density, dtype=float)
    if rho.size != DENSITY_CELLS:
        raise ScenarioError(f"global rows need {DENSITY_CELLS} initial density cells")
    cols += list(rho)
    cols += [float(scn.demand[0]), float(scn.supply[0]), float(scn.signal.red_start)]
    for v in scn.approaching:
        cols += [v.entry_time, v.stop_duration]
    for v in scn.on_segment:
        cols += [v.start_position, v.stop_position, v.stop_duration]
    return np.array(cols, dtype=float)


def _valid_state(template, u):
    try:
        decode_global(template, np.concatenate([np.full(template.n_approaching, np.nan), u]))
    except ScenarioError:
        return False
    return True


def sample_global(template, n, seed, workers=1, config=DEFAULT_SIM):
    """``n`` rows over stop positions and traffic states of ``template``."""
    if n < 1:
        raise SizeError("n must be >= 1")
    rng = np.random.default_rng(seed)
    grid = template.grid()
    rows = []
    seen = set()
    while len(rows) < n:
        u = draw_state(template, rng)
        if not _valid_state(template, u):
            continue
        X = rng.choice(grid, template.n_approaching)
        row = np.concatenate([X, u])
        key = tuple(row)
        if key in seen:
            continue
        seen.add(key)
        rows.append(row)
    R = np.array(rows)
    f = pmap(_score_global, [(template, r, config) for r in R], workers)
    tid = f"template:{template.n_approaching}/{template.n_on_segment}"
    return Dataset("global", R, np.array(f, dtype=float), template.columns(), int(seed), tid)


# -- sub-scenarios --------------------------------------------------------

def _seeds_file():
    return Path(__file__).parent / "data" / "subscenarios.json"


def subscenario_seeds():
    """Per-class list of sub-scenario seeds shipped with the package."""
    return json.loads(_seeds_file().read_text())["seeds"]


def sub_scenarios(name, seeds=None, template=None):
    """Fixed-state scenarios of class ``name`` (C1..C5) drawn from seeds."""
    template = template or Template.for_class(name)
    seeds = subscenario_seeds()[name] if seeds is None else seeds
    out = []
    for s in seeds:
        rng = np.random.default_rng(s)
        while True:
            u = draw_state(template, rng)
            if _valid_state(template, u):
                break
        scn, _ = decode_global(template, np.concatenate([np.full(template.n_approaching,
                                                                  np.nan), u]))
        scn.name = f"{name}-{s}"
        out.append(scn)
    return out
