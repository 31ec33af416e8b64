"""Scenario bundle: segment, traffic inputs, signal, stopping vehicles, weights.

Scenarios are stored as JSON with exactly the field names below (SI units).
Parsing is strict: unknown keys raise :class:`ScenarioError`.
"""
import copy
import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from .fd import FundamentalDiagram
from .laxhopf import ConfigurationError


class ScenarioError(ConfigurationError):
    pass


@dataclass
class StopVehicle:
    """A vehicle that makes one lane-blocking curbside stop.

    Approaching vehicles carry ``entry_time`` (they enter at ``x = 0``);
    on-segment vehicles carry ``start_position`` (on the segment at ``t = 0``).
    ``stop_position`` is the decision variable for approaching vehicles and
    may be left ``None`` until assigned.
    """

    id: int
    stop_duration: float
    entry_time: Optional[float] = None
    start_position: Optional[float] = None
    stop_position: Optional[float] = None
    blocks_lane: bool = True

    def __post_init__(self):
        if (self.entry_time is None) == (self.start_position is None):
            raise ScenarioError(f"vehicle {self.id}: give exactly one of entry_time/start_position")
        if not self.stop_duration > 0:
            raise ScenarioError(f"vehicle {self.id}: stop_duration must be positive")
        if self.entry_time is not None and self.entry_time < 0:
            raise ScenarioError(f"vehicle {self.id}: entry_time must be >= 0")
        if self.start_position is not None and self.stop_position is None:
            raise ScenarioError(f"on-segment vehicle {self.id} needs a stop_position")
        if not self.blocks_lane:
            raise ScenarioError("only lane-blocking stops are modelled")

    @property
    def approaching(self):
        return self.entry_time is not None


@dataclass
class Signal:
    """Fixed-time signal at the downstream end; red starts at ``red_start + m * cycle``."""

    cycle: float
    red: float
    red_start: float

    def __post_init__(self):
        if not (self.cycle > 0 and 0 <= self.red <= self.cycle):
            raise ScenarioError("signal needs cycle > 0 and 0 <= red <= cycle")

    @property
    def green(self):
        return self.cycle - self.red

    def is_red(self, t):
        ph = (t - self.red_start) % self.cycle
        return ph < self.red

    def shifted(self, t0):
        """Same plan seen from clock ``t0``; ``red_start`` folded into ``[-red, green)``."""
        rs = (self.red_start - t0) % self.cycle
        if rs >= self.green:
            rs -= self.cycle
        return Signal(self.cycle, self.red, rs)


@dataclass
class Weights:
    w_SB: float = 0.1
    W_D: Optional[list] = None
    X_D: Optional[list] = None
    X_US: Optional[list] = None
    X_DS: Optional[list] = None


@dataclass
class Scenario:
    fd: FundamentalDiagram
    L: float
    T: float
    initial_density: np.ndarray
    demand: np.ndarray
    supply: np.ndarray
    n_lanes: int = 2
    step: float = 10.0
    signal: Optional[Signal] = None
    vehicles: list = field(default_factory=list)
    weights: Weights = field(default_factory=Weights)
    name: str = ""
    initial_queue: float = 0.0

    def __post_init__(self):
        self.initial_density = np.atleast_1d(np.asarray(self.initial_density, dtype=float))
        nk = self.n_steps
        self.demand = _per_step(self.demand, nk, "demand")
        self.supply = _per_step(self.supply, nk, "supply")
        self.validate()

    @property
    def n_steps(self):
        ratio = self.T / self.step
        if abs(ratio - round(ratio)) > 1e-9:
            raise ScenarioError("T must be a multiple of step")
        return int(round(ratio))

    @property
    def approaching(self):
        return [v for v in self.vehicles if v.approaching]

    @property
    def on_segment(self):
        return [v for v in self.vehicles if not v.approaching]

    @property
    def passing_rate(self):
        return self.fd.q_m * (self.n_lanes - 1) / self.n_lanes

    def validate(self):
        fd = self.fd
        if not (self.L > 0 and self.T > 0 and self.step > 0):
            raise ScenarioError("L, T and step must be positive")
        if self.n_lanes < 1:
            raise ScenarioError("n_lanes must be >= 1")
        if not self.initial_queue >= 0:
            raise ScenarioError("initial_queue must be >= 0")
        rho = self.initial_density
        if np.any(rho < 0) or np.any(rho > fd.rho_m):
            raise ScenarioError("initial densities must lie in [0, rho_m]")
        for name in ("demand", "supply"):
            a = getattr(self, name)
            if np.any(a < 0) or np.any(a > fd.q_m * (1 + 1e-12)):
                raise ScenarioError(f"{name} must lie in [0, q_m]")
        if self.signal is not None:
            s = self.signal
            if not (-s.red - 1e-9 <= s.red_start <= s.green + 1e-9):
                raise ScenarioError("red_start must lie in [-T_r, T_g]")
        ids = [v.id for v in self.vehicles]
        if len(set(ids)) != len(ids):
            raise ScenarioError("vehicle ids must be unique")
        for v in self.vehicles:
            if v.stop_position is not None and not (0 < v.stop_position < self.L):
                raise ScenarioError(f"vehicle {v.id}: stop_position outside (0, L)")
            if v.start_position is not None:
                if not (0 <= v.start_position <= v.stop_position):
                    raise ScenarioError(f"vehicle {v.id}: need 0 <= start_position <= stop_position")
        n = len(self.approaching)
        w = self.weights
        for key in ("W_D", "X_D", "X_US", "X_DS"):
            val = getattr(w, key)
            if val is not None and len(val) != n:
                raise ScenarioError(f"weights.{key} needs one entry per approaching vehicle")
        if w.W_D is not None and any(x != 0 for x in w.W_D) and w.X_D is None:
            raise ScenarioError("nonzero W_D requires X_D")
        if (w.X_US is not None or w.X_DS is not None) and w.X_D is None:
            raise ScenarioError("X_US/X_DS require X_D")

    def _check_overlaps(self):
        # same-position stops whose nominal free-flow windows overlap are rejected
        # when a file is loaded; optimisers may still propose them
        wins = []
        for v in self.vehicles:
            if v.stop_position is None:
                continue
            if v.approaching:
                t0 = v.entry_time + v.stop_position / self.fd.v_f
            else:
                t0 = (v.stop_position - v.start_position) / self.fd.v_f
            wins.append((v.stop_position, t0, t0 + v.stop_duration, v.id))
        for i in range(len(wins)):
            for j in range(i + 1, len(wins)):
                a, b = wins[i], wins[j]
                if a[0] == b[0] and a[1] < b[2] and b[1] < a[2]:
                    raise ScenarioError(f"vehicles {a[3]} and {b[3]} overlap at x={a[0]}")

    def with_positions(self, X):
        """Copy with approaching stop positions set to ``X`` (file order)."""
        X = list(X)
        app = self.approaching
        if len(X) != len(app):
            raise ScenarioError(f"expected {len(app)} stop positions, got {len(X)}")
        out = copy.copy(self)
        vehicles = []
        it = iter(X)
        for v in self.vehicles:
            v2 = copy.copy(v)
            if v.approaching:
                v2.stop_position = float(next(it))
            vehicles.append(v2)
        out.vehicles = vehicles
        return out

    def positions(self):
        return [v.stop_position for v in self.approaching]

    # -- serialisation -------------------------------------------------
    def to_dict(self):
        d = {
            "name": self.name,
            "fd": {k: v for k, v in self.fd.to_dict().items() if k != "q_m"},
            "L": self.L, "T": self.T, "n_lanes": self.n_lanes, "step": self.step,
            "initial_density": [float(x) for x in self.initial_density],
            "demand": [float(x) for x in self.demand],
            "supply": [float(x) for x in self.supply],
            "signal": asdict(self.signal) if self.signal else None,
            "vehicles": [_vehicle_dict(v) for v in self.vehicles],
            "weights": asdict(self.weights),
            "initial_queue": float(self.initial_queue),
        }
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        allowed = {"name", "fd", "L", "T", "n_lanes", "step", "initial_density",
                   "demand", "supply", "signal", "vehicles", "weights", "initial_queue"}
        extra = set(d) - allowed
        if extra:
            raise ScenarioError(f"unknown scenario keys: {sorted(extra)}")
        missing = {"fd", "L", "T", "initial_density", "demand", "supply"} - set(d)
        if missing:
            raise ScenarioError(f"missing scenario keys: {sorted(missing)}")
        try:
            fd = FundamentalDiagram.from_dict(d["fd"])
            sig = d.get("signal")
            if sig is not None:
                _strict(sig, {"cycle", "red", "red_start"}, "signal")
                sig = Signal(**{k: float(v) for k, v in sig.items()})
            vehicles = []
            for v in d.get("vehicles", []):
                _strict(v, {"id", "stop_duration", "entry_time", "start_position",
                            "stop_position", "blocks_lane"}, "vehicle")
                vehicles.append(StopVehicle(**v))
            w = d.get("weights", {}) or {}
            _strict(w, {"w_SB", "W_D", "X_D", "X_US", "X_DS"}, "weights")
            weights = Weights(**w)
        except TypeError as exc:
            raise ScenarioError(str(exc)) from exc
        scn = cls(fd=fd, L=float(d["L"]), T=float(d["T"]),
                   initial_density=d["initial_density"], demand=d["demand"],
                   supply=d["supply"], n_lanes=int(d.get("n_lanes", 2)),
                   step=float(d.get("step", 10.0)), signal=sig, vehicles=vehicles,
                   weights=weights, name=d.get("name", ""),
                   initial_queue=float(d.get("initial_queue", 0.0)))
        scn._check_overlaps()
        return scn

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_json(cls, path):
        try:
            d = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ScenarioError(f"scenario file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(d)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _vehicle_dict(v):
    d = {"id": v.id, "stop_duration": v.stop_duration}
    if v.entry_time is not None:
        d["entry_time"] = v.entry_time
    if v.start_position is not None:
        d["start_position"] = v.start_position
    d["stop_position"] = v.stop_position
    return d


def _strict(d, allowed, what):
    extra = set(d) - allowed
    if extra:
        raise ScenarioError(f"unknown {what} keys: {sorted(extra)}")


def _per_step(a, n, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return np.full(n, float(a))
    if a.shape != (n,):
        raise ScenarioError(f"{name} needs {n} per-step values, got {a.shape[0]}")
    return a.copy()


def _data_dir():
    return Path(__file__).parent / "data"


def bundled(name):
    """Load a scenario shipped with the package (``ride_hailing``, ``segment_600``)."""
    return Scenario.from_json(_data_dir() / "scenarios" / f"{name}.json")


def segment_snapshot(scn, t0, densities, on_segment, approaching, horizon, queue=0.0,
                     weights=None):
    """Scenario for a prediction window starting at clock ``t0``.

    ``densities`` tile ``[0, L]``; ``on_segment`` / ``approaching`` are
    :class:`StopVehicle` lists already expressed in window time; the
    demand and supply are those of ``scn`` from ``t0`` onward (callers
    substitute forecasts before passing ``scn`` if needed).  ``weights``
    default to those of ``scn`` and must match the approaching vehicles.
    """
    T = min(horizon, scn.T - t0)
    T = math.floor(T / scn.step + 1e-9) * scn.step
    k0 = int(round(t0 / scn.step))
    nk = int(round(T / scn.step))
    return Scenario(
        fd=scn.fd, L=scn.L, T=T, initial_density=densities,
        demand=scn.demand[k0:k0 + nk], supply=scn.supply[k0:k0 + nk],
        n_lanes=scn.n_lanes, step=scn.step,
        signal=scn.signal.shifted(t0) if scn.signal else None,
        vehicles=list(on_segment) + list(approaching),
        weights=copy.deepcopy(scn.weights if weights is None else weights), name=f"{scn.name}@{t0:g}",
        initial_queue=queue)
