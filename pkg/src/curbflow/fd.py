"""Triangular fundamental diagram."""
from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Argument outside the physical range of the fundamental diagram."""


@dataclass(frozen=True)
class FundamentalDiagram:
    """Triangular flow-density relation.

    Parameters
    ----------
    v_f : float
        Free-flow speed (m/s).
    w_c : float
        Magnitude of the congested wave speed (m/s, positive).
    rho_c : float
        Critical density (veh/m).
    rho_m : float
        Jam density (veh/m).

    The capacity ``q_m = v_f * rho_c`` is derived and must agree with the
    congested branch ``w_c * (rho_m - rho_c)``.
    """

    v_f: float
    w_c: float
    rho_c: float
    rho_m: float
    q_m: float = field(init=False)

    def __post_init__(self):
        if not (self.v_f > 0 and self.w_c > 0):
            raise ValueError("v_f and w_c must be positive")
        if not (0 < self.rho_c < self.rho_m):
            raise ValueError("need 0 < rho_c < rho_m")
        q_m = self.v_f * self.rho_c
        q_cong = self.w_c * (self.rho_m - self.rho_c)
        if abs(q_m - q_cong) > 1e-9 * q_m:
            raise ValueError(
                f"triangle does not close: v_f*rho_c={q_m!r} but "
                f"w_c*(rho_m-rho_c)={q_cong!r}")
        object.__setattr__(self, "q_m", q_m)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        q_m = d.pop("q_m", None)
        extra = set(d) - {"v_f", "w_c", "rho_c", "rho_m"}
        if extra:
            raise ValueError(f"unknown fundamental diagram keys: {sorted(extra)}")
        fd = cls(**{k: float(v) for k, v in d.items()})
        if q_m is not None and abs(float(q_m) - fd.q_m) > 1e-9 * fd.q_m:
            raise ValueError(f"q_m={q_m} inconsistent with v_f*rho_c={fd.q_m}")
        return fd

    def to_dict(self):
        return {"v_f": self.v_f, "w_c": self.w_c, "rho_c": self.rho_c,
                "rho_m": self.rho_m, "q_m": self.q_m}

    def flow(self, rho):
        """Flow (veh/s) at density ``rho`` (veh/m); scalar or array."""
        r = np.asarray(rho, dtype=float)
        if np.any(r < 0) or np.any(r > self.rho_m):
            raise DomainError(f"density outside [0, {self.rho_m}]")
        q = np.where(r <= self.rho_c, self.v_f * r, self.w_c * (self.rho_m - r))
        return float(q) if q.ndim == 0 else q

    def characteristic_cost(self, v):
        """Cost rate ``max_rho [Q(rho) - v rho]`` for a characteristic speed ``v``.

        Linear on ``[-w_c, v_f]`` for the triangle: ``q_m - v * rho_c``.
        """
        s = np.asarray(v, dtype=float)
        if np.any(s < -self.w_c) or np.any(s > self.v_f):
            raise DomainError(f"speed outside [{-self.w_c}, {self.v_f}]")
        c = self.q_m - s * self.rho_c
        return float(c) if c.ndim == 0 else c

    def speed(self, rho):
        """Mean speed (m/s); ``v_f`` at zero density."""
        r = np.asarray(rho, dtype=float)
        if np.any(r < 0) or np.any(r > self.rho_m):
            raise DomainError(f"density outside [0, {self.rho_m}]")
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.where(r <= self.rho_c, self.v_f,
                         self.w_c * (self.rho_m - r) / np.where(r > 0, r, 1.0))
        return float(v) if v.ndim == 0 else v

    def supply(self, rho):
        """Receiving capacity of a cell at density ``rho``."""
        return min(self.q_m, self.w_c * (self.rho_m - rho))

    def demand(self, rho):
        """Sending capacity of a cell at density ``rho``."""
        return min(self.q_m, self.v_f * rho)


#: Parameters of the two-lane test segment used throughout the experiments.
DEFAULT_FD = FundamentalDiagram(v_f=14.0, w_c=2.8, rho_c=0.04, rho_m=0.24)
