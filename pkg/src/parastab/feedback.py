"""Feedback laws mapping a nodal state to actuator amplitudes.

Two laws are provided: the explicit oblique-projection law, computed online
from the current operators, and the Riccati law, read off a precomputed
periodic gain table on a (possibly coarser) mesh.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvalidArgument
from .fem import FemOperators
from .mesh import RestrictionMap
from .riccati import RiccatiGainTable
from .spaces import ActuatorBasis

LAW_KINDS = ("none", "oblique", "riccati")


@dataclass(frozen=True)
class FeedbackLaw:
    """Choice of feedback together with the actuator layout it drives.

    ``m`` is the per-axis actuator count (M0 = m**2) and ``r`` the coverage
    fraction. ``kind == "none"`` still carries a layout so that a free run can
    be compared against a controlled one on the same actuators.
    """

    kind: str
    m: int = 1
    r: float = 0.5
    lam: float = 1.0
    table: RiccatiGainTable | None = None

    def __post_init__(self):
        if self.kind not in LAW_KINDS:
            raise InvalidArgument(f"unknown feedback law {self.kind!r}")
        if int(self.m) != self.m or self.m < 1:
            raise InvalidArgument(f"per-axis actuator count must be a positive integer, got {self.m!r}")
        if self.kind == "oblique" and not math.isfinite(self.lam):
            raise InvalidArgument("oblique law needs a finite lambda")
        if self.kind == "riccati":
            if self.table is None:
                raise InvalidArgument("riccati law needs a gain table")
            if not self.table.period > 0:
                raise InvalidArgument("gain table period must be positive")
            if self.table.m0 != self.M0:
                raise InvalidArgument(f"gain table has {self.table.m0} actuators, law expects {self.M0}")

    @property
    def M0(self) -> int:
        return int(self.m) ** 2

    @classmethod
    def none(cls, m: int = 1, r: float = 0.5) -> "FeedbackLaw":
        return cls("none", m, r)

    @classmethod
    def oblique(cls, m: int, lam: float = 1.0, r: float = 0.5) -> "FeedbackLaw":
        return cls("oblique", m, r, lam=float(lam))

    @classmethod
    def riccati(cls, table: RiccatiGainTable, r: float = 0.5) -> "FeedbackLaw":
        m = int(round(math.sqrt(table.m0)))
        if m * m != table.m0:
            raise InvalidArgument(f"gain table actuator count {table.m0} is not a square")
        return cls("riccati", m, r, table=table)


def oblique_input(basis: ActuatorBasis, ops: FemOperators, L0, L1, lam: float,
                  y: np.ndarray) -> np.ndarray:
    """u = Vt^-1 E^T (S_nu + L0 + L1 - lam M) y."""
    z = ops.s_nu @ y + L0 @ y + L1 @ y - lam * (ops.mass @ y)
    return sla.solve(basis.Vt, basis.E.T @ z)


def _bracket(times: np.ndarray, s: float):
    """Smallest r with times[r] <= s <= times[r+1], and the weight theta."""
    n = times.size
    if n == 1:
        return 0, 0.0
    r = int(np.searchsorted(times, s, side="left")) - 1
    r = min(max(r, 0), n - 2)
    theta = (s - times[r]) / (times[r + 1] - times[r])
    return r, float(min(max(theta, 0.0), 1.0))


def wrap_time(t: float, tau: float, varpi: float) -> float:
    """Representative of t in [tau, tau + varpi] modulo the period."""
    s = t - varpi * math.floor((t - tau) / varpi)
    return min(max(s, tau), tau + varpi)


def interpolated_gain(table: RiccatiGainTable, t: float) -> np.ndarray:
    if t < 0:
        raise InvalidArgument(f"time must be nonnegative, got {t!r}")
    if table.times.size == 0:
        raise InvalidArgument("empty gain table")
    s = wrap_time(t, table.tau, table.period)
    r, theta = _bracket(table.times, s)
    if theta == 0.0:
        return table.K[r]
    return (1.0 - theta) * table.K[r] + theta * table.K[r + 1]


def riccati_input(table: RiccatiGainTable, Xi: RestrictionMap, y: np.ndarray,
                  t: float) -> np.ndarray:
    """Time-interpolated coarse-mesh gain applied to the restricted state."""
    if Xi.n_coarse != table.coarse_node_count:
        raise InvalidArgument(f"restriction keeps {Xi.n_coarse} nodes, gain table expects "
                              f"{table.coarse_node_count}")
    return interpolated_gain(table, t) @ Xi(y)


def control_to_forcing(U: np.ndarray, M, u: np.ndarray) -> np.ndarray:
    """Load vector M U u of the actuator forcing."""
    return M @ (U @ u)
