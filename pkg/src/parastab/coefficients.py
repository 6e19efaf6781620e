"""Named reaction/convection coefficient families and initial states."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgument
from .mesh import Triangulation

PAPER_PERIOD = math.pi / 6


def _paper_a(x, t):
    return -2.5 + x[:, 0] - np.abs(np.sin(6.0 * t + x[:, 0]))


def _paper_b(x, t):
    return np.column_stack([x[:, 0] + x[:, 1], np.abs(np.cos(6.0 * t) * x[:, 0] * x[:, 1])])


def _zero_b(x, t):
    return np.zeros((x.shape[0], 2))


INITIAL_STATES: dict[str, Callable] = {
    "paper": lambda x: 1.0 - 2.0 * x[:, 0] * x[:, 1],
    "zero": lambda x: np.zeros(x.shape[0]),
    "constant": lambda x: np.ones(x.shape[0]),
    "cosine": lambda x: np.cos(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1]),
}


@dataclass(frozen=True)
class CoefficientSet:
    """Reaction ``a(x, t)``, convection ``b(x, t)`` and initial state ``y0(x)``.

    ``period`` is 0 for autonomous data. Fields take an (N, 2) array of points.
    """

    name: str
    a: Callable
    b: Callable
    y0: Callable
    period: float = 0.0
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.period < 0:
            raise InvalidArgument("period must be nonnegative")

    @property
    def autonomous(self) -> bool:
        return self.period == 0.0

    def with_initial(self, y0) -> "CoefficientSet":
        if isinstance(y0, str):
            y0 = initial_state(y0)
        return CoefficientSet(self.name, self.a, self.b, y0, self.period, self.params)


def initial_state(name: str) -> Callable:
    try:
        return INITIAL_STATES[name]
    except KeyError:
        raise InvalidArgument(f"unknown initial state {name!r}") from None


def paper2d() -> CoefficientSet:
    return CoefficientSet("paper2d", _paper_a, _paper_b, INITIAL_STATES["paper"], PAPER_PERIOD)


def autonomous_const(c: float, y0: str = "paper") -> CoefficientSet:
    c = float(c)
    return CoefficientSet("autonomous_const", lambda x, t: np.full(x.shape[0], c), _zero_b,
                          initial_state(y0), 0.0, {"c": c})


def pure_diffusion(y0: str = "paper") -> CoefficientSet:
    return CoefficientSet("pure_diffusion", lambda x, t: np.zeros(x.shape[0]), _zero_b,
                          initial_state(y0), 0.0)


def builtin(name: str, c: float = 0.0, y0: str = "paper") -> CoefficientSet:
    if name == "paper2d":
        return paper2d().with_initial(y0)
    if name == "autonomous_const":
        return autonomous_const(c, y0)
    if name == "pure_diffusion":
        return pure_diffusion(y0)
    raise InvalidArgument(f"unknown coefficient set {name!r}")


def evaluate_coefficient(coeffs: CoefficientSet, name: str, mesh: Triangulation,
                         t: float = 0.0) -> np.ndarray:
    """Nodal values of field ``name`` in {"a", "b", "y0"}; ``b`` comes back as (N, 2)."""
    if t < 0:
        raise InvalidArgument(f"time must be nonnegative, got {t!r}")
    x = mesh.nodes
    if name == "a":
        return np.asarray(coeffs.a(x, t), dtype=float)
    if name == "b":
        return np.asarray(coeffs.b(x, t), dtype=float)
    if name == "y0":
        return np.asarray(coeffs.y0(x), dtype=float)
    raise InvalidArgument(f"unknown coefficient field {name!r}")
