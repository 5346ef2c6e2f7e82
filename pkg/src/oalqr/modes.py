"""Actuating modes: actuator subsets with their side-information constants."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np


@dataclass(frozen=True)
class SideInfo:
    """Known constants for one actuating mode.

    s bounds the stacked-parameter Frobenius norm, upsilon < 1 bounds the
    closed-loop operator norm inside the admissible set, eta bounds the
    operator norm of estimated gains applied to the true system, gamma
    bounds the average-cost gap to full actuation, theta_bound dominates
    the input-matrix norm, kappa > 1 dominates gain norms and p_bound
    dominates value-matrix norms. b_bar_bound dominates the operator norm
    of the columns this mode leaves unused (zero for full actuation).
    """

    s: float
    upsilon: float
    eta: float
    gamma: float
    theta_bound: float
    kappa: float
    p_bound: float
    b_bar_bound: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.upsilon < 1.0):
            raise ValueError(f"upsilon must be in (0, 1), got {self.upsilon}")
        if self.kappa <= 1.0:
            raise ValueError(f"kappa must exceed 1, got {self.kappa}")
        if self.s <= 0.0 or self.gamma < 0.0:
            raise ValueError("s must be positive and gamma nonnegative")


@dataclass(frozen=True)
class ActuationMode:
    """An actuator subset together with its side information.

    ``actuators`` holds zero-based column indices into the full input
    matrix, sorted and unique. Mode id 1 is reserved for full actuation.
    """

    id: int
    actuators: tuple
    side_info: SideInfo

    def __post_init__(self):
        acts = tuple(int(a) for a in self.actuators)
        if len(acts) == 0:
            raise ValueError("a mode needs at least one actuator")
        if list(acts) != sorted(set(acts)) or min(acts) < 0:
            raise ValueError(f"actuators must be sorted, unique, nonnegative: {acts}")
        object.__setattr__(self, "actuators", acts)

    @property
    def d_i(self) -> int:
        return len(self.actuators)

    def complement(self, d: int) -> tuple:
        return tuple(j for j in range(d) if j not in self.actuators)

    def b_sub(self, B: np.ndarray) -> np.ndarray:
        return B[:, list(self.actuators)]

    def b_bar(self, B: np.ndarray) -> np.ndarray:
        comp = self.complement(B.shape[1])
        return B[:, list(comp)]

    def r_sub(self, R: np.ndarray) -> np.ndarray:
        idx = list(self.actuators)
        return R[np.ix_(idx, idx)]

    def actuators_one_based(self) -> list:
        return [a + 1 for a in self.actuators]


def enumerate_subsets(d: int):
    """Nonempty actuator subsets, by size then lexicographic order.

    The empty set is excluded since it has no control authority. The full
    set is listed too; callers assign ids (full actuation gets id 1).
    """
    out = []
    for r in range(1, d + 1):
        out.extend(combinations(range(d), r))
    return out
