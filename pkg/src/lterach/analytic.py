"""Closed-form capacity and collision formulas."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import CapacityError

FRAMES_PER_SECOND = 100
CAPACITY_LIMIT = 2 ** 63 - 1


@dataclass(frozen=True)
class AnalyticParams:
    """Inputs shared by the formulas below. All strictly positive, ``m >= 2``."""

    n: float
    R: float
    T: float
    M: int
    L: int
    q_root: int
    m: int
    d: int

    def __post_init__(self):
        for name in ("n", "R", "T", "M", "L", "q_root", "m", "d"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.m < 2:
            raise ValueError("m must be >= 2")


def ra_opportunities_per_second(preambles_per_slot, slots_per_frame):
    """Preamble opportunities per second; fractional preamble counts pass through."""
    if not preambles_per_slot > 0 or not slots_per_frame > 0:
        raise ValueError("preambles per slot and slots per frame must be > 0")
    value = preambles_per_slot * slots_per_frame * FRAMES_PER_SECOND
    # 16.2 * 2 * 100 lands a few ulps off 3240
    if isinstance(value, float) and abs(value - round(value)) < 1e-9 * max(1.0, abs(value)):
        return int(round(value))
    return value


def collision_probability(n: float, R: float, T: float) -> float:
    """Probability that an attempt collides when ``n`` attempts spread over
    ``R * T`` opportunities (Poisson approximation)."""
    if not R * T > 0:
        raise ValueError("R * T must be > 0")
    if n < 0:
        raise ValueError("n must be >= 0")
    return -math.expm1(-n / (R * T))


def _checked(value: int) -> int:
    if value > CAPACITY_LIMIT:
        raise CapacityError(f"result {value.bit_length()} bits wide exceeds the 64-bit capacity bound")
    return value


def codeword_count(M: int, L: int) -> int:
    """Distinct non-empty codewords over ``L`` slots of ``M`` preambles."""
    if M < 1 or L < 1:
        raise ValueError("M and L must be >= 1")
    return _checked((M + 1) ** L - 1)


def worst_case_reserved(m: int, d: int, q_root: int) -> int:
    """Reserved preambles needed at tree level ``d`` when every preamble collides."""
    if m < 2:
        raise ValueError("m must be >= 2")
    if d < 0:
        raise ValueError("d must be >= 0")
    if q_root < 1:
        raise ValueError("q_root must be >= 1")
    return _checked(m ** d * q_root)


def expected_singletons(n: int, k: int) -> float:
    """Expected number of bins holding exactly one of ``n`` balls thrown into ``k`` bins."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if k < 1:
        raise ValueError("k must be >= 1")
    if n == 0:
        return 0.0
    if k == 1:
        return 1.0 if n == 1 else 0.0
    return n * math.exp((n - 1) * math.log1p(-1.0 / k))
