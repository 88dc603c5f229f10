"""Types shared by every congestion-control controller."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..core import Collision, PreamblePool, Success


@dataclass(frozen=True)
class CollisionRate:
    """Collided preambles per successful preamble over a window.

    The denominator is floored at one so an all-collision window stays finite.
    """

    kappa: float
    collided: int = 0
    successes: int = 0

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError(f"collision rate must be >= 0, got {self.kappa}")


def collision_rate(outcomes) -> CollisionRate:
    collided = successes = 0
    for outcome in outcomes:
        for entry in outcome.per_preamble.values():
            if isinstance(entry, Collision):
                collided += 1
            elif isinstance(entry, Success):
                successes += 1
    return CollisionRate(collided / max(1, successes), collided, successes)


@dataclass(frozen=True)
class Sib2Update:
    """End-of-epoch broadcast. ``m`` is only meaningful for CRB-RA."""

    slots_per_frame: int
    pool: PreamblePool
    m: Optional[int] = None
    acb: Optional[tuple[float, float]] = None
    virtual_frame_len: int = 1

    def __post_init__(self):
        if not 1 <= self.slots_per_frame <= 10:
            raise ValueError(f"slots per frame {self.slots_per_frame} outside [1, 10]")
        if self.m is not None and self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if self.acb is not None:
            p, barring_ms = self.acb
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"ACB probability {p} outside [0, 1]")
            if barring_ms < 0:
                raise ValueError("ACB barring time must be >= 0")
        if self.virtual_frame_len < 1:
            raise ValueError("virtual frame length must be >= 1 radio frame")


@dataclass
class EpochResult:
    """What a controller hands back to the engine at an epoch boundary."""

    sib2: Sib2Update
    kappa: CollisionRate
    new_nodes: list = field(default_factory=list)
    assignments: dict = field(default_factory=dict)
    scheduled: list = field(default_factory=list)
    released: list = field(default_factory=list)

