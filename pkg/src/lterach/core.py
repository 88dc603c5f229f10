"""Slot-level mechanics of LTE contention-based random access.

Preamble pools, the PRACH slot layout, preamble selection and the
resolution of one RA slot into idle / success / collision entries.
"""
from __future__ import annotations

import enum
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

from .errors import ContractViolation, PoolExhausted

TOTAL_PREAMBLES = 64
SUBFRAMES_PER_FRAME = 10
FRAME_MS = 10
DEFAULT_N_CF = 10
DEFAULT_MTC_PREAMBLES = 30

PreambleId = int

# RA slots per radio frame for PRACH configuration indices 0..15. Only
# index 6 -> 2 and the ceiling of 10 are pinned; the rest follow the
# grouping of the FDD format-0 table, rounded up to be monotone.
PRACH_SLOTS_TABLE = (1, 1, 1, 1, 1, 1, 2, 2, 2, 3, 3, 3, 5, 5, 10, 10)

MTC_POOL = "mtc"
HTC_POOL = "htc"


def prach_slots_per_frame(config_index: int) -> int:
    if isinstance(config_index, bool) or not isinstance(config_index, int):
        raise ValueError(f"PRACH configuration index must be an integer, got {config_index!r}")
    if not 0 <= config_index < len(PRACH_SLOTS_TABLE):
        raise ValueError(f"PRACH configuration index {config_index} outside [0, 15]")
    return PRACH_SLOTS_TABLE[config_index]


def config_index_for_slots(slots_per_frame: int) -> int:
    """Smallest configuration index giving exactly ``slots_per_frame``."""
    for idx, k in enumerate(PRACH_SLOTS_TABLE):
        if k == slots_per_frame:
            return idx
    raise ValueError(f"no PRACH configuration index yields {slots_per_frame} slots per frame")


def ra_subframes(slots_per_frame: int) -> tuple[int, ...]:
    """Subframes carrying an RA slot, spread evenly over the frame."""
    if not 1 <= slots_per_frame <= SUBFRAMES_PER_FRAME:
        raise ValueError(f"slots per frame {slots_per_frame} outside [1, 10]")
    return tuple(i * SUBFRAMES_PER_FRAME // slots_per_frame for i in range(slots_per_frame))


class RaSlotAddress(NamedTuple):
    frame: int
    subframe: int

    @property
    def time_ms(self) -> int:
        return self.frame * FRAME_MS + self.subframe


def _as_sorted_ids(values: Iterable[int], what: str) -> tuple[int, ...]:
    ids = tuple(sorted(set(values)))
    for p in ids:
        if not 0 <= p < TOTAL_PREAMBLES:
            raise ContractViolation(f"{what}: preamble {p} outside [0, {TOTAL_PREAMBLES - 1}]")
    return ids


@dataclass(frozen=True)
class PreamblePool:
    """Partition of the 64 preamble indices for one (virtual) RA frame.

    Parts are stored as sorted tuples so draws index them directly.
    ``htc_shares_mtc`` lets HTC devices also draw from ``mtc_open``
    (the resource-separation variant that keeps full access for HTC).
    """

    contention_free: tuple[int, ...]
    htc: tuple[int, ...]
    mtc_open: tuple[int, ...]
    reserved: Mapping[int, tuple[int, ...]] = field(default_factory=dict)
    n_cf: Optional[int] = None
    htc_shares_mtc: bool = False

    def __post_init__(self):
        cf = _as_sorted_ids(self.contention_free, "contention_free")
        htc = _as_sorted_ids(self.htc, "htc")
        mtc = _as_sorted_ids(self.mtc_open, "mtc_open")
        reserved = {int(k): _as_sorted_ids(v, f"reserved[{k}]") for k, v in sorted(self.reserved.items())}
        object.__setattr__(self, "contention_free", cf)
        object.__setattr__(self, "htc", htc)
        object.__setattr__(self, "mtc_open", mtc)
        object.__setattr__(self, "reserved", reserved)
        if self.n_cf is None:
            object.__setattr__(self, "n_cf", len(cf))
        elif len(cf) != self.n_cf:
            raise ContractViolation(f"contention-free part has {len(cf)} preambles, expected {self.n_cf}")

        seen: dict[int, str] = {}
        parts = [("contention_free", cf), ("htc", htc), ("mtc_open", mtc)]
        parts += [(f"reserved[{k}]", v) for k, v in reserved.items()]
        for name, part in parts:
            for p in part:
                if p in seen:
                    raise ContractViolation(f"preamble {p} in both {seen[p]} and {name}")
                seen[p] = name

    @classmethod
    def default(cls, n_cf: int = DEFAULT_N_CF, mtc: int = DEFAULT_MTC_PREAMBLES) -> "PreamblePool":
        """Contention-free set at the top, MTC first among contention preambles, HTC the rest."""
        contention = TOTAL_PREAMBLES - n_cf
        if not 0 <= n_cf <= TOTAL_PREAMBLES:
            raise ValueError(f"n_cf {n_cf} outside [0, 64]")
        if not 0 <= mtc <= contention:
            raise ValueError(f"{mtc} MTC preambles do not fit in {contention} contention preambles")
        return cls(
            contention_free=range(contention, TOTAL_PREAMBLES),
            htc=range(mtc, contention),
            mtc_open=range(mtc),
            n_cf=n_cf,
        )

    @property
    def contention_count(self) -> int:
        return TOTAL_PREAMBLES - self.n_cf

    @property
    def mtc_universe(self) -> tuple[int, ...]:
        """Open MTC preambles plus every reserved set (what trees carve from)."""
        ids = set(self.mtc_open)
        for part in self.reserved.values():
            ids.update(part)
        return tuple(sorted(ids))

    def owner_of(self, preamble: int):
        if preamble in self.reserved_index:
            return self.reserved_index[preamble]
        if preamble in self._mtc_set:
            return MTC_POOL
        if preamble in self._htc_set:
            return HTC_POOL
        return None

    @property
    def reserved_index(self) -> dict[int, int]:
        idx = self.__dict__.get("_reserved_index")
        if idx is None:
            idx = {p: node for node, part in self.reserved.items() for p in part}
            object.__setattr__(self, "_reserved_index", idx)
        return idx

    @property
    def _mtc_set(self) -> frozenset:
        s = self.__dict__.get("_mtc_frozen")
        if s is None:
            s = frozenset(self.mtc_open)
            object.__setattr__(self, "_mtc_frozen", s)
        return s

    @property
    def _htc_set(self) -> frozenset:
        s = self.__dict__.get("_htc_frozen")
        if s is None:
            s = frozenset(self.htc)
            object.__setattr__(self, "_htc_frozen", s)
        return s

    @property
    def htc_eligible(self) -> tuple[int, ...]:
        if not self.htc_shares_mtc:
            return self.htc
        s = self.__dict__.get("_htc_wide")
        if s is None:
            s = tuple(sorted(set(self.htc) | set(self.mtc_open)))
            object.__setattr__(self, "_htc_wide", s)
        return s

    def offered(self, include_reserved: bool = True) -> int:
        """Preambles usable by some device class in a slot."""
        n = len(self.htc) + len(self.mtc_open)
        if include_reserved:
            n += sum(len(v) for v in self.reserved.values())
        return n


class DeviceClass(enum.Enum):
    HTC = "htc"
    MTC_HIGH = "mtc_high"
    MTC_LOW = "mtc_low"

    @property
    def is_mtc(self) -> bool:
        return self is not DeviceClass.HTC


class DeviceState(enum.Enum):
    DORMANT = "dormant"
    READY = "ready"
    BARRED = "barred"
    ASSIGNED = "assigned"
    SUCCEEDED = "succeeded"
    OUTAGE = "outage"


TERMINAL_STATES = frozenset({DeviceState.SUCCEEDED, DeviceState.OUTAGE})


@dataclass(slots=True)
class Device:
    """One UE. Mutable, owned by a single simulation.

    ``attempts_made`` counts preamble transmissions whose outcome is known.
    ``next_attempt_ms`` is the earliest time the engine may let it transmit.
    """

    id: int
    device_class: DeviceClass = DeviceClass.MTC_LOW
    activation_time: float = 0.0
    position: Optional[tuple[float, float]] = None
    attempts_made: int = 0
    state: DeviceState = DeviceState.DORMANT
    barred_until: Optional[float] = None
    node_id: Optional[int] = None
    succeeded_at: Optional[float] = None
    first_attempt_ms: Optional[float] = None
    next_attempt_ms: float = 0.0

    @property
    def is_terminal(self) -> bool:
        return self.state in TERMINAL_STATES

    @property
    def is_mtc(self) -> bool:
        return self.device_class.is_mtc

    def mark_succeeded(self, now: float) -> "Device":
        if self.is_terminal:
            raise ContractViolation(f"device {self.id} is already {self.state.value}")
        self.state = DeviceState.SUCCEEDED
        self.succeeded_at = now
        self.node_id = None
        return self

    def mark_outage(self) -> "Device":
        if self.is_terminal:
            raise ContractViolation(f"device {self.id} is already {self.state.value}")
        self.state = DeviceState.OUTAGE
        self.node_id = None
        return self


class _Idle:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "IDLE"


IDLE = _Idle()


@dataclass(frozen=True)
class Success:
    device_id: int


@dataclass(frozen=True)
class Collision:
    devices: frozenset
    owner: Union[str, int, None] = None


SlotEntry = Union[_Idle, Success, Collision]


@dataclass(frozen=True)
class SlotOutcome:
    """Result of one RA slot. Only used preambles are stored; the rest of
    ``offered`` is idle."""

    slot: RaSlotAddress
    per_preamble: Mapping[int, SlotEntry]
    offered: tuple[int, ...] = tuple(range(TOTAL_PREAMBLES))

    def entry(self, preamble: int) -> SlotEntry:
        return self.per_preamble.get(preamble, IDLE)

    @property
    def idle(self) -> tuple[int, ...]:
        return tuple(p for p in self.offered if p not in self.per_preamble)

    @property
    def successes(self) -> list[tuple[int, Success]]:
        return [(p, e) for p, e in sorted(self.per_preamble.items()) if isinstance(e, Success)]

    @property
    def collisions(self) -> list[tuple[int, Collision]]:
        return [(p, e) for p, e in sorted(self.per_preamble.items()) if isinstance(e, Collision)]


def eligible_preambles(device: Device, pool: PreamblePool) -> tuple[int, ...]:
    """The pool subset a device may draw from; empty when it must wait."""
    if device.state is DeviceState.ASSIGNED:
        return pool.reserved.get(device.node_id, ())
    if device.device_class is DeviceClass.HTC:
        return pool.htc_eligible
    return pool.mtc_open


def select_preamble(device: Device, pool: PreamblePool, rng) -> int:
    """Uniform draw from the device's eligible subset; one ``randrange`` call."""
    subset = eligible_preambles(device, pool)
    if not subset:
        raise PoolExhausted(f"no eligible preamble for device {device.id} ({device.state.value})")
    return subset[rng.randrange(len(subset))]


def resolve_slot(attempts, slot: RaSlotAddress, pool: Optional[PreamblePool] = None,
                 offered: Optional[Iterable[int]] = None) -> SlotOutcome:
    groups: dict[int, list[int]] = {}
    seen = set()
    for device_id, preamble in attempts:
        if device_id in seen:
            raise ContractViolation(f"device {device_id} transmitted twice in slot {tuple(slot)}")
        seen.add(device_id)
        groups.setdefault(preamble, []).append(device_id)

    per_preamble: dict[int, SlotEntry] = {}
    for preamble in sorted(groups):
        ids = groups[preamble]
        if len(ids) == 1:
            per_preamble[preamble] = Success(ids[0])
        else:
            owner = pool.owner_of(preamble) if pool is not None else None
            per_preamble[preamble] = Collision(frozenset(ids), owner)
    offered_ids = tuple(range(TOTAL_PREAMBLES)) if offered is None else tuple(sorted(set(offered) | set(groups)))
    return SlotOutcome(slot, per_preamble, offered_ids)
