"""Message-level view of the four-step contention-based handshake.

Used to annotate traces and to check them: every engine trace must replay
through :func:`advance_handshake` without a contract violation.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .core import HTC_POOL, SlotOutcome, Success
from .errors import ContractViolation

BASELINE = "baseline"
CRB = "crb"
MODES = (BASELINE, CRB)

# C-RNTI values usable for UEs (0x0001..0xFFF3)
RNTI_MIN, RNTI_MAX = 0x0001, 0xFFF3


class HandshakeState(enum.Enum):
    IDLE = "Idle"
    SENT_PREAMBLE = "SentPreamble"
    GOT_RAR = "GotRar"
    SENT_RRC = "SentRrc"
    RESOLVED = "Resolved"
    COLLIDED_AT_STEP4 = "CollidedAtStep4"


class HandshakeEvent(enum.Enum):
    SEND_PREAMBLE = "send_preamble"
    RECEIVE_RAR = "receive_rar"
    SEND_RRC = "send_rrc"
    CONTENTION_RESOLVED = "contention_resolved"
    CONTENTION_LOST = "contention_lost"
    TREE_ASSIGNMENT = "tree_assignment"
    NO_RAR = "no_rar"


S, E = HandshakeState, HandshakeEvent

_COMMON = {
    (S.IDLE, E.SEND_PREAMBLE): S.SENT_PREAMBLE,
    (S.SENT_PREAMBLE, E.RECEIVE_RAR): S.GOT_RAR,
    (S.GOT_RAR, E.SEND_RRC): S.SENT_RRC,
    (S.SENT_RRC, E.CONTENTION_RESOLVED): S.RESOLVED,
}
_TRANSITIONS = {
    BASELINE: {
        **_COMMON,
        (S.SENT_RRC, E.CONTENTION_LOST): S.COLLIDED_AT_STEP4,
        (S.COLLIDED_AT_STEP4, E.SEND_PREAMBLE): S.SENT_PREAMBLE,
    },
    # the eNB flags the collision from the preamble itself, so a collided
    # device never gets past step 1 and simply waits to transmit again
    CRB: {
        **_COMMON,
        (S.SENT_PREAMBLE, E.TREE_ASSIGNMENT): S.IDLE,
        (S.SENT_PREAMBLE, E.NO_RAR): S.IDLE,
    },
}


def advance_handshake(state: HandshakeState, event: HandshakeEvent, mode: str = BASELINE) -> HandshakeState:
    try:
        table = _TRANSITIONS[mode]
    except KeyError:
        raise ValueError(f"unknown handshake mode {mode!r}; expected one of {MODES}") from None
    nxt = table.get((state, event))
    if nxt is None:
        raise ContractViolation(f"illegal handshake transition {state.value} --{event.value}--> ({mode} mode)")
    return nxt


@dataclass(frozen=True)
class RarMessage:
    """Step-2 response. TA and grant are opaque tokens."""

    addressed_preamble: int
    ta: Optional[str]
    ul_grant: Optional[str]
    temp_c_rnti: Optional[int]
    crb_tree_assignment: Optional[int] = None

    @property
    def grants_step3(self) -> bool:
        return self.ul_grant is not None


class RntiAllocator:
    """Lowest-free allocation over the UE C-RNTI range."""

    def __init__(self, lo: int = RNTI_MIN, hi: int = RNTI_MAX):
        self._lo, self._hi = lo, hi
        self._next = lo
        self._free: list[int] = []
        self.in_use: set[int] = set()

    def allocate(self) -> int:
        if self._free:
            self._free.sort()
            value = self._free.pop(0)
        elif self._next <= self._hi:
            value, self._next = self._next, self._next + 1
        else:
            raise ContractViolation("C-RNTI space exhausted")
        self.in_use.add(value)
        return value

    def release(self, value: int) -> None:
        if value not in self.in_use:
            raise ContractViolation(f"C-RNTI {value} released twice or never allocated")
        self.in_use.remove(value)
        self._free.append(value)


def build_rars(outcome: SlotOutcome, mode: str, rntis: RntiAllocator, tree_nodes=None) -> dict:
    """RARs for one slot, keyed by preamble.

    Baseline: one RAR per detected preamble, shared verbatim by all
    colliders. CRB: collided MTC preambles get a grant-less RAR carrying
    the tree assignment (``tree_nodes`` maps preamble to node id, or None
    while pending); collided HTC preambles get nothing.
    """
    if mode not in MODES:
        raise ValueError(f"unknown handshake mode {mode!r}")
    tree_nodes = tree_nodes or {}
    rars = {}
    for p, entry in outcome.per_preamble.items():
        token = f"ta:{outcome.slot.frame}:{outcome.slot.subframe}:{p}"
        if isinstance(entry, Success) or mode == BASELINE:
            rars[p] = RarMessage(p, token, f"grant:{outcome.slot.frame}:{outcome.slot.subframe}:{p}",
                                 rntis.allocate())
        elif entry.owner != HTC_POOL:
            rars[p] = RarMessage(p, token, None, None, tree_nodes.get(p))
    return rars


@dataclass
class ReplayReport:
    final_states: dict
    dedicated_rnti: dict
    transitions: int


def replay_trace(trace) -> ReplayReport:
    """Drive every device through the handshake as the trace dictates.

    Raises :class:`ContractViolation` on an illegal step, an attempt
    before activation, any event after a terminal one, or time running
    backwards.
    """
    mode = trace.mode
    states: dict[int, HandshakeState] = {}
    terminal: set[int] = set()
    dedicated: dict[int, int] = {}
    rntis = RntiAllocator()
    slot_rnti: dict[tuple, int] = {}
    pending_release: dict[tuple, int] = {}
    last_t = float("-inf")
    steps = 0

    def step(dev, *events):
        nonlocal steps
        for ev in events:
            states[dev] = advance_handshake(states[dev], ev, mode)
            steps += 1

    def shared_rnti(t, preamble):
        key = (t, preamble)
        if key not in slot_rnti:
            slot_rnti[key] = rntis.allocate()
        return slot_rnti[key]

    for ev in trace:
        if ev.time_ms < last_t:
            raise ContractViolation(f"trace time runs backwards at {ev.time_ms} ms")
        if ev.time_ms > last_t:
            for value in pending_release.values():
                rntis.release(value)
            pending_release.clear()
            slot_rnti.clear()
        last_t = ev.time_ms
        dev = ev.device
        if dev is None:
            continue
        if dev in terminal:
            raise ContractViolation(f"device {dev}: {ev.kind} after terminal event")
        if ev.kind == "Activation":
            if dev in states:
                raise ContractViolation(f"device {dev} activated twice")
            states[dev] = HandshakeState.IDLE
            continue
        if dev not in states:
            raise ContractViolation(f"device {dev}: {ev.kind} before activation")
        if ev.kind == "Attempt":
            step(dev, E.SEND_PREAMBLE)
        elif ev.kind == "Success":
            rnti = shared_rnti(ev.time_ms, ev.payload[0])
            step(dev, E.RECEIVE_RAR, E.SEND_RRC, E.CONTENTION_RESOLVED)
            dedicated[dev] = rnti
            terminal.add(dev)
        elif ev.kind == "Collision":
            preamble, owner = ev.payload
            if mode == BASELINE:
                pending_release[(ev.time_ms, preamble)] = shared_rnti(ev.time_ms, preamble)
                step(dev, E.RECEIVE_RAR, E.SEND_RRC, E.CONTENTION_LOST)
            elif owner == HTC_POOL:
                step(dev, E.NO_RAR)
            else:
                step(dev, E.TREE_ASSIGNMENT)
        elif ev.kind == "Outage":
            terminal.add(dev)
        elif ev.kind in ("Barred", "TreeAssigned"):
            if states[dev] not in (S.IDLE, S.COLLIDED_AT_STEP4):
                raise ContractViolation(f"device {dev}: {ev.kind} while {states[dev].value}")
    for value in pending_release.values():
        rntis.release(value)
    check_identifier_uniqueness(dedicated)
    return ReplayReport(states, dedicated, steps)


def check_identifier_uniqueness(dedicated: dict) -> None:
    """No two resolved devices may hold the same dedicated identifier."""
    owners: dict[int, int] = {}
    for dev, rnti in dedicated.items():
        if rnti in owners:
            raise ContractViolation(f"devices {owners[rnti]} and {dev} both hold C-RNTI {rnti}")
        owners[rnti] = dev
