"""Frame-stepped simulation loop.

Time advances one radio frame at a time; inside a frame only subframes
that carry an RA slot do work. Devices wait in a heap keyed by the
earliest time they may transmit. Every random draw comes from streams
derived from ``(seed, grid point, repetition)``.
"""
from __future__ import annotations

import gc
import heapq
import json
import math
import random
from collections.abc import Iterator
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, NamedTuple, Optional

import numpy as np

from .core import (
    Device,
    DeviceState,
    FRAME_MS,
    PreamblePool,
    RaSlotAddress,
    Success,
    TERMINAL_STATES,
    prach_slots_per_frame,
    ra_subframes,
    resolve_slot,
    select_preamble,
)
from .errors import PoolExhausted
from .schemes import AlohaConfig, CrbConfig, make_controller
from .traffic import POISSON, TrafficModel

ACTIVATION = "Activation"
ATTEMPT = "Attempt"
SUCCESS = "Success"
COLLISION = "Collision"
BARRED = "Barred"
TREE_ASSIGNED = "TreeAssigned"
OUTAGE = "Outage"
SIB2 = "Sib2Broadcast"
RA_SLOT = "RaSlot"

# payload layout per event kind, used for (de)serialisation
PAYLOAD_FIELDS = {
    ACTIVATION: (),
    ATTEMPT: ("frame", "subframe", "preamble"),
    SUCCESS: ("preamble",),
    COLLISION: ("preamble", "owner"),
    BARRED: ("until",),
    TREE_ASSIGNED: ("node", "level"),
    OUTAGE: ("horizon",),
    SIB2: ("slots_per_frame", "m", "open", "reserved", "scheduled", "kappa"),
    RA_SLOT: ("frame", "subframe", "offered"),
}


class TraceEvent(NamedTuple):
    time_ms: float
    kind: str
    device: Optional[int] = None
    payload: tuple = ()

    def info(self) -> dict:
        return dict(zip(PAYLOAD_FIELDS[self.kind], self.payload))


@dataclass
class EventTrace:
    events: list = field(default_factory=list)
    mode: str = "baseline"

    def __iter__(self) -> Iterator[TraceEvent]:
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"mode": self.mode}, sort_keys=True)]
        for ev in self.events:
            row = {"t": ev.time_ms, "ev": ev.kind}
            if ev.device is not None:
                row["dev"] = ev.device
            row.update(ev.info())
            lines.append(json.dumps(row, sort_keys=True, separators=(",", ":")))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "EventTrace":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        header, body = rows[0], rows[1:]
        events = []
        for row in body:
            kind = row["ev"]
            payload = tuple(row[name] for name in PAYLOAD_FIELDS[kind])
            events.append(TraceEvent(row["t"], kind, row.get("dev"), payload))
        return cls(events, header.get("mode", "baseline"))


@dataclass(frozen=True)
class Scenario:
    """Everything one run needs. ``seed`` fixes every random draw."""

    traffic: TrafficModel
    scheme: Any = field(default_factory=AlohaConfig)
    prach_config_index: int = 6
    retransmission_cap: Optional[int] = 10
    seed: int = 0
    horizon_ms: float = 60_000.0
    n_repetitions: int = 1
    mtc_preambles: int = 30
    n_cf: int = 10
    name: str = "scenario"

    def validate(self) -> "Scenario":
        prach_slots_per_frame(self.prach_config_index)
        self.scheme.validate()
        if self.retransmission_cap is not None and self.retransmission_cap < 0:
            raise ValueError("retransmission_cap must be >= 0 or null")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.n_repetitions < 1:
            raise ValueError("n_repetitions must be >= 1")
        if not self.horizon_ms > 0:
            raise ValueError("horizon_ms must be > 0")
        if self.traffic.last_activation_bound_ms >= self.horizon_ms:
            raise ValueError(
                f"horizon {self.horizon_ms} ms does not cover activations up to "
                f"{self.traffic.last_activation_bound_ms} ms")
        if self.traffic.kind == POISSON and self.traffic.horizon_ms > self.horizon_ms:
            raise ValueError("traffic horizon exceeds the simulation horizon")
        PreamblePool.default(self.n_cf, self.mtc_preambles)
        return self

    @property
    def mode(self) -> str:
        return "crb" if isinstance(self.scheme, CrbConfig) else "baseline"

    def with_point(self, **overrides) -> "Scenario":
        return replace(self, **overrides)


def derive_streams(seed: int, point: int = 0, rep: int = 0):
    """Independent traffic and access streams for one (point, rep) cell."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(point, rep))
    traffic_ss, access_ss = ss.spawn(2)
    access_seed = int.from_bytes(access_ss.generate_state(4, np.uint32).tobytes(), "little")
    return np.random.default_rng(traffic_ss), random.Random(access_seed)


@dataclass
class SimulationResult:
    record: Any
    trace: EventTrace
    controller: Any
    devices: list


class Simulation:
    def __init__(self, scenario: Scenario, point: int = 0, rep: int = 0):
        scenario.validate()
        self.scenario = scenario
        traffic_rng, self.rng = derive_streams(scenario.seed, point, rep)
        self.devices = [
            Device(i, cls, t, pos)
            for i, (t, pos, cls) in enumerate(scenario.traffic.generate(traffic_rng))
        ]
        pool = PreamblePool.default(scenario.n_cf, scenario.mtc_preambles)
        base_slots = prach_slots_per_frame(scenario.prach_config_index)
        self.controller = make_controller(scenario.scheme, pool, base_slots, scenario.retransmission_cap)
        self.trace = EventTrace(mode=self.controller.mode)
        self._heap: list = []
        self._next_activation = 0
        self._unresolved = len(self.devices)

    def _emit(self, t, kind, device=None, payload=()):
        self.trace.events.append(TraceEvent(t, kind, device, payload))

    def _push(self, device: Device):
        heapq.heappush(self._heap, (device.next_attempt_ms, device.id))

    def _activate_until(self, t: float):
        devices = self.devices
        while self._next_activation < len(devices) and devices[self._next_activation].activation_time <= t:
            d = devices[self._next_activation]
            self._next_activation += 1
            d.state = DeviceState.READY
            d.next_attempt_ms = d.activation_time
            self._emit(d.activation_time, ACTIVATION, d.id)
            self._push(d)

    def _slot(self, frame: int, subframe: int, t: float, first_in_epoch: bool, next_epoch_ms: float):
        ctrl, rng, devices, heap = self.controller, self.rng, self.devices, self._heap
        pool = ctrl.pool
        emit = self.trace.events.append
        emit(TraceEvent(t, RA_SLOT, None, (frame, subframe, pool.offered(include_reserved=first_in_epoch))))

        popped = []
        while heap and heap[0][0] <= t:
            key, did = heapq.heappop(heap)
            d = devices[did]
            if key != d.next_attempt_ms or d.state in TERMINAL_STATES:
                continue
            popped.append(d)

        attempts = []
        for d in popped:
            if d.state is DeviceState.BARRED:
                d.state = DeviceState.READY
                d.barred_until = None
            if not ctrl.gate(d, t, rng):
                emit(TraceEvent(t, BARRED, d.id, (d.barred_until,)))
                self._push(d)
                continue
            try:
                p = select_preamble(d, pool, rng)
            except PoolExhausted:
                if d.state is not DeviceState.ASSIGNED:
                    d.next_attempt_ms = next_epoch_ms
                    self._push(d)
                continue
            attempts.append((d.id, p))
            if d.first_attempt_ms is None:
                d.first_attempt_ms = t
            emit(TraceEvent(t, ATTEMPT, d.id, (frame, subframe, p)))

        outcome = resolve_slot(attempts, RaSlotAddress(frame, subframe), pool)
        for p, entry in outcome.per_preamble.items():
            if isinstance(entry, Success):
                d = devices[entry.device_id]
                ctrl.on_success(d, t)
                emit(TraceEvent(t, SUCCESS, d.id, (p,)))
                self._unresolved -= 1
                continue
            info = (p, entry.owner)
            for did in sorted(entry.devices):
                d = devices[did]
                ctrl.on_collision(d, t, rng, entry)
                emit(TraceEvent(t, COLLISION, did, info))
                if d.state is DeviceState.OUTAGE:
                    emit(TraceEvent(t, OUTAGE, did, (False,)))
                    self._unresolved -= 1
                elif d.state is DeviceState.READY and d.next_attempt_ms != math.inf:
                    heapq.heappush(heap, (d.next_attempt_ms, did))
        return outcome

    def _epoch_end(self, t_end: float, outcomes, slots_in_epoch: int):
        self._activate_until(t_end)
        res = self.controller.on_epoch_end(outcomes, t_end, slots_in_epoch)
        devices = self.devices
        for node in res.new_nodes:
            for did in sorted(node.members):
                d = devices[did]
                d.state = DeviceState.ASSIGNED
                d.node_id = node.node_id
                d.next_attempt_ms = math.inf
                self._emit(t_end, TREE_ASSIGNED, did, (node.node_id, node.level))
        for node in res.scheduled:
            for did in sorted(node.members):
                d = devices[did]
                if not d.is_terminal:
                    d.next_attempt_ms = t_end
                    self._push(d)
        for did in res.released:
            d = devices[did]
            d.state = DeviceState.READY
            d.next_attempt_ms = t_end
            self._push(d)
        sib2 = res.sib2
        reserved = sum(len(v) for v in sib2.pool.reserved.values())
        self._emit(t_end, SIB2, None, (sib2.slots_per_frame, sib2.m, len(sib2.pool.mtc_open), reserved,
                                       len(res.scheduled), res.kappa.kappa))

    def run(self) -> SimulationResult:
        # the trace is acyclic, so cyclic GC passes over it are wasted work
        enabled = gc.isenabled()
        gc.disable()
        try:
            return self._run()
        finally:
            if enabled:
                gc.enable()

    def _run(self) -> SimulationResult:
        from .metrics import summarize

        horizon = self.scenario.horizon_ms
        ctrl = self.controller
        frame = 0
        outcomes: list = []
        slots_in_epoch = 0
        while self._unresolved > 0 and frame * FRAME_MS < horizon:
            epoch_frames = ctrl.epoch_frames
            epoch_start_frame = frame - frame % epoch_frames
            next_epoch_ms = (epoch_start_frame + epoch_frames) * FRAME_MS
            for sf in ra_subframes(ctrl.slots_per_frame):
                t = frame * FRAME_MS + sf
                if t >= horizon:
                    break
                self._activate_until(t)
                outcomes.append(self._slot(frame, sf, t, slots_in_epoch == 0, next_epoch_ms))
                slots_in_epoch += 1
            frame += 1
            if frame % epoch_frames == 0 and frame * FRAME_MS <= horizon:
                self._epoch_end(frame * FRAME_MS, outcomes, slots_in_epoch)
                outcomes, slots_in_epoch = [], 0

        if self._unresolved > 0:
            self._activate_until(horizon)
            end = max(horizon, self.trace.events[-1].time_ms) if self.trace.events else horizon
            for d in self.devices:
                if not d.is_terminal:
                    d.mark_outage()
                    self._emit(end, OUTAGE, d.id, (True,))
            self._unresolved = 0
        record = summarize(self.trace, self.scenario)
        return SimulationResult(record, self.trace, ctrl, self.devices)


def simulate(scenario: Scenario, point: int = 0, rep: int = 0) -> SimulationResult:
    return Simulation(scenario, point, rep).run()


def run(scenario: Scenario, point: int = 0, rep: int = 0):
    """One repetition: ``(MetricsRecord, EventTrace)``."""
    res = simulate(scenario, point, rep)
    return res.record, res.trace


@dataclass(frozen=True)
class GridPoint:
    index: int
    label: str
    scenario: Scenario
    params: tuple = ()


def _run_cell(args):
    point, rep, keep_trace = args
    record, trace = run(point.scenario, point.index, rep)
    return record, (trace if keep_trace else None)


def run_batch(points, reps: Optional[int] = None, workers: Optional[int] = 1, keep_traces: bool = False):
    """One run per grid point per repetition, returned point-major.

    ``points`` is a list of :class:`GridPoint` (or bare scenarios, indexed
    by position). Results are ordered by index, never by completion.
    """
    points = [p if isinstance(p, GridPoint) else GridPoint(i, p.name, p) for i, p in enumerate(points)]
    if not points:
        raise ValueError("sweep grid is empty")
    cells = []
    for point in points:
        n = reps if reps is not None else point.scenario.n_repetitions
        cells.extend((point, rep, keep_traces) for rep in range(n))
    if workers is not None and workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_run_cell, cells, chunksize=max(1, len(cells) // (4 * workers))))
    else:
        out = [_run_cell(c) for c in cells]
    return [(point, rep, record, trace) for (point, rep, _), (record, trace) in zip(cells, out)]
