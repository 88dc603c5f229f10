"""Per-run statistics, computed from the event trace alone."""
from __future__ import annotations

import math
import statistics
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field, fields

from .core import FRAME_MS
from .errors import PartialTraceError
from .schemes.common import CollisionRate

# imported lazily by the engine, so the event names are repeated here
_ACTIVATION, _ATTEMPT, _SUCCESS, _COLLISION = "Activation", "Attempt", "Success", "Collision"
_OUTAGE, _TREE, _SIB2, _SLOT = "Outage", "TreeAssigned", "Sib2Broadcast", "RaSlot"


@dataclass(frozen=True)
class MetricsRecord:
    n_devices: int
    simultaneous_attempts: int
    avg_retransmissions: float
    avg_retransmissions_all: float
    outage_probability: float
    mean_access_delay_ms: float
    success_rate: float
    success_count: int
    outage_count: int
    horizon_truncated: int
    first_attempt_collision_fraction: float
    total_attempts: int
    offered_opportunities: int
    max_tree_level: int
    reserved_preambles_total: int
    kappa_series: tuple = field(default=(), compare=True)

    def __post_init__(self):
        if self.success_count + self.outage_count != self.n_devices:
            raise PartialTraceError(
                f"{self.success_count} successes + {self.outage_count} outages != {self.n_devices} devices")

    def row(self) -> dict:
        """Scalar fields only; ``kappa_series`` is summarised by its peak."""
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "kappa_series"}
        out["peak_kappa"] = max((k.kappa for k in self.kappa_series), default=0.0)
        return out


SCALAR_FIELDS = tuple(f.name for f in fields(MetricsRecord) if f.name != "kappa_series") + ("peak_kappa",)


def _mean(values) -> float:
    return math.fsum(values) / len(values) if values else math.nan


def summarize(trace, scenario=None) -> MetricsRecord:
    """Build a :class:`MetricsRecord` from a finished trace.

    Raises :class:`PartialTraceError` if some activated device never
    reached Success or Outage.
    """
    activation: dict[int, float] = {}
    attempts: Counter = Counter()
    first_attempt: dict[int, float] = {}
    first_collided: dict[int, bool] = {}
    succeeded: dict[int, float] = {}
    outaged: set[int] = set()
    truncated = 0
    frame_collided: dict[int, set] = defaultdict(set)
    frame_success: Counter = Counter()
    slot_frames: set[int] = set()
    offered = 0
    max_level = 0
    reserved_total = 0

    for ev in trace:
        kind, dev, t = ev.kind, ev.device, ev.time_ms
        if kind == _ATTEMPT:
            attempts[dev] += 1
            first_attempt.setdefault(dev, t)
        elif kind == _COLLISION:
            if attempts[dev] == 1:
                first_collided.setdefault(dev, True)
            frame = int(t // FRAME_MS)
            frame_collided[frame].add((t, ev.payload[0]))
        elif kind == _SUCCESS:
            if attempts[dev] == 1:
                first_collided.setdefault(dev, False)
            succeeded[dev] = t
            frame_success[int(t // FRAME_MS)] += 1
        elif kind == _SLOT:
            slot_frames.add(ev.payload[0])
            offered += ev.payload[2]
        elif kind == _ACTIVATION:
            activation[dev] = t
        elif kind == _OUTAGE:
            outaged.add(dev)
            truncated += bool(ev.payload[0])
        elif kind == _TREE:
            max_level = max(max_level, ev.payload[1])
        elif kind == _SIB2:
            reserved_total += ev.payload[3]

    pending = set(activation) - set(succeeded) - outaged
    if pending:
        raise PartialTraceError(f"{len(pending)} activated devices never reached a terminal event")

    n = len(activation)
    per_frame = Counter(int(t // FRAME_MS) for t in activation.values())
    retx_ok = [attempts[d] - 1 for d in succeeded]
    retx_all = [max(0, attempts[d] - 1) for d in activation]
    delays = [succeeded[d] - first_attempt[d] for d in succeeded]
    kappa = tuple(
        CollisionRate(len(frame_collided[f]) / max(1, frame_success[f]), len(frame_collided[f]), frame_success[f])
        for f in sorted(slot_frames)
    )
    return MetricsRecord(
        n_devices=n,
        simultaneous_attempts=max(per_frame.values(), default=0),
        avg_retransmissions=_mean(retx_ok),
        avg_retransmissions_all=_mean(retx_all),
        outage_probability=len(outaged) / n if n else 0.0,
        mean_access_delay_ms=_mean(delays),
        success_rate=len(succeeded) / offered if offered else 0.0,
        success_count=len(succeeded),
        outage_count=len(outaged),
        horizon_truncated=truncated,
        first_attempt_collision_fraction=_mean([float(v) for v in first_collided.values()]),
        total_attempts=sum(attempts.values()),
        offered_opportunities=offered,
        max_tree_level=max_level,
        reserved_preambles_total=reserved_total,
        kappa_series=kappa,
    )


@dataclass(frozen=True)
class Aggregate:
    mean: float
    std: float
    n: int

    @property
    def stderr(self) -> float:
        return self.std / math.sqrt(self.n) if self.n > 1 else math.nan


def aggregate(records, name: str) -> Aggregate:
    """Mean and sample standard deviation of one scalar field across repetitions.

    NaN entries (e.g. no successes in a run) are skipped.
    """
    values = [v for v in (getattr(r, name) if name != "peak_kappa" else r.row()[name] for r in records)
              if not (isinstance(v, float) and math.isnan(v))]
    if not values:
        return Aggregate(math.nan, math.nan, 0)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return Aggregate(_mean(values), std, len(values))


def record_to_dict(record: MetricsRecord) -> dict:
    return asdict(record)
