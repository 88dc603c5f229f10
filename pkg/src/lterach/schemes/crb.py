"""Collision-resolution random access: m-ary contention trees over reserved preambles.

Every MTC collision seen during a virtual RA frame becomes a tree node.
At the frame boundary the controller picks ``m`` from the collision rate,
reserves ``m`` preambles per node out of the MTC share (FIFO, ascending
indices, deferring whatever does not fit) and broadcasts the new pool.
Members of a scheduled node retransmit once, in the first RA slot of the
next virtual frame, on their reserved set only.
"""
from __future__ import annotations

import enum
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Optional

from ..core import (
    Collision,
    Device,
    DeviceClass,
    DeviceState,
    HTC_POOL,
    PreamblePool,
    eligible_preambles,
)
from .baseline import Controller, aloha_on_collision
from .common import CollisionRate, EpochResult, Sib2Update, collision_rate


class NodeStatus(enum.Enum):
    PENDING = "pending"
    RESOLVING = "resolving"
    RESOLVED = "resolved"


@dataclass
class ContentionTreeNode:
    """One unresolved collision group.

    ``reserved`` stays empty while the node waits in the deferral queue and
    holds exactly ``m`` preambles once scheduled.
    """

    node_id: int
    members: frozenset
    level: int
    m: int
    parent: Optional[int] = None
    reserved: tuple = ()
    status: NodeStatus = NodeStatus.PENDING
    cohort: int = 0

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError(f"tree node {self.node_id} needs >= 2 members, got {len(self.members)}")
        if self.level < 1:
            raise ValueError("tree levels start at 1")


@dataclass(frozen=True)
class CrbConfig:
    x: float = 0.5
    y: float = 2.0
    m0: int = 3
    m_x: int = 4
    m_y: int = 6
    delta_x: int = 1
    delta_y: int = 2
    virtual_frame_len: int = 2
    fixed_m: Optional[int] = None
    freeze_slots: bool = False
    min_open_preambles: int = 0

    kind = "crb_ra"

    def validate(self):
        if not self.x < self.y:
            raise ValueError(f"CrbConfig invariant x < y violated (x={self.x}, y={self.y})")
        if self.x < 0:
            raise ValueError("CrbConfig threshold x must be >= 0")
        if not self.m0 < self.m_x < self.m_y:
            raise ValueError(
                f"CrbConfig invariant m0 < m_x < m_y violated (m0={self.m0}, m_x={self.m_x}, m_y={self.m_y})")
        if self.m0 < 2:
            raise ValueError(f"CrbConfig invariant m0 >= 2 violated (m0={self.m0})")
        if not 0 <= self.delta_x <= self.delta_y:
            raise ValueError(
                f"CrbConfig invariant delta_x <= delta_y violated (delta_x={self.delta_x}, delta_y={self.delta_y})")
        if self.virtual_frame_len < 1:
            raise ValueError("CrbConfig virtual_frame_len must be >= 1 radio frame")
        if self.fixed_m is not None and self.fixed_m < 2:
            raise ValueError(f"CrbConfig fixed_m must be >= 2 (got {self.fixed_m})")
        if self.min_open_preambles < 0:
            raise ValueError("CrbConfig min_open_preambles must be >= 0")

    def __post_init__(self):
        self.validate()


def select_m_delta(kappa: float, cfg: CrbConfig, current_delta: int) -> tuple[int, int, str]:
    """Two-threshold rule. Returns ``(m, delta, branch)`` with branch in
    ``{"m0", "x", "y"}``; a fixed ``m`` overrides the choice of ``m`` only."""
    if kappa >= cfg.y:
        m, delta, branch = cfg.m_y, cfg.delta_y, "y"
    elif kappa >= cfg.x:
        m, delta, branch = cfg.m_x, cfg.delta_x, "x"
    else:
        m, delta, branch = cfg.m0, current_delta, "m0"
    if cfg.fixed_m is not None:
        m = cfg.fixed_m
    return m, delta, branch


@dataclass
class ContentionForest:
    """All trees of one run plus the FIFO of nodes waiting for preambles."""

    nodes: dict = field(default_factory=dict)
    queue: deque = field(default_factory=deque)
    active: list = field(default_factory=list)
    delta: int = 0
    m: Optional[int] = None
    next_id: int = 0
    epoch: int = 0
    reserved_by_level: Counter = field(default_factory=Counter)
    root_capacity: dict = field(default_factory=dict)
    consumed: int = 0

    def new_node(self, members, level, m, parent, cohort) -> ContentionTreeNode:
        node = ContentionTreeNode(self.next_id, frozenset(members), level, m, parent, cohort=cohort)
        self.nodes[node.node_id] = node
        self.next_id += 1
        return node

    @property
    def max_level(self) -> int:
        return max((n.level for n in self.nodes.values()), default=0)

    def active_reserved(self) -> dict:
        return {nid: self.nodes[nid].reserved for nid in self.active}


def crb_on_frame_end(outcomes, cfg: CrbConfig, forest: ContentionForest, pool: PreamblePool, *,
                     base_slots: int, slots_in_epoch: int = 1, dropped=frozenset()) -> EpochResult:
    """Close one virtual RA frame.

    ``dropped`` lists devices that hit the retransmission cap during the
    frame; they are left out of new nodes. A collision group reduced to one
    survivor is returned in ``released`` and goes back to open contention.
    """
    rate = collision_rate(outcomes)
    m, delta, _ = select_m_delta(rate.kappa, cfg, forest.delta)
    forest.delta = delta
    forest.m = m
    forest.root_capacity[forest.epoch] = len(pool.mtc_open) * slots_in_epoch

    for nid in forest.active:
        node = forest.nodes[nid]
        node.status = NodeStatus.RESOLVED
    forest.active = []

    new_nodes: list[ContentionTreeNode] = []
    assignments: dict[int, int] = {}
    released: list[int] = []
    for outcome in outcomes:
        for _, entry in outcome.collisions:
            if entry.owner == HTC_POOL:
                continue
            if isinstance(entry.owner, int):
                parent = forest.nodes[entry.owner]
                level, parent_id, cohort = parent.level + 1, parent.node_id, parent.cohort
            else:
                level, parent_id, cohort = 1, None, forest.epoch
            survivors = sorted(entry.devices - dropped)
            if len(survivors) >= 2:
                node = forest.new_node(survivors, level, m, parent_id, cohort)
                forest.queue.append(node.node_id)
                new_nodes.append(node)
                for dev in survivors:
                    assignments[dev] = node.node_id
            else:
                released.extend(survivors)

    universe = pool.mtc_universe
    free = list(universe[cfg.min_open_preambles:])
    scheduled: list[ContentionTreeNode] = []
    reserved: dict[int, tuple] = {}
    while forest.queue:
        node = forest.nodes[forest.queue[0]]
        if node.m > len(free):
            break
        forest.queue.popleft()
        node.reserved, free = tuple(free[:node.m]), free[node.m:]
        node.status = NodeStatus.RESOLVING
        reserved[node.node_id] = node.reserved
        forest.active.append(node.node_id)
        forest.reserved_by_level[(node.cohort, node.level)] += node.m
        forest.consumed += node.m
        scheduled.append(node)

    taken = {p for part in reserved.values() for p in part}
    new_pool = PreamblePool(
        contention_free=pool.contention_free,
        htc=pool.htc,
        mtc_open=[p for p in universe if p not in taken],
        reserved=reserved,
        n_cf=pool.n_cf,
        htc_shares_mtc=pool.htc_shares_mtc,
    )
    slots = base_slots if cfg.freeze_slots else min(10, base_slots + delta)
    forest.epoch += 1
    sib2 = Sib2Update(slots, new_pool, m, None, cfg.virtual_frame_len)
    return EpochResult(sib2, rate, new_nodes, assignments, scheduled, released)


def crb_admission(device: Device, pool: PreamblePool) -> tuple:
    """Reserved set for tree members, class pool otherwise; empty means wait."""
    return eligible_preambles(device, pool)


def depth_bound(n: int, m: int, slack: int = 5) -> int:
    """``ceil(log_m n) + slack`` in exact integer arithmetic."""
    depth, reach = 0, 1
    while reach < n:
        reach *= m
        depth += 1
    return depth + slack


class CrbController(Controller):
    mode = "crb"

    def __init__(self, pool, base_slots, cap, cfg: CrbConfig = CrbConfig()):
        super().__init__(pool, base_slots, cap)
        self.cfg = cfg
        self.epoch_frames = cfg.virtual_frame_len
        self.forest = ContentionForest(m=cfg.fixed_m if cfg.fixed_m is not None else cfg.m0)
        self._dropped: set[int] = set()

    def current_m(self):
        return self.forest.m

    def on_collision(self, device, now, rng, entry: Collision):
        if device.device_class is DeviceClass.HTC:
            # no RAR for HTC collisions: a fresh procedure at the next RA slot
            aloha_on_collision(device, self.cap)
            if device.state is DeviceState.READY:
                device.next_attempt_ms = now
            return
        device.attempts_made += 1
        if self.cap is not None and device.attempts_made > self.cap:
            device.mark_outage()
            self._dropped.add(device.id)
            return
        device.state = DeviceState.READY
        device.node_id = None
        device.next_attempt_ms = math.inf

    def on_epoch_end(self, outcomes, now, slots_in_epoch):
        result = crb_on_frame_end(outcomes, self.cfg, self.forest, self.pool, base_slots=self.base_slots,
                                  slots_in_epoch=slots_in_epoch, dropped=frozenset(self._dropped))
        self._dropped.clear()
        self.pool = result.sib2.pool
        self.slots_per_frame = result.sib2.slots_per_frame
        return result
