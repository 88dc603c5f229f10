"""Congestion-control controllers sharing one engine-facing interface."""
from .baseline import (
    AcbConfig,
    AcbController,
    AlohaConfig,
    AlohaController,
    BackoffConfig,
    BackoffController,
    Controller,
    DynamicConfig,
    DynamicController,
    DynamicPolicy,
    SeparationConfig,
    SeparationController,
    acb_gate,
    aloha_on_collision,
    backoff_apply,
    current_backoff_ms,
    dynamic_allocation_step,
    separation_partition,
)
from .common import CollisionRate, EpochResult, Sib2Update, collision_rate
from .crb import (
    ContentionForest,
    ContentionTreeNode,
    CrbConfig,
    CrbController,
    NodeStatus,
    crb_admission,
    crb_on_frame_end,
    depth_bound,
    select_m_delta,
)

SCHEME_CONFIGS = {
    cls.kind: cls
    for cls in (AlohaConfig, AcbConfig, BackoffConfig, DynamicConfig, SeparationConfig, CrbConfig)
}

_CONTROLLERS = {
    AlohaConfig: AlohaController,
    AcbConfig: AcbController,
    BackoffConfig: BackoffController,
    DynamicConfig: DynamicController,
    SeparationConfig: SeparationController,
    CrbConfig: CrbController,
}


def make_controller(cfg, pool, base_slots, cap) -> Controller:
    cfg.validate()
    return _CONTROLLERS[type(cfg)](pool, base_slots, cap, cfg)
