"""Slotted-Aloha baseline and the 3GPP congestion-control variants.

Every controller here detects a collision only at contention resolution,
so the handshake mode is ``"baseline"``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from ..core import (
    DEFAULT_N_CF,
    Device,
    DeviceClass,
    DeviceState,
    PreamblePool,
    TOTAL_PREAMBLES,
)
from .common import CollisionRate, EpochResult, Sib2Update, collision_rate

BACKOFF_CEILING_FACTOR = 10


def aloha_on_collision(device: Device, cap: Optional[int]) -> Device:
    """Count the failed transmission; past ``cap`` retransmissions the device is in outage."""
    device.attempts_made += 1
    if cap is not None and device.attempts_made > cap:
        return device.mark_outage()
    device.state = DeviceState.READY
    device.node_id = None
    return device


def acb_gate(device: Device, p: float, barring_ms: float, now: float, rng) -> Device:
    # q < p equals q <= p almost surely and keeps p = 0 an exact bar
    q = rng.random()
    if q < p:
        return device
    device.state = DeviceState.BARRED
    device.barred_until = now + barring_ms
    device.next_attempt_ms = now + barring_ms
    return device


def current_backoff_ms(bi_ms: float, failures: int, doubling: bool = True,
                       ceiling_factor: float = BACKOFF_CEILING_FACTOR) -> float:
    if bi_ms <= 0:
        return 0.0
    if not doubling:
        return bi_ms
    return min(bi_ms * 2 ** max(0, failures - 1), bi_ms * ceiling_factor)


def backoff_apply(device: Device, bi_ms: float, now: float, rng, doubling: bool = True,
                  ceiling_factor: float = BACKOFF_CEILING_FACTOR) -> Device:
    """Defer the device by a uniform draw on ``[0, BI]``.

    With ``doubling`` the interval doubles per consecutive failure
    (``attempts_made`` of a not-yet-successful device) up to
    ``ceiling_factor`` times the base.
    """
    window = current_backoff_ms(bi_ms, device.attempts_made, doubling, ceiling_factor)
    device.next_attempt_ms = now + (rng.uniform(0.0, window) if window > 0 else 0.0)
    return device


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def separation_partition(total_contention: int, mtc_fraction: float, n_cf: Optional[int] = None,
                         htc_shares_mtc: bool = False) -> PreamblePool:
    if not 0.0 <= mtc_fraction <= 1.0:
        raise ValueError(f"MTC fraction {mtc_fraction} outside [0, 1]")
    if n_cf is None:
        n_cf = TOTAL_PREAMBLES - total_contention
    if total_contention + n_cf > TOTAL_PREAMBLES or total_contention < 0:
        raise ValueError(f"{total_contention} contention + {n_cf} contention-free preambles exceed 64")
    n_mtc = _round_half_up(mtc_fraction * total_contention)
    return PreamblePool(
        contention_free=range(total_contention, total_contention + n_cf),
        htc=range(n_mtc, total_contention),
        mtc_open=range(n_mtc),
        n_cf=n_cf,
        htc_shares_mtc=htc_shares_mtc,
    )


@dataclass(frozen=True)
class DynamicPolicy:
    high_water: float = 1.0
    low_water: float = 0.2
    step_up: int = 1
    step_down: int = 1
    min_slots: int = 1
    max_slots: int = 10

    def __post_init__(self):
        if self.low_water > self.high_water:
            raise ValueError("low_water must not exceed high_water")
        if not 1 <= self.min_slots <= self.max_slots <= 10:
            raise ValueError("slot bounds must satisfy 1 <= min_slots <= max_slots <= 10")


def dynamic_allocation_step(kappa, current_slots: int, policy: DynamicPolicy = DynamicPolicy()) -> int:
    if not 1 <= current_slots <= 10:
        raise ValueError(f"current slots {current_slots} outside [1, 10]")
    k = kappa.kappa if isinstance(kappa, CollisionRate) else float(kappa)
    slots = current_slots
    if k > policy.high_water:
        slots += policy.step_up
    elif k < policy.low_water:
        slots -= policy.step_down
    return max(policy.min_slots, min(policy.max_slots, slots, 10))


@dataclass(frozen=True)
class AlohaConfig:
    """Retry timing of the standard procedure: the UE waits out the RAR
    window, then draws a uniform backoff on ``[0, backoff_ms]``."""

    response_window_ms: float = 5.0
    backoff_ms: float = 20.0

    kind = "aloha"

    def validate(self):
        if self.response_window_ms < 0 or self.backoff_ms < 0:
            raise ValueError("response window and backoff must be >= 0 ms")


@dataclass(frozen=True)
class AcbConfig(AlohaConfig):
    p: float = 0.5
    barring_ms: float = 4000.0

    kind = "aloha_acb"

    def validate(self):
        super().validate()
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"ACB probability p={self.p} outside [0, 1]")
        if self.barring_ms < 0:
            raise ValueError("barring_ms must be >= 0")


@dataclass(frozen=True)
class BackoffConfig(AlohaConfig):
    """HTC keeps the fixed ``backoff_ms``; MTC starts at ``mtc_backoff_ms``
    and doubles per failure up to ten times the base."""

    mtc_backoff_ms: float = 40.0

    kind = "aloha_backoff"

    def validate(self):
        super().validate()
        if self.mtc_backoff_ms < 0:
            raise ValueError("mtc_backoff_ms must be >= 0")


@dataclass(frozen=True)
class DynamicConfig(AlohaConfig):
    high_water: float = 1.0
    low_water: float = 0.2
    step_up: int = 1
    step_down: int = 1
    min_slots: int = 1

    kind = "dynamic_allocation"

    @property
    def policy(self) -> DynamicPolicy:
        return DynamicPolicy(self.high_water, self.low_water, self.step_up, self.step_down, self.min_slots)

    def validate(self):
        super().validate()
        self.policy


@dataclass(frozen=True)
class SeparationConfig(AlohaConfig):
    mtc_fraction: float = 0.3
    htc_full_access: bool = False

    kind = "separation"

    def validate(self):
        super().validate()
        if not 0.0 <= self.mtc_fraction <= 1.0:
            raise ValueError(f"mtc_fraction {self.mtc_fraction} outside [0, 1]")


class Controller:
    """Engine-facing base: one instance per run, owns its own state."""

    mode = "baseline"
    epoch_frames = 1

    def __init__(self, pool: PreamblePool, base_slots: int, cap: Optional[int]):
        self.pool = pool
        self.base_slots = base_slots
        self.slots_per_frame = base_slots
        self.cap = cap

    def gate(self, device: Device, now: float, rng) -> bool:
        return True

    def on_success(self, device: Device, now: float) -> None:
        device.attempts_made += 1
        device.mark_succeeded(now)

    def on_collision(self, device: Device, now: float, rng, entry) -> None:
        raise NotImplementedError

    def acb(self):
        return None

    def current_m(self):
        return None

    def sib2(self) -> Sib2Update:
        return Sib2Update(self.slots_per_frame, self.pool, self.current_m(), self.acb(), self.epoch_frames)

    def on_epoch_end(self, outcomes, now: float, slots_in_epoch: int) -> EpochResult:
        return EpochResult(self.sib2(), collision_rate(outcomes))


class AlohaController(Controller):
    def __init__(self, pool, base_slots, cap, cfg: AlohaConfig = AlohaConfig()):
        super().__init__(pool, base_slots, cap)
        self.cfg = cfg

    def backoff_for(self, device: Device) -> tuple[float, bool]:
        return self.cfg.backoff_ms, False

    def on_collision(self, device, now, rng, entry):
        aloha_on_collision(device, self.cap)
        if device.state is DeviceState.READY:
            bi, doubling = self.backoff_for(device)
            backoff_apply(device, bi, now + self.cfg.response_window_ms, rng, doubling=doubling)


class AcbController(AlohaController):
    def gate(self, device, now, rng):
        # barring applies when a new access procedure starts, not to its retransmissions
        if not device.is_mtc or device.attempts_made > 0:
            return True
        acb_gate(device, self.cfg.p, self.cfg.barring_ms, now, rng)
        return device.state is not DeviceState.BARRED

    def acb(self):
        return (self.cfg.p, self.cfg.barring_ms)


class BackoffController(AlohaController):
    def backoff_for(self, device):
        if device.device_class is DeviceClass.HTC:
            return self.cfg.backoff_ms, False
        return self.cfg.mtc_backoff_ms, True


class DynamicController(AlohaController):
    def on_epoch_end(self, outcomes, now, slots_in_epoch):
        rate = collision_rate(outcomes)
        self.slots_per_frame = dynamic_allocation_step(rate, self.slots_per_frame, self.cfg.policy)
        return EpochResult(self.sib2(), rate)


class SeparationController(AlohaController):
    def __init__(self, pool, base_slots, cap, cfg: SeparationConfig = SeparationConfig()):
        pool = separation_partition(pool.contention_count, cfg.mtc_fraction, pool.n_cf,
                                    htc_shares_mtc=cfg.htc_full_access)
        super().__init__(pool, base_slots, cap, cfg)


def default_pool(n_cf: int = DEFAULT_N_CF, mtc: int = 30) -> PreamblePool:
    return PreamblePool.default(n_cf, mtc)
