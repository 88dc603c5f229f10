import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lterach.core import (
    HTC_POOL,
    IDLE,
    MTC_POOL,
    Collision,
    Device,
    DeviceClass,
    DeviceState,
    PreamblePool,
    RaSlotAddress,
    Success,
    config_index_for_slots,
    eligible_preambles,
    prach_slots_per_frame,
    ra_subframes,
    resolve_slot,
    select_preamble,
)
from lterach.errors import ContractViolation, PoolExhausted

SLOT = RaSlotAddress(0, 1)


class TestPrachTable:
    def test_index_six_gives_two_slots(self):
        assert prach_slots_per_frame(6) == 2

    def test_peak_index_gives_ten_slots(self):
        assert prach_slots_per_frame(14) == 10
        assert max(prach_slots_per_frame(i) for i in range(16)) == 10

    def test_monotone_over_indices(self):
        slots = [prach_slots_per_frame(i) for i in range(16)]
        assert slots == sorted(slots)

    @pytest.mark.parametrize("bad", [-1, 16, 64, 2.0, True, "6"])
    def test_rejects_bad_index(self, bad):
        with pytest.raises(ValueError):
            prach_slots_per_frame(bad)

    def test_inverse_lookup(self):
        for k in (1, 2, 3, 5, 10):
            assert prach_slots_per_frame(config_index_for_slots(k)) == k
        with pytest.raises(ValueError):
            config_index_for_slots(4)

    @pytest.mark.parametrize("k", range(1, 11))
    def test_subframes_distinct_and_in_frame(self, k):
        sfs = ra_subframes(k)
        assert len(set(sfs)) == k
        assert all(0 <= s < 10 for s in sfs)
        assert sfs[0] == 0

    def test_two_slots_are_half_a_frame_apart(self):
        assert ra_subframes(2) == (0, 5)

    def test_slot_time(self):
        assert RaSlotAddress(3, 5).time_ms == 35


class TestPreamblePool:
    def test_default_layout(self):
        pool = PreamblePool.default()
        assert pool.contention_free == tuple(range(54, 64))
        assert pool.mtc_open == tuple(range(30))
        assert pool.htc == tuple(range(30, 54))
        assert pool.contention_count == 54
        assert pool.offered() == 54

    def test_all_contention_to_mtc(self):
        pool = PreamblePool.default(mtc=54)
        assert pool.htc == ()
        assert len(pool.mtc_open) == 54

    def test_overlap_rejected(self):
        with pytest.raises(ContractViolation, match="preamble 5"):
            PreamblePool(contention_free=range(54, 64), htc=range(5, 54), mtc_open=range(6))

    def test_reserved_overlap_rejected(self):
        with pytest.raises(ContractViolation):
            PreamblePool(range(54, 64), range(30, 54), range(4, 30), reserved={0: (0, 1), 1: (1, 2)})

    def test_out_of_range_rejected(self):
        with pytest.raises(ContractViolation):
            PreamblePool(range(54, 64), range(30, 54), [64])

    def test_n_cf_mismatch(self):
        with pytest.raises(ContractViolation):
            PreamblePool(range(55, 64), range(30, 54), range(30), n_cf=10)

    def test_owner_lookup(self):
        pool = PreamblePool(range(54, 64), range(30, 54), range(6, 30), reserved={7: (0, 1, 2), 8: (3, 4, 5)})
        assert pool.owner_of(1) == 7
        assert pool.owner_of(5) == 8
        assert pool.owner_of(10) == MTC_POOL
        assert pool.owner_of(40) == HTC_POOL
        assert pool.owner_of(60) is None
        assert pool.mtc_universe == tuple(range(30))
        assert pool.offered(include_reserved=False) == 48
        assert pool.offered() == 54

    def test_htc_sharing(self):
        pool = PreamblePool(range(54, 64), range(30, 54), range(30), htc_shares_mtc=True)
        assert pool.htc_eligible == tuple(range(54))


class TestSelection:
    def test_classes_use_their_own_part(self):
        pool = PreamblePool(range(54, 64), range(30, 54), range(3, 30), reserved={0: (0, 1, 2)})
        rng = random.Random(1)
        mtc = Device(0, DeviceClass.MTC_LOW, state=DeviceState.READY)
        htc = Device(1, DeviceClass.HTC, state=DeviceState.READY)
        member = Device(2, DeviceClass.MTC_LOW, state=DeviceState.ASSIGNED, node_id=0)
        for _ in range(200):
            assert 3 <= select_preamble(mtc, pool, rng) < 30
            assert 30 <= select_preamble(htc, pool, rng) < 54
            assert select_preamble(member, pool, rng) in (0, 1, 2)

    def test_unscheduled_member_waits(self):
        pool = PreamblePool.default()
        member = Device(0, state=DeviceState.ASSIGNED, node_id=99)
        assert eligible_preambles(member, pool) == ()
        with pytest.raises(PoolExhausted):
            select_preamble(member, pool, random.Random(0))

    def test_empty_mtc_part(self):
        pool = PreamblePool.default(mtc=0)
        with pytest.raises(PoolExhausted):
            select_preamble(Device(0), pool, random.Random(0))

    def test_uniform_over_subset(self):
        pool = PreamblePool.default(mtc=6)
        rng = random.Random(7)
        d = Device(0)
        counts = Counter(select_preamble(d, pool, rng) for _ in range(60_000))
        assert set(counts) == set(range(6))
        # each cell ~ Binomial(60000, 1/6): sd ~ 91
        assert all(abs(c - 10_000) < 500 for c in counts.values())


class TestResolveSlot:
    def test_mixed_slot(self):
        out = resolve_slot([(1, 3), (2, 5), (3, 5)], SLOT)
        assert out.entry(3) == Success(1)
        assert out.entry(5).devices == frozenset({2, 3})
        assert out.entry(7) is IDLE
        assert len(out.idle) == 62

    def test_all_on_one_preamble(self):
        out = resolve_slot([(i, 0) for i in range(5)], SLOT)
        assert out.collisions == [(0, Collision(frozenset(range(5))))]
        assert out.successes == []

    def test_empty_slot(self):
        out = resolve_slot([], SLOT)
        assert out.per_preamble == {}
        assert len(out.idle) == 64

    def test_duplicate_device(self):
        with pytest.raises(ContractViolation):
            resolve_slot([(1, 0), (1, 2)], SLOT)

    def test_owner_from_pool(self):
        pool = PreamblePool(range(54, 64), range(30, 54), range(2, 30), reserved={4: (0, 1)})
        out = resolve_slot([(1, 0), (2, 0), (3, 40), (4, 40), (5, 10), (6, 10)], SLOT, pool)
        assert out.entry(0).owner == 4
        assert out.entry(40).owner == HTC_POOL
        assert out.entry(10).owner == MTC_POOL

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(0, 63), max_size=80))
    def test_partition_conserves_devices(self, preambles):
        attempts = list(enumerate(preambles))
        out = resolve_slot(attempts, SLOT)
        succeeded = {e.device_id for _, e in out.successes}
        collided = set().union(*(e.devices for _, e in out.collisions)) if out.collisions else set()
        assert succeeded | collided == set(range(len(preambles)))
        assert not succeeded & collided
        by_preamble = Counter(preambles)
        assert {p for p, _ in out.successes} == {p for p, c in by_preamble.items() if c == 1}
        assert {p for p, _ in out.collisions} == {p for p, c in by_preamble.items() if c > 1}
        assert len(out.idle) + len(out.per_preamble) == 64


class TestDevice:
    def test_terminal_transitions_once(self):
        d = Device(0, state=DeviceState.READY)
        d.mark_succeeded(12.0)
        assert d.is_terminal and d.succeeded_at == 12.0
        with pytest.raises(ContractViolation):
            d.mark_outage()

    def test_class_flags(self):
        assert Device(0, DeviceClass.MTC_HIGH).is_mtc
        assert not Device(0, DeviceClass.HTC).is_mtc
