import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lterach.core import PreamblePool, RaSlotAddress, resolve_slot
from lterach.engine import EventTrace, Scenario, TraceEvent, run
from lterach.errors import ContractViolation
from lterach.handshake import (
    BASELINE,
    CRB,
    HandshakeEvent as E,
    HandshakeState as S,
    RntiAllocator,
    advance_handshake,
    build_rars,
    check_identifier_uniqueness,
    replay_trace,
)
from lterach.schemes import AcbConfig, AlohaConfig, BackoffConfig, CrbConfig, DynamicConfig, SeparationConfig
from lterach.traffic import TrafficModel

HAPPY = (E.SEND_PREAMBLE, E.RECEIVE_RAR, E.SEND_RRC, E.CONTENTION_RESOLVED)


def walk(events, mode, state=S.IDLE):
    path = [state]
    for e in events:
        state = advance_handshake(state, e, mode)
        path.append(state)
    return path


class TestTransitions:
    @pytest.mark.parametrize("mode", [BASELINE, CRB])
    def test_singleton_happy_path(self, mode):
        assert walk(HAPPY, mode)[1:] == [S.SENT_PREAMBLE, S.GOT_RAR, S.SENT_RRC, S.RESOLVED]

    def test_baseline_collision_found_at_step_four(self):
        rar = build_rars(resolve_slot([(1, 7), (2, 7)], RaSlotAddress(0, 0)), BASELINE, RntiAllocator())
        assert len(rar) == 1 and rar[7].grants_step3
        events = (E.SEND_PREAMBLE, E.RECEIVE_RAR, E.SEND_RRC, E.CONTENTION_LOST)
        assert walk(events, BASELINE)[-1] is S.COLLIDED_AT_STEP4

    def test_crb_collision_stops_at_step_one(self):
        rars = build_rars(resolve_slot([(1, 7), (2, 7)], RaSlotAddress(0, 0), PreamblePool.default()),
                          CRB, RntiAllocator(), tree_nodes={7: 3})
        assert rars[7].crb_tree_assignment == 3 and not rars[7].grants_step3
        path = walk((E.SEND_PREAMBLE, E.TREE_ASSIGNMENT), CRB)
        assert S.GOT_RAR not in path and path[-1] is S.IDLE

    def test_step_four_collision_unreachable_in_crb(self):
        with pytest.raises(ContractViolation):
            walk((E.SEND_PREAMBLE, E.RECEIVE_RAR, E.SEND_RRC, E.CONTENTION_LOST), CRB)

    def test_out_of_order(self):
        with pytest.raises(ContractViolation):
            advance_handshake(S.IDLE, E.SEND_RRC)
        with pytest.raises(ContractViolation):
            advance_handshake(S.RESOLVED, E.SEND_PREAMBLE)
        with pytest.raises(ContractViolation):
            advance_handshake(S.SENT_PREAMBLE, E.TREE_ASSIGNMENT, BASELINE)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            advance_handshake(S.IDLE, E.SEND_PREAMBLE, "nr")

    @given(st.lists(st.sampled_from(list(E)), max_size=12), st.sampled_from([BASELINE, CRB]))
    def test_only_forward_along_the_steps(self, events, mode):
        order = [S.IDLE, S.SENT_PREAMBLE, S.GOT_RAR, S.SENT_RRC]
        state = S.IDLE
        for e in events:
            try:
                nxt = advance_handshake(state, e, mode)
            except ContractViolation:
                break
            if state in order[1:] and nxt in order:
                assert order.index(nxt) == order.index(state) + 1 or nxt is S.IDLE
            state = nxt


class TestRars:
    def test_one_rar_per_detected_preamble(self):
        out = resolve_slot([(1, 2), (2, 5), (3, 5), (4, 40), (5, 40)], RaSlotAddress(1, 0), PreamblePool.default())
        base = build_rars(out, BASELINE, RntiAllocator())
        assert sorted(base) == [2, 5, 40]
        assert len({r.temp_c_rnti for r in base.values()}) == 3
        crb = build_rars(out, CRB, RntiAllocator())
        assert sorted(crb) == [2, 5]  # collided HTC preamble gets no response
        assert crb[5].temp_c_rnti is None

    def test_rnti_allocator(self):
        alloc = RntiAllocator(1, 3)
        a, b, c = alloc.allocate(), alloc.allocate(), alloc.allocate()
        with pytest.raises(ContractViolation):
            alloc.allocate()
        alloc.release(b)
        assert alloc.allocate() == b
        with pytest.raises(ContractViolation):
            alloc.release(99)

    def test_uniqueness_check(self):
        check_identifier_uniqueness({1: 10, 2: 11})
        with pytest.raises(ContractViolation):
            check_identifier_uniqueness({1: 10, 2: 10})


class TestTraceReplay:
    @settings(max_examples=20, deadline=None)
    @given(st.sampled_from([AlohaConfig(), AcbConfig(barring_ms=100), BackoffConfig(), DynamicConfig(),
                            SeparationConfig(), CrbConfig(), CrbConfig(fixed_m=2, virtual_frame_len=1)]),
           st.integers(1, 250), st.floats(0, 0.4), st.integers(0, 2**32))
    def test_engine_traces_are_legal(self, cfg, n, htc, seed):
        record, trace = run(Scenario(TrafficModel(n_devices=n, window_ms=20, htc_fraction=htc), cfg,
                                     seed=seed, horizon_ms=10_000))
        report = replay_trace(trace)
        resolved = [d for d, s in report.final_states.items() if s is S.RESOLVED]
        assert len(resolved) == record.success_count
        assert len(set(report.dedicated_rnti.values())) == record.success_count
        if trace.mode == CRB:
            assert S.COLLIDED_AT_STEP4 not in report.final_states.values()

    def test_attempt_before_activation_rejected(self):
        trace = EventTrace([TraceEvent(0, "Attempt", 1, (0, 0, 3))])
        with pytest.raises(ContractViolation, match="before activation"):
            replay_trace(trace)

    def test_event_after_terminal_rejected(self):
        trace = EventTrace([
            TraceEvent(0, "Activation", 1), TraceEvent(0, "Attempt", 1, (0, 0, 3)),
            TraceEvent(0, "Success", 1, (3,)), TraceEvent(5, "Attempt", 1, (0, 5, 3)),
        ])
        with pytest.raises(ContractViolation, match="after terminal"):
            replay_trace(trace)

    def test_time_reversal_rejected(self):
        trace = EventTrace([TraceEvent(5, "Activation", 1), TraceEvent(4, "Activation", 2)])
        with pytest.raises(ContractViolation):
            replay_trace(trace)
