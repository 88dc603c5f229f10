import math
import statistics

import pytest

from lterach.analytic import expected_singletons
from lterach.engine import EventTrace, Scenario, TraceEvent, run
from lterach.errors import PartialTraceError
from lterach.metrics import SCALAR_FIELDS, aggregate, summarize
from lterach.schemes import AlohaConfig
from lterach.traffic import TrafficModel


def ev(t, kind, dev=None, *payload):
    return TraceEvent(t, kind, dev, tuple(payload))


def handmade_trace():
    """Three devices: 0 wins at once, 1 and 2 collide, then 1 wins and 2 gives up."""
    return EventTrace([
        ev(0.5, "Activation", 0), ev(0.7, "Activation", 1), ev(0.9, "Activation", 2),
        ev(5, "RaSlot", None, 0, 5, 54),
        ev(5, "Attempt", 0, 0, 5, 3), ev(5, "Attempt", 1, 0, 5, 7), ev(5, "Attempt", 2, 0, 5, 7),
        ev(5, "Success", 0, 3), ev(5, "Collision", 1, 7, "mtc"), ev(5, "Collision", 2, 7, "mtc"),
        ev(10, "Sib2Broadcast", None, 2, None, 30, 0, 0, 1.0),
        ev(15, "RaSlot", None, 1, 5, 54),
        ev(15, "Attempt", 1, 1, 5, 9), ev(15, "Attempt", 2, 1, 5, 9),
        ev(15, "Collision", 1, 9, "mtc"), ev(15, "Collision", 2, 9, "mtc"), ev(15, "Outage", 2, False),
        ev(20, "Sib2Broadcast", None, 2, None, 30, 0, 0, 1.0),
        ev(25, "RaSlot", None, 2, 5, 54),
        ev(25, "Attempt", 1, 2, 5, 4), ev(25, "Success", 1, 4),
    ])


class TestSummarize:
    def test_by_hand(self):
        r = summarize(handmade_trace())
        assert (r.n_devices, r.success_count, r.outage_count) == (3, 2, 1)
        assert r.simultaneous_attempts == 3
        assert r.avg_retransmissions == pytest.approx((0 + 2) / 2)
        assert r.avg_retransmissions_all == pytest.approx((0 + 2 + 1) / 3)
        assert r.outage_probability == pytest.approx(1 / 3)
        assert r.mean_access_delay_ms == pytest.approx((0 + 20) / 2)
        assert r.success_rate == pytest.approx(2 / (3 * 54))
        assert r.first_attempt_collision_fraction == pytest.approx(2 / 3)
        assert [(k.collided, k.successes) for k in r.kappa_series] == [(1, 1), (1, 0), (0, 1)]
        assert [k.kappa for k in r.kappa_series] == [1.0, 1.0, 0.0]

    def test_partial_trace(self):
        events = [e for e in handmade_trace() if not (e.kind == "Success" and e.device == 1)]
        with pytest.raises(PartialTraceError):
            summarize(EventTrace(events))

    def test_single_device(self):
        r, _ = run(Scenario(TrafficModel(n_devices=1)))
        assert (r.avg_retransmissions, r.outage_probability, r.mean_access_delay_ms) == (0, 0, 0)

    def test_forced_collision_without_budget(self):
        # one preamble and no backoff: both retry in the same slot and collide again
        sc = Scenario(TrafficModel(n_devices=2, window_ms=1), AlohaConfig(response_window_ms=0, backoff_ms=0),
                      mtc_preambles=1, retransmission_cap=1)
        r, _ = run(sc)
        assert r.outage_probability == 1.0
        assert math.isnan(r.avg_retransmissions)
        assert r.avg_retransmissions_all == 1.0
        assert r.total_attempts == 4

    def test_pure_function_of_trace(self):
        sc = Scenario(TrafficModel(n_devices=300, htc_fraction=0.1), seed=4)
        record, trace = run(sc)
        assert summarize(EventTrace.from_jsonl(trace.to_jsonl()), sc) == record

    def test_fractions_sum_to_one(self):
        r, _ = run(Scenario(TrafficModel(n_devices=800), seed=2))
        assert r.outage_probability + r.success_count / r.n_devices == pytest.approx(1.0)
        assert r.avg_retransmissions >= 0 and r.mean_access_delay_ms >= 0

    def test_row_has_fixed_scalar_fields(self):
        r = summarize(handmade_trace())
        assert tuple(r.row()) == SCALAR_FIELDS
        assert r.row()["peak_kappa"] == 1.0


class TestSuccessRate:
    def test_near_capacity_aloha(self):
        # fresh Poisson load of about one attempt per preamble per slot, no retries
        sc = Scenario(TrafficModel("poisson", rate_per_s=10_800, horizon_ms=1000), AlohaConfig(),
                      mtc_preambles=54, retransmission_cap=0, horizon_ms=1500, seed=9)
        record, trace = run(sc)
        per_slot_attempts = {}
        for e in trace:
            if e.kind == "RaSlot":
                per_slot_attempts[e.time_ms] = 0
            elif e.kind == "Attempt":
                per_slot_attempts[e.time_ms] += 1
        oracle = sum(expected_singletons(n, 54) for n in per_slot_attempts.values())
        assert record.success_count == pytest.approx(oracle, rel=0.03)
        assert 0.33 <= record.success_rate <= 0.40


class TestAggregate:
    def test_mean_and_sample_std(self):
        recs = [run(Scenario(TrafficModel(n_devices=400), seed=1), 0, r)[0] for r in range(4)]
        agg = aggregate(recs, "outage_probability")
        values = [r.outage_probability for r in recs]
        assert agg.mean == pytest.approx(statistics.mean(values))
        assert agg.std == pytest.approx(statistics.stdev(values))
        assert agg.n == 4 and agg.stderr == pytest.approx(agg.std / 2)

    def test_nan_skipped(self):
        sc = Scenario(TrafficModel(n_devices=2, window_ms=1), AlohaConfig(response_window_ms=0, backoff_ms=0),
                      mtc_preambles=1, retransmission_cap=1)
        recs = [run(sc)[0], run(Scenario(TrafficModel(n_devices=1)))[0]]
        agg = aggregate(recs, "avg_retransmissions")
        assert agg.n == 1 and agg.mean == 0
