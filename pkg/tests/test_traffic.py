import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from lterach.core import DeviceClass
from lterach.traffic import (
    TrafficModel,
    generate_poisson,
    generate_uniform_burst,
    generate_wavefront,
    wavefront_count,
)


def rng(seed=0):
    return np.random.default_rng(seed)


class TestUniformBurst:
    def test_empty(self):
        assert generate_uniform_burst(0, 10, rng()) == []

    def test_earthquake_sized_burst(self):
        times = generate_uniform_burst(754, 200, rng(3))
        assert len(times) == 754
        assert all(0 <= t < 200 for t in times)
        # sd of the mean is 200/sqrt(12*754) ~ 2.1 ms
        assert abs(np.mean(times) - 100) < 5

    def test_single(self):
        (t,) = generate_uniform_burst(1, 200, rng())
        assert 0 <= t < 200

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 500), st.floats(1e-6, 1e4), st.integers(0, 2**32 - 1))
    def test_sorted_and_inside_window(self, n, window, seed):
        times = generate_uniform_burst(n, window, rng(seed))
        assert times == sorted(times)
        assert all(0 <= t < window for t in times)

    def test_bad_args(self):
        with pytest.raises(ValueError):
            generate_uniform_burst(-1, 10, rng())
        with pytest.raises(ValueError):
            generate_uniform_burst(1, 0, rng())


class TestWavefront:
    def test_count_matches_area_times_density(self):
        assert wavefront_count(60, 2) == 754
        assert len(generate_wavefront(60, 2, 10, rng())) == 754

    def test_activations_within_travel_time(self):
        out = generate_wavefront(60, 2, 10, rng(1))
        times = [t for _, t in out]
        assert times == sorted(times)
        assert min(times) >= 0 and max(times) <= 200

    def test_activation_is_distance_over_speed(self):
        for (x, y), t in generate_wavefront(60, 2, 10, rng(2))[:50]:
            assert t == pytest.approx(math.hypot(x, y) / 10 * 1000)

    def test_degenerate_radius(self):
        ((x, y), t), = generate_wavefront(1.0, 1e-9, 10, rng(), count=1)
        assert 0.0 <= t <= 1e-9 / 10 * 1000

    def test_cdf_is_area_proportional(self):
        radius, speed = 2.0, 10.0
        t_max = radius / speed * 1000
        times = np.array([t for _, t in generate_wavefront(1.0, radius, speed, rng(11), count=100_000)])
        d, _ = stats.kstest(times, lambda t: np.clip(t / t_max, 0, 1) ** 2)
        assert d < 0.02
        # independent oracle: radial distance sampled directly as R*sqrt(U)
        direct = radius * np.sqrt(rng(12).uniform(size=100_000)) / speed * 1000
        assert stats.ks_2samp(times, direct).statistic < 0.02

    def test_bad_args(self):
        with pytest.raises(ValueError):
            generate_wavefront(0, 2, 10, rng())


class TestPoisson:
    def test_count_near_rate(self):
        assert 900 <= len(generate_poisson(1000, 1000, rng(5))) <= 1100

    def test_zero_horizon(self):
        assert generate_poisson(1000, 0, rng()) == []

    def test_mean_gap(self):
        times = generate_poisson(10800, 1000, rng(6))
        gaps = np.diff(times)
        # sd of the mean gap ~ 0.0926/sqrt(10800) ~ 0.0009
        assert np.mean(gaps) == pytest.approx(1000 / 10800, abs=0.004)

    def test_count_distribution(self):
        counts = [len(generate_poisson(200, 100, rng(s))) for s in range(400)]
        # Poisson(20): mean and variance both 20
        assert np.mean(counts) == pytest.approx(20, abs=0.8)
        assert np.var(counts, ddof=1) == pytest.approx(20, rel=0.25)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(1, 5000), st.floats(0, 500), st.integers(0, 2**32 - 1))
    def test_inside_horizon(self, rate, horizon, seed):
        times = generate_poisson(rate, horizon, rng(seed))
        assert times == sorted(times)
        assert all(0 <= t < horizon for t in times)


class TestTrafficModel:
    def test_validation(self):
        with pytest.raises(ValueError, match="unknown traffic kind"):
            TrafficModel("bursty")
        with pytest.raises(ValueError):
            TrafficModel(n_devices=-1)
        with pytest.raises(ValueError):
            TrafficModel(htc_fraction=1.5)

    def test_htc_fraction(self):
        rows = TrafficModel(n_devices=100, htc_fraction=0.25).generate(rng(1))
        classes = [c for _, _, c in rows]
        assert classes.count(DeviceClass.HTC) == 25
        assert classes.count(DeviceClass.MTC_LOW) == 75

    def test_bounds(self):
        assert TrafficModel("wavefront").last_activation_bound_ms == 200
        assert TrafficModel("wavefront").expected_devices == 754
        assert TrafficModel("poisson", horizon_ms=50).last_activation_bound_ms == 50
        assert TrafficModel("poisson").expected_devices is None

    def test_same_seed_same_draws(self):
        model = TrafficModel("wavefront")
        assert model.generate(rng(9)) == model.generate(rng(9))
