"""Arrival-time generators for device activations.

All generators take a ``numpy.random.Generator`` and return activation
times in milliseconds, sorted ascending.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DeviceClass

UNIFORM_BURST = "uniform_burst"
WAVEFRONT = "wavefront"
POISSON = "poisson"
TRAFFIC_KINDS = (UNIFORM_BURST, WAVEFRONT, POISSON)


def generate_uniform_burst(n: int, window_ms: float, rng: np.random.Generator) -> list[float]:
    if n < 0:
        raise ValueError(f"device count must be >= 0, got {n}")
    if window_ms <= 0:
        raise ValueError(f"window must be > 0 ms, got {window_ms}")
    times = rng.uniform(0.0, window_ms, size=n)
    times.sort()
    # uniform() can round up to the upper bound for tiny windows
    return [t if t < window_ms else math.nextafter(window_ms, 0.0) for t in times.tolist()]


def wavefront_count(density: float, radius: float) -> int:
    return int(round(math.pi * radius * radius * density))


def generate_wavefront(density: float, radius: float, speed: float, rng: np.random.Generator,
                       count: Optional[int] = None) -> list[tuple[tuple[float, float], float]]:
    """Devices uniform over a disk, activated when a wave from the centre arrives.

    Returns ``(position_km, activation_ms)`` pairs sorted by activation.
    ``count`` overrides the area-times-density device count.
    """
    for name, value in (("density", density), ("radius", radius), ("speed", speed)):
        if not value > 0:
            raise ValueError(f"{name} must be > 0, got {value}")
    n = wavefront_count(density, radius) if count is None else int(count)
    if n < 0:
        raise ValueError(f"device count must be >= 0, got {n}")

    # rejection from the bounding square keeps positions exactly uniform on the disk
    accepted = np.empty((0, 2))
    while len(accepted) < n:
        need = n - len(accepted)
        pts = rng.uniform(-radius, radius, size=(int(need * 1.3) + 16, 2))
        inside = pts[(pts ** 2).sum(axis=1) <= radius * radius]
        accepted = np.vstack([accepted, inside[:need]])

    dist = np.hypot(accepted[:, 0], accepted[:, 1])
    times = np.minimum(dist / speed * 1000.0, radius / speed * 1000.0)
    order = np.argsort(times, kind="stable")
    return [((float(accepted[i, 0]), float(accepted[i, 1])), float(times[i])) for i in order]


def generate_poisson(rate_per_s: float, horizon_ms: float, rng: np.random.Generator) -> list[float]:
    """Homogeneous Poisson arrivals on ``[0, horizon_ms)`` from exponential gaps."""
    if not rate_per_s > 0:
        raise ValueError(f"rate must be > 0, got {rate_per_s}")
    if horizon_ms < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon_ms}")
    if horizon_ms == 0:
        return []
    mean_gap = 1000.0 / rate_per_s
    chunk = max(16, int(rate_per_s * horizon_ms / 1000.0 * 1.1) + 16)
    out = []
    t = 0.0
    while True:
        gaps = rng.exponential(mean_gap, size=chunk)
        times = t + np.cumsum(gaps)
        keep = times[times < horizon_ms]
        out.extend(keep.tolist())
        if len(keep) < chunk:
            return out
        t = float(times[-1])


@dataclass(frozen=True)
class TrafficModel:
    """Which generator to use and its parameters.

    ``htc_fraction`` of the devices (chosen at random) are labelled HTC,
    the rest get ``device_class``.
    """

    kind: str = UNIFORM_BURST
    n_devices: int = 0
    window_ms: float = 10.0
    density_per_km2: float = 60.0
    cell_radius_km: float = 2.0
    wave_speed_km_s: float = 10.0
    rate_per_s: float = 1000.0
    horizon_ms: float = 1000.0
    device_class: DeviceClass = DeviceClass.MTC_LOW
    htc_fraction: float = 0.0

    def __post_init__(self):
        if self.kind not in TRAFFIC_KINDS:
            raise ValueError(f"unknown traffic kind {self.kind!r}; expected one of {', '.join(TRAFFIC_KINDS)}")
        if self.n_devices < 0:
            raise ValueError("n_devices must be >= 0")
        if not self.window_ms > 0:
            raise ValueError("window_ms must be > 0")
        for name in ("density_per_km2", "cell_radius_km", "wave_speed_km_s", "rate_per_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.horizon_ms < 0:
            raise ValueError("horizon_ms must be >= 0")
        if not 0.0 <= self.htc_fraction <= 1.0:
            raise ValueError("htc_fraction must lie in [0, 1]")

    @property
    def last_activation_bound_ms(self) -> float:
        if self.kind == UNIFORM_BURST:
            return self.window_ms
        if self.kind == WAVEFRONT:
            return self.cell_radius_km / self.wave_speed_km_s * 1000.0
        return self.horizon_ms

    @property
    def expected_devices(self) -> Optional[int]:
        if self.kind == UNIFORM_BURST:
            return self.n_devices
        if self.kind == WAVEFRONT:
            return wavefront_count(self.density_per_km2, self.cell_radius_km)
        return None

    def generate(self, rng: np.random.Generator) -> list[tuple[float, Optional[tuple[float, float]], DeviceClass]]:
        """Activation time, position and class for every device, by activation time."""
        if self.kind == UNIFORM_BURST:
            rows = [(t, None) for t in generate_uniform_burst(self.n_devices, self.window_ms, rng)]
        elif self.kind == WAVEFRONT:
            rows = [(t, pos) for pos, t in generate_wavefront(
                self.density_per_km2, self.cell_radius_km, self.wave_speed_km_s, rng)]
        else:
            rows = [(t, None) for t in generate_poisson(self.rate_per_s, self.horizon_ms, rng)]

        classes = [self.device_class] * len(rows)
        if self.htc_fraction > 0 and rows:
            n_htc = int(round(self.htc_fraction * len(rows)))
            for i in rng.choice(len(rows), size=n_htc, replace=False).tolist():
                classes[i] = DeviceClass.HTC
        return [(t, pos, cls) for (t, pos), cls in zip(rows, classes)]
