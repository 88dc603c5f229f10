"""Line charts of sweep results as reproducible SVG."""
from __future__ import annotations

import csv
import math
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

PLOT_KINDS = {
    "retransmissions": ("avg_retransmissions", "Average number of retransmissions"),
    "outage": ("outage_probability", "Average outage probability"),
}
X_COLUMN = "n_devices"
SERIES_COLUMN = "variant"


class PlotError(ValueError):
    pass


def load_series(csv_path, metric: str) -> dict:
    """``{variant: [(x, mean y), ...]}`` averaged over repetitions, x ascending."""
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in (X_COLUMN, SERIES_COLUMN, metric) if c not in header]
        if missing:
            raise PlotError(f"CSV schema mismatch: missing column(s) {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise PlotError("no data rows")
    acc: dict = defaultdict(lambda: defaultdict(list))
    for row in rows:
        try:
            x = int(row[X_COLUMN])
            y = float(row[metric])
        except (TypeError, ValueError):
            raise PlotError(f"non-numeric {X_COLUMN}/{metric} value in row {row}") from None
        if not math.isnan(y):
            acc[row[SERIES_COLUMN]][x].append(y)
    return {
        label: [(x, math.fsum(ys) / len(ys)) for x, ys in sorted(points.items())]
        for label, points in acc.items()
    }


def plot_results(csv_path, kind: str, out_path) -> dict:
    if kind not in PLOT_KINDS:
        raise PlotError(f"unknown plot kind {kind!r}; expected one of {', '.join(PLOT_KINDS)}")
    metric, ylabel = PLOT_KINDS[kind]
    series = load_series(csv_path, metric)
    with plt.rc_context({"svg.hashsalt": "lterach", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.4))
        markers = "osd^vx+*"
        for i, (label, pts) in enumerate(sorted(series.items())):
            xs, ys = zip(*pts)
            ax.plot(xs, ys, marker=markers[i % len(markers)], label=label)
        ax.set_xlabel("Number of simultaneous RA attempts")
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return series
