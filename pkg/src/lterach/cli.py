"""Command-line entry point: ``lterach {run,plot,analytic,presets}``."""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import sys
from dataclasses import replace
from importlib import metadata
from pathlib import Path

from . import analytic
from .config import PRESETS, dump_scenario_file, load_scenario_file, preset
from .core import prach_slots_per_frame
from .engine import run_batch
from .errors import CapacityError, ScenarioError
from .metrics import SCALAR_FIELDS
from .plotting import PLOT_KINDS, PlotError, plot_results

ID_COLUMNS = ("point", "rep", "variant", "scheme", "prach_config_index", "slots_per_frame", "m",
              "retransmission_cap", "seed")
RESULT_COLUMNS = ID_COLUMNS + SCALAR_FIELDS


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def result_row(point, rep, record) -> list:
    sc = point.scenario
    ids = {
        "point": point.index,
        "rep": rep,
        "variant": point.label,
        "scheme": sc.scheme.kind,
        "prach_config_index": sc.prach_config_index,
        "slots_per_frame": prach_slots_per_frame(sc.prach_config_index),
        "m": dict(point.params).get("m"),
        "retransmission_cap": sc.retransmission_cap,
        "seed": sc.seed,
    }
    values = {**ids, **record.row()}
    return [_fmt(values[c]) for c in RESULT_COLUMNS]


def cmd_run(args) -> int:
    try:
        sf = load_scenario_file(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    base = sf.base
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            print("error: --seed must be a 64-bit unsigned integer", file=sys.stderr)
            return 2
        base = replace(base, seed=args.seed)
    if args.reps is not None:
        if args.reps < 1:
            print("error: --reps must be >= 1", file=sys.stderr)
            return 2
        base = replace(base, n_repetitions=args.reps)
    sf = replace(sf, base=base)
    traces = sf.traces or args.traces
    points = sf.grid()
    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)

    results = run_batch(points, workers=workers, keep_traces=traces)

    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "results.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(RESULT_COLUMNS)
            for point, rep, record, _ in results:
                writer.writerow(result_row(point, rep, record))
        trace_files = []
        if traces:
            (out / "traces").mkdir(exist_ok=True)
            for point, rep, _, trace in results:
                name = f"traces/point{point.index:03d}_rep{rep:03d}.jsonl"
                (out / name).write_text(trace.to_jsonl(), encoding="utf-8")
                trace_files.append(name)
        manifest = {
            "artifact_version": _version(),
            "scenario_file": str(args.scenario),
            "name": base.name,
            "seed": base.seed,
            "repetitions": base.n_repetitions,
            "grid_points": len(points),
            "columns": list(RESULT_COLUMNS),
            "trace_files": trace_files,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot write results to {out}: {exc.strerror or exc}", file=sys.stderr)
        return 1

    _print_summary(results)
    print(f"wrote {out / 'results.csv'} ({len(results)} rows)")
    return 0


def _print_summary(results):
    by_point = {}
    for point, _, record, _ in results:
        by_point.setdefault(point.index, (point, []))[1].append(record)
    print(f"{'variant':<18}{'n':>7}{'m':>4}{'outage':>9}{'retx':>9}")
    for point, records in by_point.values():
        k = len(records)
        outage = sum(r.outage_probability for r in records) / k
        retx = [r.avg_retransmissions for r in records if not math.isnan(r.avg_retransmissions)]
        retx_s = f"{sum(retx) / len(retx):9.3f}" if retx else f"{'nan':>9}"
        m = dict(point.params).get("m")
        print(f"{point.label:<18}{records[0].n_devices:>7}{'' if m is None else m:>4}{outage:9.3f}{retx_s}")


def cmd_plot(args) -> int:
    try:
        series = plot_results(args.csv, args.kind, args.out)
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out} ({len(series)} series)")
    return 0


def parse_range(text: str, kind=float) -> list:
    """``"5"`` or ``"start:stop:step"`` (stop inclusive)."""
    parts = text.split(":")
    if len(parts) == 1:
        return [kind(parts[0])]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected VALUE or START:STOP:STEP, got {text!r}")
    start, stop, step = (kind(p) for p in parts)
    if not step > 0 or stop < start:
        raise argparse.ArgumentTypeError(f"range {text!r} needs step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(n)]


def _int_range(text):
    return parse_range(text, int)


def _float_range(text):
    return parse_range(text, float)


ANALYTIC = {
    "collision-prob": (("n", _float_range), ("R", _float_range), ("T", _float_range),
                       analytic.collision_probability, "collision_probability"),
    "opportunities": (("preambles", _float_range), ("slots", _float_range),
                      analytic.ra_opportunities_per_second, "opportunities_per_s"),
    "codewords": (("M", _int_range), ("L", _int_range), analytic.codeword_count, "codewords"),
    "reserved": (("m", _int_range), ("d", _int_range), ("q", _int_range),
                 analytic.worst_case_reserved, "reserved"),
}


def _show(value, digits) -> str:
    if isinstance(value, float):
        if value.is_integer():
            return str(int(value))
        return f"{value:.{digits}f}" if abs(value) < 1 else f"{value:g}"
    return str(value)


def cmd_analytic(args) -> int:
    entry = ANALYTIC[args.formula]
    names, fn, out_name = [a[0] for a in entry[:-2]], entry[-2], entry[-1]
    axes = [getattr(args, n) for n in names]
    print("\t".join(names + [out_name]))
    for combo in itertools.product(*axes):
        try:
            value = fn(*combo)
        except (ValueError, CapacityError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print("\t".join([f"{v:g}" for v in combo] + [_show(value, args.digits)]))
    return 0


def cmd_presets(args) -> int:
    try:
        sf = preset(args.name)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path(args.out_dir) / f"{args.name}.yaml"
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(dump_scenario_file(sf), encoding="utf-8")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lterach", description="LTE contention-based random access simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file sweep")
    r.add_argument("scenario", help="YAML scenario file")
    r.add_argument("--seed", type=int, help="override the file's seed")
    r.add_argument("--reps", type=int, help="override the number of repetitions")
    r.add_argument("--workers", type=int, help="worker processes (default: CPU count)")
    r.add_argument("--out-dir", default="results", help="output directory (default: results)")
    r.add_argument("--traces", action="store_true", help="also write per-run event traces")
    r.set_defaults(func=cmd_run)

    pl = sub.add_parser("plot", help="plot results.csv as SVG")
    pl.add_argument("csv")
    pl.add_argument("--kind", choices=sorted(PLOT_KINDS), default="outage")
    pl.add_argument("--out", required=True, help="output SVG path")
    pl.set_defaults(func=cmd_plot)

    a = sub.add_parser("analytic", help="closed-form formulas; arguments accept START:STOP:STEP")
    a.add_argument("--digits", type=int, default=3, help="decimals for fractional output")
    asub = a.add_subparsers(dest="formula", required=True)
    for name, entry in ANALYTIC.items():
        sp = asub.add_parser(name)
        for arg, conv in entry[:-2]:
            sp.add_argument(arg, type=conv)
    a.set_defaults(func=cmd_analytic)

    ps = sub.add_parser("presets", help="write a ready-to-run scenario file")
    ps.add_argument("name", help=f"one of: {', '.join(PRESETS)}")
    ps.add_argument("--out", help="output path (default: OUT_DIR/NAME.yaml)")
    ps.add_argument("--out-dir", default=".")
    ps.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
