"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 simulation fault.
``FLEXSIM_LOG`` sets the log level (e.g. DEBUG, INFO; default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from . import __version__
from .config import ExperimentSpec, apply_point, load_config, load_grid_config, load_sweep, parse_config
from .errors import ConfigError, FlexSimError, SimulationFault
from .formats import FORMAT_PREFERENCE, SparsityFormat, footprint_bits, nnz_for_sr, select_format
from .report import layer_rows, report_columns, schema_line, write_csv, write_json
from .sim import energy_report, run_layer_sequence
from .tensor import PrecisionMode, load_tile

log = logging.getLogger("flexsim")

EXIT_OK, EXIT_CONFIG, EXIT_FAULT = 0, 2, 3


def _setup_logging() -> None:
    level = os.environ.get("FLEXSIM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


# ----------------------------------------------------------------------------
# simulate


def simulate_to_dir(cfg, out: Path, plots: bool = True) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    seq = run_layer_sequence(cfg.layers, cfg.arch, seed=cfg.seed)
    rows = layer_rows(seq)
    write_csv(out / "report.csv", "report", report_columns(rows), rows)
    totals = seq.totals.row()
    summary = {
        "name": cfg.name,
        "seed": cfg.seed,
        "layers": len(rows),
        "totals": totals,
        "energy": energy_report(seq.totals, cfg.energy),
        "arch": {k: str(v) if isinstance(v, PrecisionMode) else v
                 for k, v in vars(cfg.arch).items() if k != "energy_weights"},
        "energy_weights": cfg.energy,
        "wall_time_s_at_800MHz": seq.totals.wall_time_s,
    }
    write_json(out / "summary.json", summary)
    if plots:
        from .plots import plot_cycle_breakdown
        plot_cycle_breakdown(rows, out / "cycles.png")
    return totals


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    log.info("simulate %s: %d layers, seed %d", cfg.name, len(cfg.layers), cfg.seed)
    totals = simulate_to_dir(cfg, Path(args.out), plots=not args.no_plots)
    print(f"{cfg.name}: {len(cfg.layers)} layers, {totals['total_cycles']} cycles, "
          f"utilization {totals['mac_utilization']:.2f}% -> {args.out}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# sweep


def _run_point(job):
    base, base_dir, point, seed, out = job
    try:
        raw = apply_point(base, point)
        raw.setdefault("seed", seed)
        cfg = parse_config(raw, Path(base_dir))
        totals = simulate_to_dir(cfg, Path(out), plots=False)
        return {"status": "ok", "error": "", **{k: totals[k] for k in (
            "total_cycles", "compute_cycles", "mac_utilization")}}
    except ConfigError as exc:
        return {"status": "config_error", "error": str(exc)}
    except FlexSimError as exc:
        return {"status": "fault", "error": str(exc)}


def format_rows(spec: ExperimentSpec) -> list:
    rows = []
    for point in spec.points():
        mode = PrecisionMode.parse(point["mode"])
        side = spec.tile[str(mode)]
        nnz = nnz_for_sr(side, side, point["sr"])
        fmt = select_format(point["sr"], mode, side, side)
        row = {"sr": point["sr"], "mode": str(mode), "rows": side, "cols": side, "nnz": nnz,
               "selected": fmt.label}
        dense = footprint_bits(side, side, nnz, SparsityFormat.NONE, mode)
        for f in FORMAT_PREFERENCE:
            bits = footprint_bits(side, side, nnz, f, mode)
            key = f.label.lower()
            row[f"{key}_bits"] = bits
            row[f"{key}_norm"] = float(Fraction(bits, dense))
        row["selected_bits"] = row[f"{fmt.label.lower()}_bits"]
        rows.append(row)
    return rows


FORMAT_COLUMNS = ["sr", "mode", "rows", "cols", "nnz", "selected", "selected_bits",
                  "none_bits", "coo_bits", "csr_bits", "bitmap_bits",
                  "none_norm", "coo_norm", "csr_norm", "bitmap_norm"]


def cmd_sweep(args) -> int:
    spec = load_sweep(args.spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"sweep {spec.name}: {spec.size} points", file=sys.stderr)
    plots = not args.no_plots
    if spec.kind == "formats":
        rows = format_rows(spec)
        write_csv(out / "index.csv", "formats-sweep", FORMAT_COLUMNS, rows)
        if plots:
            from .plots import plot_format_crossover
            plot_format_crossover(rows, out / "crossover.png")
        print(f"{len(rows)} rows -> {out / 'index.csv'}")
        return EXIT_OK
    points = spec.points()
    jobs = [(spec.base, str(spec.base_dir), p, spec.seed, str(out / f"point_{i:03d}"))
            for i, p in enumerate(points)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_point, jobs))
    else:
        results = [_run_point(j) for j in jobs]
    rows = []
    for i, (point, res) in enumerate(zip(points, results)):
        rows.append({"point": i, **point, "report": f"point_{i:03d}/report.csv", **res})
    cols = ["point", *spec.axes, "report", "status", "total_cycles", "compute_cycles",
            "mac_utilization", "error"]
    write_csv(out / "index.csv", "sweep-index", cols, rows)
    if plots and len(spec.axes) == 1:
        from .plots import plot_sweep
        plot_sweep(rows, next(iter(spec.axes)), out / "sweep.png")
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} points, {failed} failed -> {out / 'index.csv'}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# formats


def cmd_formats(args) -> int:
    mode = PrecisionMode.parse(args.mode)
    try:
        tile = load_tile(args.matrix)
    except (OSError, ValueError) as exc:
        raise ConfigError("matrix", f"cannot load {args.matrix}: {exc}") from None
    if tile.mode is not mode:
        raise ConfigError("mode", f"matrix file is {tile.mode}, --mode is {mode}")
    from .tensor import measure_tile
    sr = measure_tile(tile).sr_percent
    chosen = select_format(sr, mode, tile.rows, tile.cols)
    dense = footprint_bits(tile.rows, tile.cols, tile.nnz, SparsityFormat.NONE, mode)
    print(schema_line("formats"))
    print(f"# {tile.rows}x{tile.cols} {mode} nnz={tile.nnz} sr={sr:.4f}%")
    print(f"{'format':<8}{'bits':>12}{'normalized':>12}  selected")
    for f in FORMAT_PREFERENCE:
        bits = footprint_bits(tile.rows, tile.cols, tile.nnz, f, mode)
        mark = "*" if f is chosen else ""
        print(f"{f.label:<8}{bits:>12}{bits / dense:>12.4f}  {mark}")
    print(f"selected: {chosen.label}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# encode-bench


def cmd_encode_bench(args) -> int:
    from .nerf import hash_lookup, read_points, write_access_stats_csv
    grid = load_grid_config(args.grid)
    try:
        pts = read_points(args.points)
    except (OSError, ValueError) as exc:
        raise ConfigError("points", str(exc)) from None
    if pts.size == 0:
        raise ConfigError("points", "no points in file")
    try:
        _, stats = hash_lookup(pts, grid)
    except ValueError as exc:
        raise ConfigError("points", str(exc)) from None
    header = [schema_line("encode-stats")]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_access_stats_csv(stats, out / "encode_stats.csv", header)
        if not args.no_plots:
            from .plots import plot_access_stats
            plot_access_stats(stats, out / "encode_stats.png")
        print(f"{len(pts)} points, {grid.levels} levels -> {out / 'encode_stats.csv'}")
    else:
        write_access_stats_csv(stats, "/dev/stdout", header)
    return EXIT_OK


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flexsim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"flexsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one configuration")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="run a parameter grid")
    s.add_argument("--spec", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("formats", help="footprint table for one matrix file")
    s.add_argument("--matrix", required=True)
    s.add_argument("--mode", required=True, choices=["int4", "int8", "int16"])
    s.set_defaults(func=cmd_formats)

    s = sub.add_parser("encode-bench", help="hash-grid access statistics")
    s.add_argument("--points", required=True)
    s.add_argument("--grid", required=True)
    s.add_argument("--out", default=None)
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_encode_bench)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationFault as exc:
        print(f"simulation fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except FlexSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
