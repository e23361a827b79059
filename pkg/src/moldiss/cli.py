"""Command line: ``python -m moldiss {run,compare,spectra} --config FILE [--set k=v ...]``.

Exit codes: 0 success, 2 invalid or unreadable configuration (or a spectra
time past t_final), 3 when every positive-P trajectory diverged.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io
from .config import DETERMINISTIC_METHODS, METHODS, RunConfig, ValidationError, load_config
from .ensemble import TotalDivergence, compare_series, run

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="moldiss", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="key = value configuration file")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
        sp.add_argument("--quiet", action="store_true", help="no progress lines on stderr")

    common(sub.add_parser("run", help="run the configured method and write its output bundle"))
    sp = sub.add_parser("compare", help="run several methods on one configuration and compare them")
    common(sp)
    sp.add_argument("--methods", default="positive_p,twa,hfb",
                    help="comma-separated subset of " + ",".join(METHODS))
    sp = sub.add_parser("spectra", help="write densities and momentum spectra at chosen times")
    common(sp)
    sp.add_argument("--times", required=True, help="comma-separated times in seconds")
    return p


def _report(problems) -> None:
    for msg in problems:
        print(f"error: {msg}", file=sys.stderr)


def _run_bundle(cfg, out: Path, progress: bool):
    """Run ``cfg`` and write its bundle; returns (series, diverged)."""
    out.mkdir(parents=True, exist_ok=True)
    io.write_manifest(cfg, out)
    try:
        series, diverged = run(cfg, progress), False
    except TotalDivergence as exc:
        series, diverged = exc.series, True
    io.write_fractions(series, out / "fractions.csv")
    io.write_summary(cfg, series, out / "summary.json")
    for t in cfg.run.snapshot_times:
        io.write_spectra(cfg, series, t, out)
    return series, diverged


def cmd_run(args, cfg) -> int:
    _, diverged = _run_bundle(cfg, Path(cfg.run.output_dir), not args.quiet)
    return EXIT_DIVERGED if diverged else EXIT_OK


def _method_config(cfg, method: str):
    if method == cfg.run.method:
        return cfg
    if method in DETERMINISTIC_METHODS:
        return cfg.replace(method=method, trajectories=1)
    n = cfg.run.trajectories if cfg.run.method not in DETERMINISTIC_METHODS else RunConfig().trajectories
    return cfg.replace(method=method, trajectories=n)


def cmd_compare(args, cfg) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        _report([f"unknown method '{m}'" for m in bad] or ["no methods given"])
        return EXIT_INVALID
    root = Path(cfg.run.output_dir)
    series, any_diverged = {}, False
    for m in methods:
        mc = _method_config(cfg, m)
        s, diverged = _run_bundle(mc, root / m, not args.quiet)
        any_diverged |= diverged
        series[m] = s
    report = compare_series(series)
    io.write_comparison(report, cfg, root)
    return EXIT_DIVERGED if any_diverged else EXIT_OK


def cmd_spectra(args, cfg) -> int:
    try:
        times = [float(t) for t in args.times.split(",") if t.strip()]
    except ValueError:
        _report([f"bad --times value {args.times!r}"])
        return EXIT_INVALID
    late = [t for t in times if t > cfg.grid.t_final + 1e-12 or t < 0]
    if late or not times:
        _report([f"time {t} is outside [0, t_final={cfg.grid.t_final}]" for t in late] or ["no times given"])
        return EXIT_INVALID
    cfg = cfg.replace(snapshot_times=tuple(times))
    return cmd_run(args, cfg)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
    except ValidationError as exc:
        _report(exc.problems)
        return EXIT_INVALID
    handler = {"run": cmd_run, "compare": cmd_compare, "spectra": cmd_spectra}[args.command]
    try:
        return handler(args, cfg)
    except ValidationError as exc:
        _report(exc.problems)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
