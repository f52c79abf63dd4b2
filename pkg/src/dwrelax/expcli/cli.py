"""``dwrelax`` command line.

Exit codes: 0 success, 1 partial failure (sweep cells or a failed
validation), 2 configuration or usage error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import random
import sys
from pathlib import Path

import numpy as np

from ..liouville import NumericalError
from ..propcache import default_cache_dir
from .config import ConfigError, load_config, load_sweep
from .plots import FIGURES, PlotError, emit_plots
from .runner import run, steady, sweep, validate, write_record

log = logging.getLogger("dwrelax")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


class RngUsedError(RuntimeError):
    pass


@contextlib.contextmanager
def no_rng():
    """Fail if any global or freshly created random generator is touched."""
    np_state = np.random.get_state()[1].copy()
    py_state = random.getstate()
    saved = np.random.default_rng

    def forbidden(*args, **kwargs):
        raise RngUsedError("random generator requested under --seedless")

    np.random.default_rng = forbidden
    try:
        yield
    finally:
        np.random.default_rng = saved
    if not np.array_equal(np.random.get_state()[1], np_state) or random.getstate() != py_state:
        raise RngUsedError("global random state changed under --seedless")


def _global_flags(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--jobs", type=int, default=argparse.SUPPRESS if suppress else os.cpu_count() or 1,
                   help="worker processes for sweeps (default: available CPUs)")
    p.add_argument("--cache-dir", default=d, help="propagator cache directory (default: $DWRELAX_CACHE_DIR)")
    p.add_argument("--output-dir", default=d, help="override the configured output directory")
    p.add_argument("--seedless", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="assert that no random numbers are drawn")
    p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dwrelax", description="Dissipative double-well relaxation experiments.")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="evolve one configuration")
    p.add_argument("config")
    p = sub.add_parser("sweep", parents=[common], help="run a parameter sweep")
    p.add_argument("spec")
    p.add_argument("--override-cap", action="store_true", help="allow sweeps above the run cap")
    p = sub.add_parser("plot", parents=[common], help="emit figure data, script and SVG")
    p.add_argument("figure", choices=FIGURES)
    p.add_argument("records", nargs="*")
    p = sub.add_parser("steady", parents=[common], help="steady state only")
    p.add_argument("config")
    p = sub.add_parser("validate", parents=[common], help="compare against the finite-time transition operator")
    p.add_argument("config")
    p.add_argument("--substeps", type=int, default=1)
    p.add_argument("--tolerance", type=float, default=0.02)
    return parser


def _summary_line(rec):
    f = rec.fit
    parts = [rec.name, f"hash={rec.config_hash[:10]}"]
    if f is not None:
        parts.append(f"alpha={f.alpha:.4f}" + ("" if f.accepted else f" (no regime: {f.reason})"))
        if f.window:
            parts.append(f"window=[{f.window[0]:.4g}, {f.window[1]:.4g}]")
    if rec.steady_kappa_over_N2 is not None:
        parts.append(f"steady kappa/N^2={rec.steady_kappa_over_N2:.10g}")
    d = rec.diagnostics
    if "max_eps" in d:
        parts.append(f"max_eps={d['max_eps']:.3g} max_trace_dev={d['max_trace_dev']:.3g}")
    return "  ".join(parts)


def _dispatch(args) -> int:
    cache_dir = args.cache_dir if args.cache_dir is not None else default_cache_dir()
    if args.command == "run":
        cfg = load_config(args.config)
        rec = run(cfg, cache_dir=cache_dir, output_dir=args.output_dir)
        print(_summary_line(rec))
        for p in rec.paths.values():
            print(p)
        return EXIT_OK
    if args.command == "steady":
        cfg = load_config(args.config)
        rec = steady(cfg)
        write_record(rec, args.output_dir or cfg.output_dir, ("json",))
        print(_summary_line(rec))
        return EXIT_OK
    if args.command == "validate":
        cfg = load_config(args.config)
        try:
            report = validate(cfg, substeps=args.substeps, tolerance=args.tolerance)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        out = Path(args.output_dir or cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"validate-{report['config_hash'][:10]}.json"
        path.write_text(json.dumps(report, indent=2) + "\n")
        print(f"max relative kappa deviation {report['max_rel_deviation']:.3g} "
              f"(tolerance {report['tolerance']:g}) over {report['points']} points: "
              f"{'PASS' if report['passed'] else 'FAIL'}")
        return EXIT_OK if report["passed"] else EXIT_PARTIAL
    if args.command == "sweep":
        spec = load_sweep(args.spec)
        res = sweep(spec, jobs=args.jobs, cache_dir=cache_dir, output_dir=args.output_dir,
                    override_cap=args.override_cap)
        for rec in res.records:
            print(_summary_line(rec))
        for name, err in res.failures:
            print(f"FAILED {name}: {err}", file=sys.stderr)
        for mode, c in res.collapse.items():
            print(f"collapse[{mode}] = {c['metric']}" + (f" ({c['note']})" if c["note"] else ""))
        print(res.summary_path)
        return EXIT_PARTIAL if res.any_failed else EXIT_OK
    if args.command == "plot":
        if not args.records:
            raise PlotError("no records given")
        paths = emit_plots(args.records, args.figure, args.output_dir or ".")
        for p in paths.values():
            print(p)
        return EXIT_OK
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    guard = no_rng() if args.seedless else contextlib.nullcontext()
    try:
        with guard:
            return _dispatch(args)
    except (ConfigError, PlotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, RngUsedError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostic", None)
        if diag:
            print(json.dumps(diag, default=repr), file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
