"""Command-line front end.

Exit status: 0 on success, 1 for usage or validation errors, 2 when a
run fails.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from typing import Optional, Sequence

from . import experiments
from .experiments import SweepError, TruncatedIntegralError
from .io import FORMATS, ConfigError, RunConfig, emit, fmt, parse_config, parse_config_dict, sweep_echo
from .model import AmbiguousFrameError, DensityMatrix, PerturbativeValidityWarning
from .propagate import IntegratorError, NoSteadyStateError, evolve

log = logging.getLogger("decoherent_fgr")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _formats(text: str) -> tuple:
    fs = tuple(f.strip() for f in text.split(",") if f.strip())
    bad = [f for f in fs if f not in FORMATS]
    if bad or not fs:
        raise argparse.ArgumentTypeError(f"formats must be a comma list from {FORMATS}")
    return fs


def _threads(text: str) -> int:
    n = int(text)
    if n < 0:
        raise argparse.ArgumentTypeError("threads must be >= 0 (0 = auto)")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--out", help="output directory (default: config output.dir or results/)")
    common.add_argument("--format", type=_formats, dest="formats",
                        help="comma list of csv,json,svg")
    common.add_argument("--threads", type=_threads, default=0, help="sweep workers, 0 = auto")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="decoherent-fgr", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("simulate", parents=[common], help="one trajectory")
    s.add_argument("--stride", type=int, default=200, help="record every N-th step")
    sub.add_parser("sweep", parents=[common], help="run the config's sweep")
    sub.add_parser("analytic", parents=[common], help="closed forms at the config point")
    sub.add_parser("sum-rule", parents=[common], help="area under a drive-energy sweep")
    w = sub.add_parser("ws2", parents=[common], help="WS2 strain presets, occupation vs tau")
    w.add_argument("preset", choices=sorted(experiments.WS2_GAPS))
    w.add_argument("--eta", type=float, default=experiments.TLS_ETA)
    w.add_argument("--basis", choices=("adiabatic", "fixed"), default="adiabatic")
    w.add_argument("--initial-frame", choices=("fixed", "adiabatic"), default="fixed")
    w.add_argument("--coupling-scale", type=float, default=1.0)
    w.add_argument("--no-three-level", action="store_true")
    w.add_argument("--points", type=int, default=25, help="tau grid size")
    f = sub.add_parser("fig", parents=[common], help="bundled replication runs")
    f.add_argument("name", choices=experiments.FIGURES)
    f.add_argument("--points", type=int, help="override the grid size")
    return p


def _load(args) -> RunConfig:
    if args.config:
        return parse_config(args.config)
    return parse_config_dict({})


def _emit(args, cfg: Optional[RunConfig], result, echo, stem, formats=("csv", "json")):
    out = args.out or (cfg.output_dir if cfg else "results")
    formats = args.formats or (cfg.formats if cfg else formats)
    for p in emit(result, formats, out, echo=echo, stem=stem):
        print(p)


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    if args.stride < 1:
        raise ConfigError("--stride must be >= 1")
    traj = evolve(cfg.system, cfg.propagation, DensityMatrix.pure(cfg.system.dim, 0), args.stride)
    pops = traj.populations()[-1]
    print("final populations: " + " ".join(fmt(x) for x in pops))
    _emit(args, cfg, traj, cfg.echo, "simulate")
    return EXIT_OK


def _sweep_from(args):
    cfg = _load(args)
    if cfg.sweep is None:
        raise ConfigError("sweep: config has no 'sweep' section")
    return cfg, experiments.run_sweep(cfg.sweep, args.threads)


def _cmd_sweep(args) -> int:
    cfg, result = _sweep_from(args)
    for r in result.rows:
        for m, e in r.errors.items():
            log.warning("%s=%s %s: %s", result.spec.variable, fmt(r.value), m, e)
    _emit(args, cfg, result, cfg.echo, "sweep")
    return EXIT_OK


def _cmd_analytic(args) -> int:
    cfg = _load(args)
    system, prop = cfg.system, cfg.propagation
    rows = []
    for m in experiments.ANALYTIC_METHODS:
        try:
            value, b = experiments.evaluate(m, system, prop)
        except ValueError as exc:
            log.info("%s skipped: %s", m, exc)
            continue
        rows.append((m, value))
        if b is not None and len(b.per_stimulus) > 1:
            rows += [(f"  stimulus_{i + 1}", p) for i, p in enumerate(b.per_stimulus)]
            rows.append(("  interference", b.interference))
    tau = prop.decoherence_time
    print(f"tau_fs = {'inf' if math.isinf(tau) else fmt(tau)}")
    for name, value in rows:
        print(f"{name:24s} {fmt(value)}")
    return EXIT_OK


def _cmd_sum_rule(args) -> int:
    cfg, result = _sweep_from(args)
    _emit(args, cfg, result, cfg.echo, "sum-rule")
    for m in result.columns:
        print(f"{m:24s} {fmt(experiments.sum_rule_integral(result, m))} eV")
    return EXIT_OK


def _cmd_ws2(args) -> int:
    if args.points < 2:
        raise ConfigError("--points must be >= 2")
    result = experiments.ws2_scenario(
        args.preset, experiments.default_tau_grid(args.points), args.basis, args.eta,
        not args.no_three_level, args.coupling_scale, args.initial_frame, args.threads)
    echo = sweep_echo(result, {"preset": args.preset, "coupling_scale": args.coupling_scale})
    _emit(args, None, result, echo, f"ws2-{args.preset}")
    return EXIT_OK


def _cmd_fig(args) -> int:
    if args.points is not None and args.points < 3:
        raise ConfigError("--points must be >= 3")
    result = experiments.figure(args.name, args.threads, args.points)
    echo = sweep_echo(result, {"figure": args.name})
    _emit(args, None, result, echo, f"fig{args.name}", ("csv", "json", "svg"))
    return EXIT_OK


COMMANDS = {
    "simulate": _cmd_simulate, "sweep": _cmd_sweep, "analytic": _cmd_analytic,
    "sum-rule": _cmd_sum_rule, "ws2": _cmd_ws2, "fig": _cmd_fig,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", PerturbativeValidityWarning)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NoSteadyStateError, IntegratorError, AmbiguousFrameError, SweepError,
            TruncatedIntegralError, OSError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
