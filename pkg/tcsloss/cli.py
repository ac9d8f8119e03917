"""Command line entry point: python app.py <command> or python -m tcsloss <command>."""
from __future__ import annotations

import argparse
import itertools
import logging
import sys

import pandas as pd
from tqdm import tqdm

from tcsloss import __version__, analysis, config, data_engine
from tcsloss.decoder import WeightTemplate
from tcsloss.errmodel import ErrorModelParams
from tcsloss.errors import ConfigError, InfeasibleMatchingError, TcsLossError, ValidationError
from tcsloss.lattice import LATTICE_TYPES, PRIMAL, build_lattice
from tcsloss.montecarlo import RunConfig, TrialState, estimate
from tcsloss.pauli import derive_cell, render_report, report_as_json
from tcsloss.syndrome import MeasurementRecord, SyndromeWindow

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3


def _t_check(value: str):
    if value == "auto":
        return value
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("t-check must be 'auto' or a positive integer") from None
    if n < 1:
        raise argparse.ArgumentTypeError("t-check must be >= 1")
    return n


def _common(parser: argparse.ArgumentParser, out: bool = True):
    parser.add_argument("--config", help="YAML/JSON file of option defaults")
    if out:
        parser.add_argument("--out", help="output file (default: stdout)")
        parser.add_argument("--format", choices=["csv", "json"], default=None)


def _rates(parser: argparse.ArgumentParser, many_loss: bool = False):
    parser.add_argument("--p-comp", type=float, default=None)
    if many_loss:
        parser.add_argument("--p-loss", type=float, nargs="*", default=None)
    else:
        parser.add_argument("--p-loss", type=float, default=None)
    parser.add_argument("--p-lint", type=float, default=None)


def _run_options(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--blocks", type=int, default=None, help="stop after this many blocks")
    parser.add_argument("--failures", type=int, default=None, help="stop after this many failures")
    parser.add_argument("--t-check", type=_t_check, default=None)
    parser.add_argument("--t-delete", type=int, default=None)
    parser.add_argument("--max-rounds", type=int, default=None)
    parser.add_argument("--time-limit", type=float, default=None, help="seconds")
    parser.add_argument("--workers", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tcsloss", description="Topological cluster state qubit-loss simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="estimate P_L at one point")
    p.add_argument("--d", type=int, default=None)
    _rates(p)
    _run_options(p)
    _common(p)

    p = sub.add_parser("sweep", help="estimate P_L over a grid of distances and loss rates")
    p.add_argument("--d", type=int, nargs="+", default=None)
    _rates(p, many_loss=True)
    _run_options(p)
    _common(p)

    p = sub.add_parser("weights", help="weight graph tools")
    wsub = p.add_subparsers(dest="action", required=True)
    w = wsub.add_parser("dump", help="edge list with probabilities and weights")
    w.add_argument("--d", type=int, default=3)
    _rates(w)
    w.add_argument("--lattice-type", choices=LATTICE_TYPES, default=PRIMAL)
    w.add_argument("--rounds", type=int, nargs=2, metavar=("LO", "HI"), default=(0, 3))
    _common(w)

    p = sub.add_parser("lattice", help="lattice tools")
    lsub = p.add_subparsers(dest="action", required=True)
    lt = lsub.add_parser("dump", help="sites, cells, schedule and cuts of one round")
    lt.add_argument("--d", type=int, default=3)
    lt.add_argument("--out")

    p = sub.add_parser("superstabilizers", help="JSON dump of merged regions after a short run")
    p.add_argument("--d", type=int, default=3)
    _rates(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--lattice-type", choices=LATTICE_TYPES, default=PRIMAL)
    p.add_argument("--out")

    p = sub.add_parser("derive-cell", help="cell stabilizer tables by C_Z conjugation")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--out")

    p = sub.add_parser("overhead", help="volume and qubit overheads from curve data")
    p.add_argument("--curves", required=True)
    p.add_argument("--target", type=float, default=None)
    p.add_argument("--baseline-d", type=int, default=None)
    p.add_argument("--convention", choices=analysis.CONVENTIONS, default=None)
    p.add_argument("--p-comp", type=float, default=None)
    p.add_argument("--p-lint", type=float, default=None)
    _common(p)

    p = sub.add_parser("extrapolate", help="P_L at a larger distance from the two highest ones")
    p.add_argument("--a", type=float, required=True, help="P_L at the second highest distance")
    p.add_argument("--b", type=float, required=True, help="P_L at the highest distance")
    p.add_argument("--db", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    return parser


def _configure_logging(args):
    if args.quiet:
        level = logging.ERROR
    elif args.verbose >= 2:
        level = logging.DEBUG
    elif args.verbose == 1:
        level = logging.INFO
    else:
        level = getattr(logging, config.LOG_LEVEL.upper(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def _values(args, command: str) -> dict:
    file_values = config.load_config_file(args.config) if getattr(args, "config", None) else None
    cli = {k: v for k, v in vars(args).items()}
    return config.resolve(command, file_values, cli)


def _run_config(cfg: dict, d: int, p_loss: float) -> RunConfig:
    t_check = None if cfg["t_check"] in (None, "auto") else int(cfg["t_check"])
    blocks, failures = cfg["blocks"], cfg["failures"]
    if blocks is None and failures is None:
        raise ConfigError("give --blocks and/or --failures")
    return RunConfig(
        d=int(d),
        params=ErrorModelParams(cfg["p_comp"], p_loss, cfg["p_lint"]),
        t_check=t_check, t_delete=cfg["t_delete"], max_blocks=blocks, target_failures=failures,
        max_rounds=int(cfg["max_rounds"]), time_limit=cfg["time_limit"], seed=int(cfg["seed"]),
        workers=int(cfg["workers"]),
    )


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"  > wrote {out}", file=sys.stderr)


# ------------------------------------------------------------------ commands

def cmd_simulate(args) -> int:
    cfg = _values(args, "simulate")
    run = _run_config(cfg, cfg["d"], cfg["p_loss"])
    print(f"[simulate] d={run.d} p_comp={run.params.p_comp:g} p_loss={run.params.p_loss:g} "
          f"p_lint={run.params.p_lint:g} seed={run.seed}", file=sys.stderr)
    result = estimate(run)
    print(f"  > failures: {result.failures} / {result.blocks} blocks ({result.rounds} rounds)", file=sys.stderr)
    print(f"  > P_L per round: {result.p_round:.3e} [{result.ci_low:.3e}, {result.ci_high:.3e}]", file=sys.stderr)
    print(f"  > {result.rounds_per_second:.0f} rounds/s, status {result.status}", file=sys.stderr)
    meta = data_engine.metadata("simulate", cfg)
    _emit(data_engine.render_table(data_engine.curve_frame([result.row()]), meta, cfg["format"]), args.out)
    return EXIT_INFEASIBLE if result.status != "ok" else EXIT_OK


def sweep(cfg: dict, quiet: bool = False) -> tuple[pd.DataFrame, bool]:
    """One estimate per (d, p_loss); returns the curve frame and whether every point finished."""
    ds = cfg["d"] if isinstance(cfg["d"], list) else [cfg["d"]]
    losses = cfg["p_loss"] if isinstance(cfg["p_loss"], list) else [cfg["p_loss"]]
    grid = list(itertools.product(ds, losses))
    rows, ok = [], True
    for d, p_loss in tqdm(grid, desc="sweep", disable=quiet or not grid):
        result = estimate(_run_config(cfg, d, float(p_loss)))
        rows.append(result.row())
        ok &= result.status == "ok"
    return data_engine.curve_frame(rows), ok


def cmd_sweep(args) -> int:
    cfg = _values(args, "sweep")
    losses = cfg["p_loss"] if isinstance(cfg["p_loss"], list) else [cfg["p_loss"]]
    print(f"[sweep] d={cfg['d']} p_loss={losses} p_comp={cfg['p_comp']:g} p_lint={cfg['p_lint']:g}", file=sys.stderr)
    frame, ok = sweep(cfg, quiet=args.quiet)
    meta = data_engine.metadata("sweep", cfg)
    meta["summary"] = analysis.sweep_summary(frame)
    if meta["summary"]["threshold_bracket"]:
        lo, hi = meta["summary"]["threshold_bracket"]
        print(f"  > curves cross between p_loss={lo:g} and {hi:g}", file=sys.stderr)
    _emit(data_engine.render_table(frame, meta, cfg["format"]), args.out)
    return EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_weights(args) -> int:
    params = ErrorModelParams(args.p_comp or 0.0, args.p_loss or 0.0, args.p_lint or 0.0)
    template = WeightTemplate(build_lattice(args.d), params, args.lattice_type)
    lo, hi = args.rounds
    if lo < 0 or hi < lo:
        raise ValidationError(f"bad round range {lo}..{hi}")
    graph = template.graph(lo, hi)
    print(f"[weights] d={args.d} {args.lattice_type}: {len(graph)} edges over cell rounds {lo}..{hi}", file=sys.stderr)
    cfg = {"d": args.d, "lattice_type": args.lattice_type, "rounds": [lo, hi], **params.as_dict(), "seed": None}
    _emit(data_engine.render_table(graph.to_frame(), data_engine.metadata("weights dump", cfg), args.format or "csv"),
          args.out)
    return EXIT_OK


def cmd_lattice(args) -> int:
    lattice = build_lattice(args.d)
    payload = {"metadata": data_engine.metadata("lattice dump", {"d": args.d, "seed": None}),
               "lattice": lattice.to_dict()}
    _emit(data_engine.to_json(payload), args.out)
    return EXIT_OK


def cmd_superstabilizers(args) -> int:
    params = ErrorModelParams(args.p_comp or 0.0, args.p_loss or 0.0, args.p_lint or 0.0)
    run = RunConfig(d=args.d, params=params, t_check=max(1, args.rounds), max_blocks=1, seed=args.seed,
                    retain_all=True)
    state = TrialState(run, keep_events=True)
    for _ in range(args.rounds + 1):
        state.advance()
    record = MeasurementRecord(state.lattice, state.outcomes)
    hi = args.rounds - 1
    windows = []
    for r in range(hi + 1):
        dump = SyndromeWindow(state.lattice, args.lattice_type, r, r, record).dump()
        dump["faults"] = [ev.to_dict() for ev in state.outcomes[r].events]
        windows.append(dump)
    whole = SyndromeWindow(state.lattice, args.lattice_type, 0, hi, record).dump() if hi >= 0 else None
    cfg = {"d": args.d, "rounds": args.rounds, "lattice_type": args.lattice_type, **params.as_dict(), "seed": args.seed}
    payload = {"metadata": data_engine.metadata("superstabilizers", cfg), "per_round": windows, "window": whole}
    _emit(data_engine.to_json(payload), args.out)
    return EXIT_OK


def cmd_derive_cell(args) -> int:
    report = derive_cell()
    if args.format == "json":
        text = data_engine.to_json(report_as_json(report))
    else:
        text = render_report(report)
    _emit(text, args.out)
    return EXIT_OK


def cmd_overhead(args) -> int:
    cfg = _values(args, "overhead")
    if cfg["baseline_d"] is None:
        raise ConfigError("--baseline-d is required")
    frame = data_engine.read_curves(args.curves)
    curves = analysis.curves_from_frame(frame, cfg["p_comp"], cfg["p_lint"])
    rows = analysis.overhead_table(curves, float(cfg["target"]), int(cfg["baseline_d"]), cfg["convention"])
    print(f"[overhead] {len(curves)} loss rates, target P_L={cfg['target']:g}, baseline d={cfg['baseline_d']}",
          file=sys.stderr)
    meta = data_engine.metadata("overhead", {**cfg, "curves": args.curves, "seed": None})
    _emit(data_engine.render_table(analysis.overhead_frame(rows), meta, cfg["format"]), args.out)
    return EXIT_OK


def cmd_extrapolate(args) -> int:
    value = analysis.extrapolate(args.a, args.b, args.db, args.d)
    print(f"{value:.1e}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "weights": cmd_weights,
    "lattice": cmd_lattice,
    "superstabilizers": cmd_superstabilizers,
    "derive-cell": cmd_derive_cell,
    "overhead": cmd_overhead,
    "extrapolate": cmd_extrapolate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    _configure_logging(args)
    try:
        return COMMANDS[args.command](args)
    except InfeasibleMatchingError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except TcsLossError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
