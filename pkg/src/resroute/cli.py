"""Command-line entry point.

    resroute run      --config s.yaml [--set demand.seed=7 ...] [--outputs dir]
    resroute sweep    --config s.yaml --protocol n --fractions 0.1,0.3,1.0
    resroute gen-grid --rows 20 --cols 20 --edge-length 500 --free-speed 13.9
                      --capacity 600 -o grid.json
    resroute validate --config s.yaml

Exit codes: 0 success, 1 config error, 2 runtime error.  The RESROUTE_SEED
environment variable overrides the config's demand seed; explicit --set
flags override both.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import yaml

from .harness import (
    ConfigError,
    ScenarioConfig,
    SummaryStats,
    apply_overrides,
    build_network,
    build_protocols,
    generate_demand,
    run_scenario,
    sweep_penetration,
)
from .network import generate_grid, save_network


class _Parser(argparse.ArgumentParser):
    # Bad usage is a config error (exit 1), not argparse's default exit 2.
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="resroute", description="Road traffic simulation runner.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run_p = sub.add_parser("run", help="run one scenario")
    run_p.add_argument("--config", required=True, help="scenario file (YAML)")
    run_p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="PATH=VALUE",
        help="override a config field by dotted path, e.g. demand.seed=7",
    )
    run_p.add_argument("--outputs", help="output directory (overrides the config)")
    run_p.set_defaults(func=_cmd_run)

    sweep_p = sub.add_parser("sweep", help="penetration sweep against a DynSP background")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--protocol", required=True, help="config id of the protocol under test")
    sweep_p.add_argument(
        "--fractions", required=True, help="comma-separated penetrations, e.g. 0,0.3,1.0"
    )
    sweep_p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE")
    sweep_p.add_argument("--outputs", help="output directory (overrides the config)")
    sweep_p.add_argument("--parallel", type=int, default=1, metavar="N")
    sweep_p.set_defaults(func=_cmd_sweep)

    grid_p = sub.add_parser("gen-grid", help="write a rectangular grid network file")
    grid_p.add_argument("--rows", type=int, required=True)
    grid_p.add_argument("--cols", type=int, required=True)
    grid_p.add_argument("--edge-length", type=float, required=True, help="meters")
    grid_p.add_argument("--free-speed", type=float, required=True, help="m/s")
    grid_p.add_argument("--capacity", type=float, required=True, help="veh/h")
    grid_p.add_argument("--capacity-hat", type=float, help="outflow capacity veh/h")
    grid_p.add_argument("--lanes", type=int, default=1)
    grid_p.add_argument("--road-class", default="default")
    grid_p.add_argument("--oneway", action="store_true", help="low-to-high id links only")
    grid_p.add_argument("-o", "--output", required=True, help="network JSON path")
    grid_p.set_defaults(func=_cmd_gen_grid)

    val_p = sub.add_parser("validate", help="check a scenario without running it")
    val_p.add_argument("--config", required=True)
    val_p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE")
    val_p.set_defaults(func=_cmd_validate)

    return parser


def _load_config(args) -> ScenarioConfig:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {args.config}: {err}") from err
    except yaml.YAMLError as err:
        raise ConfigError(f"{args.config}: invalid syntax: {err}") from err

    overrides = []
    env_seed = os.environ.get("RESROUTE_SEED")
    if env_seed is not None:
        overrides.append(f"demand.seed={env_seed}")
    overrides.extend(args.set)
    doc = apply_overrides(doc, overrides)
    config = ScenarioConfig.from_dict(doc)
    if getattr(args, "outputs", None):
        config.outputs = args.outputs
    return config


def _cell(x: float) -> str:
    return "n/a" if math.isnan(x) else f"{x:.2f}"


def _print_summary(stats: SummaryStats) -> None:
    print(
        f"{'protocol':<16}{'share':>7}{'mean':>9}{'median':>9}{'q1':>8}"
        f"{'q3':>8}{'max':>9}{'arrived':>9}{'stranded':>10}"
    )
    for r in stats.rows:
        print(
            f"{r.protocol:<16}{r.penetration:>7g}{_cell(r.mean_tt_min):>9}"
            f"{_cell(r.median_tt_min):>9}{_cell(r.q1_min):>8}{_cell(r.q3_min):>8}"
            f"{_cell(r.max_min):>9}{r.arrived:>9}{r.stranded:>10}"
        )
    print(f"overall mean travel time: {_cell(stats.overall_mean_min)} min")


def _cmd_run(args) -> int:
    config = _load_config(args)
    stats = run_scenario(config)
    _print_summary(stats)
    if config.outputs:
        print(f"wrote {config.outputs}/{{vehicles,arrivals,links,summary}}.csv")
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    try:
        fractions = [float(f) for f in args.fractions.split(",") if f != ""]
    except ValueError:
        raise ConfigError(f"--fractions must be comma-separated numbers: {args.fractions!r}")
    if not fractions:
        raise ConfigError("--fractions is empty")
    results = sweep_penetration(config, args.protocol, fractions, parallel=args.parallel)
    for fraction, stats in results:
        test = stats.row(args.protocol)
        background = stats.row("background")
        print(
            f"penetration {100 * fraction:g}%: {args.protocol} {_cell(test.mean_tt_min)} min, "
            f"background {_cell(background.mean_tt_min)} min, "
            f"overall {_cell(stats.overall_mean_min)} min"
        )
    if config.outputs:
        print(f"wrote {config.outputs}/sweep.csv")
    return 0


def _cmd_gen_grid(args) -> int:
    net = generate_grid(
        args.rows,
        args.cols,
        args.edge_length,
        args.free_speed,
        args.capacity,
        bidirectional=not args.oneway,
        capacity_hat=args.capacity_hat,
        lanes=args.lanes,
        road_class=args.road_class,
    )
    save_network(net, args.output)
    print(f"wrote {args.output}: {len(net.nodes)} nodes, {len(net.links)} links")
    return 0


def _cmd_validate(args) -> int:
    config = _load_config(args)
    net = build_network(config)
    vehicles = generate_demand(config, net)
    protocols = build_protocols(config)
    mix = ", ".join(f"{e['id']}({e['share']:g})" for e in config.protocols)
    print(
        f"config ok: {len(net.nodes)} nodes, {len(net.links)} links, "
        f"{len(vehicles)} vehicles, horizon {config.horizon_s} s, "
        f"protocols: {mix} ({len(protocols)} instantiated)"
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return args.func(args)
    except ValueError as err:
        # ConfigError and constructor validation errors alike.
        print(f"[error] {err}", file=sys.stderr)
        return 1
    except Exception as err:  # CLI boundary: anything else is a runtime failure
        print(f"[error] {type(err).__name__}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
