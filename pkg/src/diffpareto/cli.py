"""Command-line interface.

Subcommands:
  sweep    run one configured scenario, write the CSV (and optionally a plot script)
  check    validate the standing assumptions of a configuration and print a report
  figures  run the four built-in sweep families into an output directory
  topo     generate a random connected topology and write its edge list

Configs are UTF-8 JSON files whose keys are the ExperimentConfig field
names; unknown keys are rejected. Exit codes: 0 success, 1 validation
failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .bias import limit_bias, spectral_check
from .costs import check_assumption1, sample_ensemble, step_size_bounds
from .diffusion import atc_config, cta_config
from .experiment import (
    DEFAULT_SCHEDULE,
    EXPERIMENT_AVG_DEGREE,
    builtin_figure_configs,
    draw_step_shape,
    emit_csv,
    emit_plot_script,
    load_config,
    run_sweep,
)
from .network import (
    build_A,
    build_C,
    check_assumption3,
    check_primitive,
    generate_topology,
    perron_theta,
    topology_to_edge_list,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="diffpareto", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command")

    p_sweep = sub.add_parser("sweep", help="run one scenario sweep")
    p_sweep.add_argument("--config", required=True, help="JSON config file")
    p_sweep.add_argument("--out", required=True, help="CSV output path")
    p_sweep.add_argument("--plot", default=None, help="optional gnuplot script path")

    p_check = sub.add_parser("check", help="check assumptions for a config")
    p_check.add_argument("--config", required=True, help="JSON config file")

    p_fig = sub.add_parser("figures", help="run the four built-in sweep families")
    p_fig.add_argument("--outdir", required=True, help="output directory")
    p_fig.add_argument(
        "--schedule",
        default=None,
        help="comma-separated mu_max override (default: the built-in decade schedule)",
    )

    p_topo = sub.add_parser("topo", help="generate a topology edge list")
    p_topo.add_argument("--n", type=int, required=True, help="number of nodes")
    p_topo.add_argument("--deg", type=float, required=True, help="target average degree")
    p_topo.add_argument("--seed", type=int, required=True, help="generator seed")
    p_topo.add_argument("--out", required=True, help="edge-list output path")

    return parser


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    rows = run_sweep(config)
    emit_csv(rows, args.out)
    if args.plot is not None:
        emit_plot_script(rows, args.plot)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_check(args) -> int:
    config = load_config(args.config)
    topology = generate_topology(config.n_nodes, EXPERIMENT_AVG_DEGREE, config.topology_seed)
    ensemble = sample_ensemble(config.n_nodes, config.dim, config.rows, config.data_seed)
    a = build_A(topology, config.a_rule)
    c = build_C(topology, config.c_rule)
    omega0 = draw_step_shape(config.n_nodes, config.step_mode, config.step_seed)
    mu_max = max(config.mu_max_schedule)
    make = atc_config if config.strategy == "atc" else cta_config
    dcfg = make(a, c, mu_max * omega0)

    print(
        f"Scenario {config.scenario_id}: N={config.n_nodes}, M={config.dim},"
        f" edges={topology.n_edges}, mu_max={mu_max:g}"
    )

    report1 = check_assumption1(c, ensemble)
    floor = float(report1.weighted_lambda_min.min())
    state = "SATISFIED" if report1.satisfied else "VIOLATED"
    print(f"Assumption 1: {state} (min weighted curvature lower bound {floor:g})")

    primitive = check_primitive(dcfg.a1.matrix @ dcfg.a2.matrix)
    print(f"Assumption 2: {'SATISFIED' if primitive else 'VIOLATED'} (composite primitivity)")

    bounds = step_size_bounds(c, ensemble)
    margins = bounds / omega0
    tightest = int(np.argmin(margins))
    state = "SATISFIED" if mu_max < margins[tightest] else "VIOLATED"
    print(
        f"Step-size condition: {state} (largest usable mu_max {margins[tightest]:g},"
        f" tightest at node {tightest})"
    )

    theta = perron_theta(dcfg.a1, dcfg.a2).theta
    report3 = check_assumption3(theta, dcfg.a2, omega0, dcfg.c)
    if report3.satisfied:
        print(f"Assumption 3: SATISFIED (c0={report3.c0_estimate:g})")
    else:
        print(
            f"Assumption 3: NOT SATISFIED (c0={report3.c0_estimate:g},"
            f" max deviation={report3.max_deviation:g})"
        )

    rho = spectral_check(dcfg, ensemble)
    print(f"Error-propagation spectral radius at mu_max={mu_max:g}: {rho:.6g}")

    limit = limit_bias(dcfg, ensemble)
    print(f"Small-step-size bias norm (per node): {float(np.linalg.norm(limit)):.6g}")
    return 0


def _cmd_figures(args) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.schedule is None:
        schedule = DEFAULT_SCHEDULE
    else:
        try:
            schedule = tuple(float(part) for part in args.schedule.split(","))
        except ValueError as exc:
            raise ValueError(f"bad --schedule value: {exc}") from exc
    for name, configs in builtin_figure_configs(schedule).items():
        rows = []
        for config in configs:
            rows.extend(run_sweep(config))
        emit_csv(rows, outdir / f"sweep_{name}.csv")
        emit_plot_script(rows, outdir / f"sweep_{name}.gp")
        print(f"wrote sweep_{name}.csv and sweep_{name}.gp")
    return 0


def _cmd_topo(args) -> int:
    topology = generate_topology(args.n, args.deg, args.seed)
    Path(args.out).write_text(topology_to_edge_list(topology), encoding="utf-8")
    print(f"wrote {topology.n_edges} edges for {args.n} nodes to {args.out}")
    return 0


_COMMANDS = {
    "sweep": _cmd_sweep,
    "check": _cmd_check,
    "figures": _cmd_figures,
    "topo": _cmd_topo,
}


def cli_main(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        # assumption and config errors are validation failures
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
