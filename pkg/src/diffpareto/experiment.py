"""Configuration-driven sweeps of bias against the largest step size.

A scenario fixes the network, the data, the combination rules, and the
step-size shape; the sweep then walks a descending schedule of largest
step sizes, runs the recursion to its fixed point at each scale, and
records the squared bias norm next to the small-step-size prediction.
Everything is seeded, so two runs of the same configuration produce
byte-identical CSV output.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .bias import closed_form_bias, error_propagation_matrix, limit_bias
from .costs import CostEnsemble, global_optimum, sample_ensemble, step_size_bounds
from .diffusion import DiffusionConfig, atc_config, cta_config, run_to_fixed_point
from .linalg import PowerIterationWarning, spectral_radius
from .network import build_A, build_C, check_assumption3, generate_topology, perron_theta
from .rng import SplitMix64

STRATEGIES = ("atc", "cta")
STEP_MODES = ("equal", "unequal_uniform_half")

# experiment protocol: each node is connected to four others on average
EXPERIMENT_AVG_DEGREE = 4.0

DEFAULT_SCHEDULE = (1e-2, 10**-2.5, 1e-3, 10**-3.5, 1e-4, 10**-4.5, 1e-5)

CSV_HEADER = (
    "scenario_id,strategy,a_rule,c_rule,step_mode,mu_max,bias_sq_norm,"
    "limit_bias_sq_norm,assumption3_satisfied,spectral_radius,iterations,converged"
)

_SPECTRAL_SWEEP_TOL = 1e-10
_SPECTRAL_SWEEP_MAX_ITER = 5_000


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep scenario. Field names double as the JSON config schema."""

    strategy: str
    a_rule: str
    c_rule: str
    step_mode: str
    mu_max_schedule: tuple[float, ...]
    n_nodes: int = 50
    dim: int = 4
    rows: int = 6
    topology_seed: int = 1
    data_seed: int = 2
    step_seed: int = 3
    tol: float = 1e-12
    max_iter: int = 1_000_000
    debug_identical_costs: bool = False

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.a_rule not in ("averaging", "relative_degree", "metropolis"):
            raise ValueError(f"unknown a_rule {self.a_rule!r}")
        if self.c_rule not in ("averaging", "relative_degree", "identity"):
            raise ValueError(f"unknown c_rule {self.c_rule!r}")
        if self.step_mode not in STEP_MODES:
            raise ValueError(f"step_mode must be one of {STEP_MODES}, got {self.step_mode!r}")
        schedule = tuple(float(mu) for mu in self.mu_max_schedule)
        if not schedule:
            raise ValueError("mu_max_schedule must be nonempty")
        if any(mu <= 0.0 or not math.isfinite(mu) for mu in schedule):
            raise ValueError("mu_max_schedule entries must be positive and finite")
        if len(set(schedule)) != len(schedule):
            raise ValueError("mu_max_schedule entries must be distinct")
        if self.n_nodes < 6:
            raise ValueError("sweeps need at least 6 nodes for the average degree of 4")
        if self.dim < 1 or self.rows < 1:
            raise ValueError("dim and rows must be positive")
        if self.tol <= 0.0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter at least one")
        object.__setattr__(self, "mu_max_schedule", schedule)

    @property
    def scenario_id(self) -> str:
        return f"{self.strategy}-{self.a_rule}-{self.c_rule}-{self.step_mode}"


_CONFIG_FIELDS = {f.name for f in fields(ExperimentConfig)}


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from parsed JSON, rejecting unknown fields."""
    if not isinstance(data, dict):
        raise ValueError("config document must be a JSON object")
    unknown = sorted(set(data) - _CONFIG_FIELDS)
    if unknown:
        raise ValueError(f"unknown config fields: {', '.join(unknown)}")
    missing = sorted(
        name
        for name in ("strategy", "a_rule", "c_rule", "step_mode", "mu_max_schedule")
        if name not in data
    )
    if missing:
        raise ValueError(f"missing required config fields: {', '.join(missing)}")
    return ExperimentConfig(**data)


def load_config(path) -> ExperimentConfig:
    import json

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


@dataclass(frozen=True)
class SweepRow:
    """One (scenario, mu_max) measurement."""

    scenario_id: str
    strategy: str
    a_rule: str
    c_rule: str
    step_mode: str
    mu_max: float
    bias_sq_norm: float
    limit_bias_sq_norm: float
    assumption3_satisfied: bool
    spectral_radius: float
    iterations: int
    converged: bool


def draw_step_shape(n: int, mode: str, step_seed: int) -> np.ndarray:
    """Normalized step-size shape. Node 0 pins the maximum; in the unequal
    mode the other nodes draw once from the upper half of the unit range."""
    if mode == "equal":
        return np.ones(n)
    rng = SplitMix64(step_seed)
    shape = np.ones(n)
    for k in range(1, n):
        shape[k] = 0.5 + 0.5 * rng.uniform()
    return shape


def _build_scenario(config: ExperimentConfig):
    topology = generate_topology(config.n_nodes, EXPERIMENT_AVG_DEGREE, config.topology_seed)
    ensemble = sample_ensemble(config.n_nodes, config.dim, config.rows, config.data_seed)
    if config.debug_identical_costs:
        ensemble = CostEnsemble(
            costs=(ensemble.costs[0],) * config.n_nodes,
            dim=config.dim,
            data_seed=config.data_seed,
        )
    a = build_A(topology, config.a_rule)
    c = build_C(topology, config.c_rule)
    omega0 = draw_step_shape(config.n_nodes, config.step_mode, config.step_seed)
    make = atc_config if config.strategy == "atc" else cta_config

    def at_scale(mu_max: float) -> DiffusionConfig:
        return make(a, c, mu_max * omega0)

    return topology, ensemble, at_scale, omega0


def run_sweep(config: ExperimentConfig) -> list[SweepRow]:
    """Run one scenario over its schedule, largest step size first.

    The topology, ensemble, and step shape are built once from the seeds
    and reused at every scale. Each run warm-starts at the global optimum;
    the fixed point is unique, so this only trims iterations. The first
    (largest) scale also cross-checks the iterated fixed point against the
    closed-form bias before any row is emitted."""
    topology, ensemble, at_scale, omega0 = _build_scenario(config)
    schedule = sorted(config.mu_max_schedule, reverse=True)
    dcfg_probe = at_scale(schedule[0])
    bounds = step_size_bounds(dcfg_probe.c, ensemble)
    over = schedule[0] * omega0 >= bounds
    if over.any():
        node = int(np.argmax(over))
        raise ValueError(
            f"mu_max {schedule[0]:.6g} puts node {node} at or above its step-size"
            f" bound {bounds[node]:.6g}; shrink the schedule"
        )
    w_star = global_optimum(ensemble)
    limit = limit_bias(dcfg_probe, ensemble)
    limit_sq = config.n_nodes * float(limit @ limit)
    theta = perron_theta(dcfg_probe.a1, dcfg_probe.a2).theta
    report3 = check_assumption3(theta, dcfg_probe.a2, omega0, dcfg_probe.c)
    init = np.tile(w_star, (config.n_nodes, 1))
    rows: list[SweepRow] = []
    for index, mu_max in enumerate(schedule):
        dcfg = at_scale(mu_max)
        result = run_to_fixed_point(
            dcfg, ensemble, init=init, tol=config.tol, max_iter=config.max_iter
        )
        bias = w_star[None, :] - result.w_infinity
        bias_sq = float(np.sum(bias * bias))
        if index == 0:
            closed = closed_form_bias(dcfg, ensemble)
            gap = float(np.linalg.norm(closed - bias.ravel()))
            if gap > 1e-6 * (1.0 + float(np.linalg.norm(bias))):
                raise RuntimeError(
                    "iterated fixed point disagrees with the closed-form bias"
                    f" (gap {gap:.3e}) at mu_max {mu_max:.6g}"
                )
        with warnings.catch_warnings():
            # tightly clustered eigenvalues at small steps stall the estimate;
            # the best value is still recorded
            warnings.simplefilter("ignore", PowerIterationWarning)
            rho = spectral_radius(
                error_propagation_matrix(
                    dcfg.a1, dcfg.a2, dcfg.c, dcfg.step_sizes, ensemble
                ),
                tol=_SPECTRAL_SWEEP_TOL,
                max_iter=_SPECTRAL_SWEEP_MAX_ITER,
            )
        rows.append(
            SweepRow(
                scenario_id=config.scenario_id,
                strategy=config.strategy,
                a_rule=config.a_rule,
                c_rule=config.c_rule,
                step_mode=config.step_mode,
                mu_max=mu_max,
                bias_sq_norm=bias_sq,
                limit_bias_sq_norm=limit_sq,
                assumption3_satisfied=report3.satisfied,
                spectral_radius=rho,
                iterations=result.iterations_used,
                converged=result.converged,
            )
        )
    return rows


def fit_loglog_slope(rows: list[SweepRow], field_name: str = "bias_sq_norm") -> float:
    """Ordinary least-squares slope of log(field) against log(mu_max)."""
    if field_name != "bias_sq_norm":
        raise ValueError(f"unsupported field {field_name!r}")
    if len(rows) < 3:
        raise ValueError("need at least three rows for a slope fit")
    mus = np.array([row.mu_max for row in rows])
    values = np.array([getattr(row, field_name) for row in rows])
    if (values <= 0.0).any():
        raise ValueError(
            "slope fit is inapplicable: nonpositive values present (a sweep whose"
            " bias underflows to zero has no log-log slope)"
        )
    if mus.max() / mus.min() < 10.0:
        raise ValueError("schedule must span at least one decade of mu_max")
    slope, _ = np.polyfit(np.log(mus), np.log(values), 1)
    return float(slope)


def _fmt(x: float) -> str:
    return format(float(x), ".16e")


def _bool(x: bool) -> str:
    return "true" if x else "false"


def emit_csv(rows: list[SweepRow], path) -> None:
    """Write the sweep table; byte-identical for identical inputs."""
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                (
                    r.scenario_id,
                    r.strategy,
                    r.a_rule,
                    r.c_rule,
                    r.step_mode,
                    _fmt(r.mu_max),
                    _fmt(r.bias_sq_norm),
                    _fmt(r.limit_bias_sq_norm),
                    _bool(r.assumption3_satisfied),
                    _fmt(r.spectral_radius),
                    str(r.iterations),
                    _bool(r.converged),
                )
            )
        )
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def emit_plot_script(rows: list[SweepRow], path) -> None:
    """Self-contained gnuplot script: log-log bias curves, one per scenario,
    plus a dashed horizontal line at the nonzero small-step limits."""
    path = Path(path)
    lines = [
        "# squared bias norm against the largest step size (log-log)",
        "set terminal pngcairo size 960,640",
        f"set output '{path.stem}.png'",
        "set logscale xy",
        "set xlabel 'largest step size'",
        "set ylabel 'squared bias norm'",
        "set key left top",
    ]
    groups: dict[str, list[SweepRow]] = {}
    for r in rows:
        groups.setdefault(r.scenario_id, []).append(r)
    for i, grp in enumerate(groups.values()):
        lines.append(f"$scenario_{i} << EOD")
        for r in grp:
            lines.append(f"{_fmt(r.mu_max)} {_fmt(r.bias_sq_norm)}")
        lines.append("EOD")
    items = []
    for i, (sid, grp) in enumerate(groups.items()):
        items.append(f"$scenario_{i} using 1:2 with linespoints title '{sid}'")
        if not grp[0].assumption3_satisfied and grp[0].limit_bias_sq_norm > 0.0:
            items.append(
                f"{_fmt(grp[0].limit_bias_sq_norm)} with lines dashtype 2"
                f" title '{sid} small-step limit'"
            )
    if items:
        lines.append("plot " + ", \\\n     ".join(items))
    else:
        lines.append("# no data: axes only")
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def builtin_figure_configs(schedule=DEFAULT_SCHEDULE) -> dict[str, list[ExperimentConfig]]:
    """The four built-in sweep families, three combination rules each."""
    schedule = tuple(schedule)
    figures: dict[str, list[ExperimentConfig]] = {}
    for name, strategy, c_rule, step_mode in (
        ("atc_unequal", "atc", "relative_degree", "unequal_uniform_half"),
        ("cta_unequal", "cta", "averaging", "unequal_uniform_half"),
        ("atc_equal", "atc", "relative_degree", "equal"),
        ("cta_equal", "cta", "averaging", "equal"),
    ):
        figures[name] = [
            ExperimentConfig(
                strategy=strategy,
                a_rule=a_rule,
                c_rule=c_rule,
                step_mode=step_mode,
                mu_max_schedule=schedule,
            )
            for a_rule in ("averaging", "relative_degree", "metropolis")
        ]
    return figures
