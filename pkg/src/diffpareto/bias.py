"""Asymptotic-bias analytics for the diffusion recursion.

Two complementary routes to the per-node bias (global optimum minus the
node's fixed point):

* the exact closed form at finite step sizes, obtained by solving one
  dense linear system whose operator is the identity minus the error
  propagation matrix of the recursion;
* the small-step-size limit, which depends only on the shape of the step
  sizes (not their scale) and is the same vector at every node.

The limit is built from the Perron vector of the composite combination
matrix: node weights z (normalized step sizes applied to the combined
Perron vector), the weighted aggregate Hessian and gradient at the
optimum, and one small solve. The module also exposes the supporting
operators (mixing gap, scaled curvature, the rank-M resolvent limit) so
their defining identities can be verified numerically, plus a spectral
diagnostic certifying that the closed form applies.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .costs import CostEnsemble, global_optimum, stacked_gradient, step_size_bounds
from .diffusion import DiffusionConfig, run_to_fixed_point
from .linalg import SingularMatrixError, kron, solve_linear, spectral_radius
from .network import (
    Assumption3Report,
    AssumptionError,
    CombinationMatrix,
    check_assumption3,
    perron_theta,
)

SPECTRAL_TOL = 1e-10
SPECTRAL_MAX_ITER = 50_000


@dataclass(frozen=True, eq=False)
class LimitOperators:
    """Operators behind the small-step-size limit.

    mixing_gap        identity minus the transposed composite mixing map
    curvature         mixing-conjugated, step-shape-scaled block Hessians
    agg_hessian_inv   inverse of the z-weighted aggregate Hessian (M x M)
    node_weights      z: normalized step sizes applied to a2 @ theta
    resolvent_limit   limit of mu * inverse(mixing_gap + mu * curvature),
                      rank M, factoring through agg_hessian_inv
    """

    mixing_gap: np.ndarray
    curvature: np.ndarray
    agg_hessian_inv: np.ndarray
    node_weights: np.ndarray
    resolvent_limit: np.ndarray

    def __post_init__(self):
        if (self.node_weights < 0.0).any():
            raise ValueError("node weights must be nonnegative")


@dataclass(frozen=True, eq=False)
class BiasReport:
    """Empirical, closed-form, and limit bias plus the certifying diagnostics."""

    empirical_bias: np.ndarray
    closed_form_bias: np.ndarray
    limit_bias: np.ndarray
    spectral_radius: float
    assumption3: Assumption3Report


def normalized_step_shape(step_sizes) -> np.ndarray:
    """Step sizes divided by their maximum; entries in (0, 1] with max one."""
    steps = np.asarray(step_sizes, dtype=float)
    return steps / steps.max()


def r_infinity(c: CombinationMatrix, ensemble: CostEnsemble, w_star) -> np.ndarray:
    """Block-diagonal matrix of the c-combined Hessians at the optimum.

    Block k is sum_l c[l, k] * hessian_l(w_star); exact for quadratics,
    whose Hessians do not depend on the evaluation point."""
    n, m = ensemble.n, ensemble.dim
    out = np.zeros((n * m, n * m))
    h_stack = np.stack([cost.hessian() for cost in ensemble.costs])
    for k in range(n):
        block = np.einsum("l,lij->ij", c.matrix[:, k], h_stack)
        out[k * m : (k + 1) * m, k * m : (k + 1) * m] = block
    return out


def error_propagation_matrix(
    a1: CombinationMatrix,
    a2: CombinationMatrix,
    c: CombinationMatrix,
    step_sizes,
    ensemble: CostEnsemble,
) -> np.ndarray:
    """One-iteration error map of the recursion, lifted to size N*M."""
    n, m = ensemble.n, ensemble.dim
    eye_m = np.eye(m)
    a1t = kron(a1.matrix.T, eye_m)
    a2t = kron(a2.matrix.T, eye_m)
    mu = kron(np.diag(np.asarray(step_sizes, dtype=float)), eye_m)
    w_star = global_optimum(ensemble)
    r_inf = r_infinity(c, ensemble, w_star)
    return a2t @ (np.eye(n * m) - mu @ r_inf) @ a1t


def spectral_check(config: DiffusionConfig, ensemble: CostEnsemble) -> float:
    """Spectral-radius estimate of the error propagation matrix.

    Below one whenever the curvature and step-size conditions hold; a
    value at or above one flags an unstable configuration with a
    RuntimeWarning."""
    rho = spectral_radius(
        error_propagation_matrix(config.a1, config.a2, config.c, config.step_sizes, ensemble),
        tol=SPECTRAL_TOL,
        max_iter=SPECTRAL_MAX_ITER,
    )
    if rho >= 1.0:
        warnings.warn(
            f"error-propagation spectral radius {rho:.6g} is not below one;"
            " the fixed point may not exist",
            RuntimeWarning,
            stacklevel=2,
        )
    return rho


def closed_form_bias(config: DiffusionConfig, ensemble: CostEnsemble) -> np.ndarray:
    """Exact stacked bias at the configured step sizes (length N*M).

    Solves (I - B) x = rhs where B is the error propagation matrix and
    rhs applies the step sizes and gradient-exchange weights to the
    stacked gradient at the optimum."""
    n, m = ensemble.n, ensemble.dim
    eye_m = np.eye(m)
    w_star = global_optimum(ensemble)
    g0 = stacked_gradient(ensemble, w_star)
    b = error_propagation_matrix(config.a1, config.a2, config.c, config.step_sizes, ensemble)
    a2t = kron(config.a2.matrix.T, eye_m)
    mu = kron(np.diag(config.step_sizes), eye_m)
    ct = kron(config.c.matrix.T, eye_m)
    rhs = a2t @ mu @ ct @ g0
    try:
        return solve_linear(np.eye(n * m) - b, rhs)
    except SingularMatrixError as exc:
        rho = spectral_radius(b, tol=SPECTRAL_TOL, max_iter=SPECTRAL_MAX_ITER)
        raise AssumptionError(
            "closed-form bias system is singular; the error-propagation spectral"
            f" radius estimate is {rho:.6g} (must be below one). {exc}"
        ) from exc


def _weighted_aggregate(config: DiffusionConfig, ensemble: CostEnsemble):
    """z weights, the z-weighted aggregate Hessian, and weighted gradient at w*."""
    theta = perron_theta(config.a1, config.a2).theta
    omega0 = normalized_step_shape(config.step_sizes)
    z = omega0 * (config.a2.matrix @ theta)
    weights = config.c.matrix @ z
    h_stack = np.stack([cost.hessian() for cost in ensemble.costs])
    hbar = np.einsum("l,lij->ij", weights, h_stack)
    w_star = global_optimum(ensemble)
    gbar = np.einsum("l,li->i", weights, np.stack([c.gradient(w_star) for c in ensemble.costs]))
    return theta, z, hbar, gbar


def limit_operators(config: DiffusionConfig, ensemble: CostEnsemble) -> LimitOperators:
    """Build the limit operators and their rank-M factorization explicitly."""
    n, m = ensemble.n, ensemble.dim
    eye_m = np.eye(m)
    theta, z, hbar, _ = _weighted_aggregate(config, ensemble)
    a1t = kron(config.a1.matrix.T, eye_m)
    a2t = kron(config.a2.matrix.T, eye_m)
    mixing_gap = np.eye(n * m) - a2t @ a1t
    m0 = kron(np.diag(normalized_step_shape(config.step_sizes)), eye_m)
    w_star = global_optimum(ensemble)
    curvature = a2t @ m0 @ r_infinity(config.c, ensemble, w_star) @ a1t
    ones_lift = kron(np.ones((n, 1)), eye_m)
    theta_lift = kron(theta[None, :], eye_m)
    agg = theta_lift @ curvature @ ones_lift
    try:
        d = np.column_stack([solve_linear(agg, e) for e in eye_m])
    except SingularMatrixError as exc:
        raise AssumptionError(
            "Assumption 1 violated: the z-weighted aggregate Hessian is singular"
            f" ({exc})"
        ) from exc
    # the kron route and the weighted-sum route must build the same matrix
    if np.abs(agg - hbar).max() > 1e-10 * max(1.0, np.abs(hbar).max()):
        raise RuntimeError("aggregate Hessian mismatch between construction routes")
    resolvent_limit = ones_lift @ d @ theta_lift
    return LimitOperators(
        mixing_gap=mixing_gap,
        curvature=curvature,
        agg_hessian_inv=d,
        node_weights=z,
        resolvent_limit=resolvent_limit,
    )


def limit_bias(config: DiffusionConfig, ensemble: CostEnsemble) -> np.ndarray:
    """Small-step-size bias, identical at every node (length M).

    Solves the z-weighted aggregate Hessian against the z-weighted
    aggregate gradient at the optimum. Depends only on the shape of the
    step sizes, so rescaling them all by one factor changes nothing."""
    _, _, hbar, gbar = _weighted_aggregate(config, ensemble)
    try:
        return solve_linear(hbar, gbar)
    except SingularMatrixError as exc:
        raise AssumptionError(
            "Assumption 1 violated: the z-weighted aggregate Hessian is singular"
            f" ({exc})"
        ) from exc


def verify_limit_convergence(
    config: DiffusionConfig, ensemble: CostEnsemble, mu_schedule
) -> list[tuple[float, float]]:
    """Closed-form bias against the replicated limit along a step-size sweep.

    The step-size shape is frozen; only the largest step size walks down
    the strictly decreasing schedule. Returns (mu_max, deviation) pairs,
    where deviation is the stacked two-norm distance to the limit."""
    schedule = [float(mu) for mu in mu_schedule]
    if not schedule:
        raise ValueError("schedule must be nonempty")
    if any(mu <= 0.0 for mu in schedule):
        raise ValueError("schedule entries must be positive")
    if any(later >= earlier for earlier, later in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly decreasing")
    omega0 = normalized_step_shape(config.step_sizes)
    bounds = step_size_bounds(config.c, ensemble)
    over = schedule[0] * omega0 >= bounds
    if over.any():
        node = int(np.argmax(over))
        raise ValueError(
            f"schedule entry {schedule[0]:.6g} puts node {node} at or above its"
            f" step-size bound {bounds[node]:.6g}"
        )
    limit = limit_bias(config, ensemble)
    replicated = np.tile(limit, ensemble.n)
    table = []
    for mu in schedule:
        scaled = config.with_step_sizes(mu * omega0)
        deviation = float(np.linalg.norm(closed_form_bias(scaled, ensemble) - replicated))
        table.append((mu, deviation))
    return table


def bias_report(
    config: DiffusionConfig,
    ensemble: CostEnsemble,
    tol: float = 1e-12,
    max_iter: int = 1_000_000,
    assumption3_tol: float = 1e-8,
    init=None,
) -> BiasReport:
    """Run the recursion and assemble every bias quantity and diagnostic."""
    w_star = global_optimum(ensemble)
    result = run_to_fixed_point(config, ensemble, init=init, tol=tol, max_iter=max_iter)
    empirical = w_star[None, :] - result.w_infinity
    closed = closed_form_bias(config, ensemble)
    limit = limit_bias(config, ensemble)
    rho = spectral_check(config, ensemble)
    theta = perron_theta(config.a1, config.a2).theta
    report3 = check_assumption3(
        theta,
        config.a2,
        normalized_step_shape(config.step_sizes),
        config.c,
        tol=assumption3_tol,
    )
    return BiasReport(
        empirical_bias=empirical,
        closed_form_bias=closed,
        limit_bias=limit,
        spectral_radius=rho,
        assumption3=report3,
    )


def _fmt(x: float) -> str:
    return format(float(x), ".16e")


def report_to_json(report: BiasReport) -> str:
    """Fixed-schema JSON document with reals at 17 significant digits."""

    def vector(values) -> str:
        return "[" + ", ".join(_fmt(v) for v in np.asarray(values).ravel()) + "]"

    def matrix(values) -> str:
        return "[" + ", ".join(vector(row) for row in np.asarray(values)) + "]"

    a3 = report.assumption3
    return (
        "{\n"
        f'  "empirical_bias": {matrix(report.empirical_bias)},\n'
        f'  "closed_form_bias": {vector(report.closed_form_bias)},\n'
        f'  "limit_bias": {vector(report.limit_bias)},\n'
        f'  "spectral_radius": {_fmt(report.spectral_radius)},\n'
        '  "assumption3": {'
        f'"satisfied": {"true" if a3.satisfied else "false"}, '
        f'"c0": {_fmt(a3.c0_estimate)}, '
        f'"max_deviation": {_fmt(a3.max_deviation)}'
        "}\n"
        "}\n"
    )
