import json

import numpy as np
import pytest

from diffpareto.bias import (
    bias_report,
    closed_form_bias,
    error_propagation_matrix,
    limit_bias,
    limit_operators,
    normalized_step_shape,
    r_infinity,
    report_to_json,
    spectral_check,
    verify_limit_convergence,
)
from diffpareto.costs import (
    CostEnsemble,
    QuadraticCost,
    global_optimum,
    sample_ensemble,
    stacked_gradient,
    step_size_bounds,
)
from diffpareto.diffusion import DiffusionConfig, atc_config, cta_config, run_to_fixed_point
from diffpareto.linalg import elimination_rank, kron, solve_linear
from diffpareto.network import (
    CombinationMatrix,
    build_A,
    build_C,
    generate_topology,
    identity_combination,
    perron_theta,
)

A22 = CombinationMatrix(np.array([[0.7, 0.4], [0.3, 0.6]]), kind="left_stochastic")


def scalar_cost(target: float) -> QuadraticCost:
    return QuadraticCost(np.array([[1.0]]), np.array([target]))


def two_node_config(mu: float = 0.01) -> tuple[DiffusionConfig, CostEnsemble]:
    """Analytic case: mixing by A22 only, no gradient exchange, equal steps."""
    eye = identity_combination(2)
    cfg = DiffusionConfig(a1=A22, a2=eye, c=eye, step_sizes=np.array([mu, mu]))
    ens = CostEnsemble(costs=(scalar_cost(1.0), scalar_cost(3.0)), dim=1)
    return cfg, ens


def random_valid_config(index: int) -> tuple[DiffusionConfig, CostEnsemble]:
    n = (5, 8, 10)[index % 3]
    m = (2, 3)[index % 2]
    topo = generate_topology(n, 3.0, seed=500 + index)
    ens = sample_ensemble(n, m, m + 2, data_seed=600 + index)
    a = build_A(topo, ("averaging", "relative_degree", "metropolis")[index % 3])
    c = build_C(topo, ("averaging", "relative_degree", "identity")[(index + 1) % 3])
    make = atc_config if index % 2 == 0 else cta_config
    shape = np.linspace(0.6, 1.0, n) if index % 4 < 2 else np.ones(n)
    mu = 0.25 * float((step_size_bounds(c, ens) / shape).min())
    return make(a, c, mu * shape), ens


# --- block Hessians ----------------------------------------------------------


def test_r_infinity_identity_exchange_scalar():
    _, ens = two_node_config()
    out = r_infinity(identity_combination(2), ens, np.array([2.0]))
    assert np.allclose(out, np.diag([2.0, 2.0]), atol=1e-15)


def test_r_infinity_blockdiag_structure():
    ens = sample_ensemble(4, 3, 5, data_seed=44)
    eye = identity_combination(4)
    out = r_infinity(eye, ens, np.zeros(3))
    for k in range(4):
        block = out[k * 3 : (k + 1) * 3, k * 3 : (k + 1) * 3]
        assert np.allclose(block, ens.costs[k].hessian(), atol=1e-14)
    off = out.copy()
    for k in range(4):
        off[k * 3 : (k + 1) * 3, k * 3 : (k + 1) * 3] = 0.0
    assert np.abs(off).max() == 0.0


def test_r_infinity_blocks_positive_definite():
    topo = generate_topology(6, 3.0, seed=8)
    c = build_C(topo, "averaging")
    ens = sample_ensemble(6, 2, 4, data_seed=8)
    out = r_infinity(c, ens, np.zeros(2))
    for k in range(6):
        block = out[k * 2 : (k + 1) * 2, k * 2 : (k + 1) * 2]
        assert np.linalg.eigvalsh(block).min() > 0.0


# --- closed form vs iteration -------------------------------------------------


def test_closed_form_zero_for_identical_costs():
    topo = generate_topology(5, 3.0, seed=3)
    a = build_A(topo, "averaging")
    c = build_C(topo, "averaging")
    shared = QuadraticCost(np.array([[1.0, 0.5], [0.0, 1.0]]), np.array([1.0, 2.0]))
    ens = CostEnsemble(costs=(shared,) * 5, dim=2)
    cfg = atc_config(a, c, np.full(5, 0.05))
    assert np.abs(closed_form_bias(cfg, ens)).max() <= 1e-12


def test_closed_form_matches_iterated_fixed_point():
    cfg, ens = two_node_config(mu=0.01)
    res = run_to_fixed_point(cfg, ens, tol=1e-14)
    assert res.converged
    empirical = (global_optimum(ens)[None, :] - res.w_infinity).ravel()
    assert np.linalg.norm(closed_form_bias(cfg, ens) - empirical) <= 1e-10


def test_closed_form_scales_linearly_under_assumption3():
    topo = generate_topology(10, 3.0, seed=31)
    a = build_A(topo, "metropolis")
    c = build_C(topo, "relative_degree")
    ens = sample_ensemble(10, 2, 4, data_seed=31)
    lo = atc_config(a, c, np.full(10, 5e-4))
    hi = atc_config(a, c, np.full(10, 1e-3))
    ratio = np.linalg.norm(closed_form_bias(lo, ens)) / np.linalg.norm(
        closed_form_bias(hi, ens)
    )
    assert ratio == pytest.approx(0.5, rel=0.05)


# --- limit operators -----------------------------------------------------------


def test_limit_operators_two_node_hand_values():
    cfg, ens = two_node_config()
    ops = limit_operators(cfg, ens)
    assert np.allclose(ops.node_weights, [4 / 7, 3 / 7], atol=1e-12)
    assert np.allclose(ops.agg_hessian_inv, [[0.5]], atol=1e-12)


def test_limit_operators_doubly_stochastic_uniform_hessians():
    topo = generate_topology(6, 3.0, seed=17)
    a = build_A(topo, "metropolis")
    ens = CostEnsemble(costs=(QuadraticCost(np.eye(2), np.zeros(2)),) * 6, dim=2)
    cfg = atc_config(a, identity_combination(6), np.full(6, 0.1))
    ops = limit_operators(cfg, ens)
    assert np.allclose(ops.agg_hessian_inv, 0.5 * np.eye(2), atol=1e-9)


@pytest.mark.parametrize("index", range(6))
def test_limit_operator_identities(index):
    cfg, ens = random_valid_config(index)
    ops = limit_operators(cfg, ens)
    assert np.abs(ops.resolvent_limit @ ops.mixing_gap).max() <= 1e-8
    assert np.abs(ops.mixing_gap @ ops.resolvent_limit).max() <= 1e-8
    m = ens.dim
    theta = perron_theta(cfg.a1, cfg.a2).theta
    agg = kron(theta[None, :], np.eye(m)) @ ops.curvature @ kron(np.ones((ens.n, 1)), np.eye(m))
    assert np.abs(ops.agg_hessian_inv @ agg - np.eye(m)).max() <= 1e-8
    assert (ops.node_weights >= 0.0).all()
    threshold = 1e-8 * np.abs(ops.resolvent_limit).max()
    assert elimination_rank(ops.resolvent_limit, threshold) == m


# --- limit bias -----------------------------------------------------------------


def test_limit_bias_zero_under_assumption3():
    topo = generate_topology(12, 3.0, seed=23)
    a = build_A(topo, "metropolis")
    c = build_C(topo, "averaging")
    ens = sample_ensemble(12, 3, 5, data_seed=23)
    cfg = atc_config(a, c, np.full(12, 0.01))
    assert np.linalg.norm(limit_bias(cfg, ens)) <= 1e-10


def test_limit_bias_two_node_exact():
    cfg, ens = two_node_config()
    value = limit_bias(cfg, ens)
    assert abs(value[0] - 1.0 / 7.0) <= 1e-12


def test_limit_bias_scale_free():
    cfg, ens = random_valid_config(1)
    scaled = cfg.with_step_sizes(0.37 * cfg.step_sizes)
    assert np.allclose(limit_bias(cfg, ens), limit_bias(scaled, ens), atol=1e-13)


@pytest.mark.parametrize("index", range(4))
def test_limit_bias_weighted_least_squares_oracle(index):
    # independent route: the limit equals w_star minus the minimizer of the
    # z-through-c weighted sum of the costs
    cfg, ens = random_valid_config(index)
    theta = perron_theta(cfg.a1, cfg.a2).theta
    z = normalized_step_shape(cfg.step_sizes) * (cfg.a2.matrix @ theta)
    weights = cfg.c.matrix @ z
    gram = sum(
        w * (c.x_matrix.T @ c.x_matrix) for w, c in zip(weights, ens.costs)
    )
    rhs = sum(w * (c.x_matrix.T @ c.y_vector) for w, c in zip(weights, ens.costs))
    weighted_min = solve_linear(gram, rhs)
    expected = global_optimum(ens) - weighted_min
    assert np.linalg.norm(limit_bias(cfg, ens) - expected) <= 1e-10


# --- limit convergence -----------------------------------------------------------


def test_verify_limit_convergence_two_node():
    cfg, ens = two_node_config(mu=0.01)
    table = verify_limit_convergence(cfg, ens, [1e-2, 1e-3, 1e-4])
    mus = [mu for mu, _ in table]
    devs = [dev for _, dev in table]
    assert mus == [1e-2, 1e-3, 1e-4]
    assert devs[1] <= devs[0] and devs[2] <= devs[1]
    # first-order convergence: one decade in mu shrinks the gap about tenfold
    assert devs[0] / devs[1] == pytest.approx(10.0, rel=0.3)
    assert devs[1] / devs[2] == pytest.approx(10.0, rel=0.3)


def test_verify_limit_convergence_assumption3_bias_shrinks():
    topo = generate_topology(8, 3.0, seed=41)
    a = build_A(topo, "metropolis")
    c = build_C(topo, "averaging")
    ens = sample_ensemble(8, 2, 4, data_seed=41)
    cfg = atc_config(a, c, np.full(8, 1e-3))
    table = verify_limit_convergence(cfg, ens, [1e-3, 1e-4, 1e-5])
    devs = [dev for _, dev in table]
    # the limit is zero here, so the deviation is the bias norm itself
    assert devs[0] / devs[1] == pytest.approx(10.0, rel=0.3)


def test_verify_limit_convergence_rejects_bad_schedules():
    cfg, ens = two_node_config()
    with pytest.raises(ValueError, match="decreasing"):
        verify_limit_convergence(cfg, ens, [1e-3, 1e-3])
    with pytest.raises(ValueError, match="decreasing"):
        verify_limit_convergence(cfg, ens, [1e-4, 1e-3])
    with pytest.raises(ValueError, match="bound"):
        verify_limit_convergence(cfg, ens, [2.0, 1e-3])


# --- spectral diagnostics ---------------------------------------------------------


def test_spectral_check_below_one_for_valid_config():
    cfg, ens = random_valid_config(0)
    assert spectral_check(cfg, ens) < 1.0


def test_error_propagation_at_zero_steps_has_unit_radius():
    from diffpareto.linalg import spectral_radius

    cfg, ens = random_valid_config(2)
    b = error_propagation_matrix(cfg.a1, cfg.a2, cfg.c, np.zeros(ens.n), ens)
    assert spectral_radius(b, tol=1e-11) == pytest.approx(1.0, abs=1e-8)


def test_spectral_check_warns_beyond_step_bound():
    eye = identity_combination(1)
    cfg = DiffusionConfig(a1=eye, a2=eye, c=eye, step_sizes=np.array([1.5]))
    ens = CostEnsemble(costs=(scalar_cost(1.0),), dim=1)
    with pytest.warns(RuntimeWarning, match="spectral radius"):
        rho = spectral_check(cfg, ens)
    assert rho == pytest.approx(2.0, abs=1e-9)  # |1 - 1.5 * 2|


def test_stacked_gradient_identity_at_optimum():
    for index in range(3):
        _, ens = random_valid_config(index)
        w_star = global_optimum(ens)
        g0 = stacked_gradient(ens, w_star).reshape(ens.n, ens.dim)
        scale = sum(np.linalg.norm(row) for row in g0)
        assert np.abs(g0.sum(axis=0)).max() <= 1e-9 * scale


def test_node_spread_shrinks_with_step_scale():
    cfg, ens = random_valid_config(3)
    omega0 = normalized_step_shape(cfg.step_sizes)
    spreads = []
    for mu in (1e-2, 1e-3, 1e-4):
        scaled = cfg.with_step_sizes(mu * omega0)
        per_node = closed_form_bias(scaled, ens).reshape(ens.n, ens.dim)
        spread = max(
            np.linalg.norm(per_node[i] - per_node[j])
            for i in range(ens.n)
            for j in range(i + 1, ens.n)
        )
        spreads.append(spread)
    assert spreads[1] < spreads[0]
    assert spreads[2] < spreads[1]


# --- report and serialization ------------------------------------------------------


def test_bias_report_round_trip():
    cfg, ens = two_node_config(mu=0.01)
    report = bias_report(cfg, ens, tol=1e-13)
    assert report.empirical_bias.shape == (2, 1)
    assert report.closed_form_bias.shape == (2,)
    assert report.limit_bias.shape == (1,)
    assert np.abs(report.empirical_bias.ravel() - report.closed_form_bias).max() <= 1e-9
    assert report.spectral_radius < 1.0
    assert not report.assumption3.satisfied

    text = report_to_json(report)
    doc = json.loads(text)
    assert set(doc) == {
        "empirical_bias",
        "closed_form_bias",
        "limit_bias",
        "spectral_radius",
        "assumption3",
    }
    assert set(doc["assumption3"]) == {"satisfied", "c0", "max_deviation"}
    assert doc["assumption3"]["satisfied"] is False
    assert doc["limit_bias"][0] == pytest.approx(1.0 / 7.0, abs=1e-10)
    # 17 significant digits: mantissa with 16 decimal places
    import re

    assert re.search(r"-?\d\.\d{16}e[+-]\d{2}", text)
