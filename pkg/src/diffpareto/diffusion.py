"""The diffusion recursion, run to its fixed point.

One iteration updates every node synchronously in three stages: combine
neighbor estimates (weights a1), take a gradient step on the combined
neighborhood gradient (weights c, per-node step size), then combine the
intermediate estimates again (weights a2). Because the combination
matrices are left-stochastic, both combination stages act through their
transposes on the node-major state array.

Presets cover the two classic orderings: adapt-then-combine (a1 = I,
a2 = A) and combine-then-adapt (a1 = A, a2 = I).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .costs import CostEnsemble, combine_gradient_offsets, combine_hessians, step_size_bounds
from .network import AssumptionError, CombinationMatrix, identity_combination

STRATEGY_TAGS = ("atc", "cta", "general")

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 1_000_000


class DivergenceError(RuntimeError):
    """The iteration produced a non-finite estimate."""

    def __init__(self, message: str, node: int, iteration: int):
        super().__init__(message)
        self.node = node
        self.iteration = iteration


@dataclass(frozen=True, eq=False)
class DiffusionConfig:
    """Combination matrices, per-node step sizes, and the strategy tag.

    a1 and a2 must combine columns (left- or doubly-stochastic); c must
    combine rows (right- or doubly-stochastic). Step sizes are validated
    for positivity here; the curvature-dependent upper bound is checked
    against a cost ensemble by validate_step_condition."""

    a1: CombinationMatrix
    a2: CombinationMatrix
    c: CombinationMatrix
    step_sizes: np.ndarray
    strategy_tag: str = "general"

    def __post_init__(self):
        if not self.a1.combines_columns() or not self.a2.combines_columns():
            raise ValueError("a1 and a2 must be left- or doubly-stochastic")
        if self.c.kind not in ("right_stochastic", "doubly_stochastic"):
            raise ValueError("c must be right- or doubly-stochastic")
        n = self.a1.n
        if self.a2.n != n or self.c.n != n:
            raise ValueError("combination matrices must share one size")
        steps = np.array(self.step_sizes, dtype=float)
        if steps.shape != (n,):
            raise ValueError(f"need {n} step sizes, got shape {steps.shape}")
        if not np.isfinite(steps).all() or (steps <= 0.0).any():
            raise ValueError("step sizes must be finite and strictly positive")
        if self.strategy_tag not in STRATEGY_TAGS:
            raise ValueError(f"strategy tag must be one of {STRATEGY_TAGS}")
        object.__setattr__(self, "step_sizes", steps)
        steps.setflags(write=False)

    @property
    def n(self) -> int:
        return self.a1.n

    def with_step_sizes(self, step_sizes) -> "DiffusionConfig":
        return DiffusionConfig(
            a1=self.a1, a2=self.a2, c=self.c,
            step_sizes=step_sizes, strategy_tag=self.strategy_tag,
        )


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    """Outcome of iterating to a fixed point."""

    w_infinity: np.ndarray
    iterations_used: int
    converged: bool
    final_update_norm: float


def preset_atc(a: CombinationMatrix) -> tuple[CombinationMatrix, CombinationMatrix]:
    """Adapt-then-combine factor pair (identity, a)."""
    if not a.combines_columns():
        raise ValueError("adapt-then-combine needs a left-stochastic matrix")
    return identity_combination(a.n), a


def preset_cta(a: CombinationMatrix) -> tuple[CombinationMatrix, CombinationMatrix]:
    """Combine-then-adapt factor pair (a, identity)."""
    if not a.combines_columns():
        raise ValueError("combine-then-adapt needs a left-stochastic matrix")
    return a, identity_combination(a.n)


def atc_config(a: CombinationMatrix, c: CombinationMatrix, step_sizes) -> DiffusionConfig:
    a1, a2 = preset_atc(a)
    return DiffusionConfig(a1=a1, a2=a2, c=c, step_sizes=step_sizes, strategy_tag="atc")


def cta_config(a: CombinationMatrix, c: CombinationMatrix, step_sizes) -> DiffusionConfig:
    a1, a2 = preset_cta(a)
    return DiffusionConfig(a1=a1, a2=a2, c=c, step_sizes=step_sizes, strategy_tag="cta")


def validate_step_condition(config: DiffusionConfig, ensemble: CostEnsemble) -> None:
    """Check Assumption 1 and the strict per-node step-size upper bound."""
    bounds = step_size_bounds(config.c, ensemble)  # raises if Assumption 1 fails
    over = config.step_sizes >= bounds
    if over.any():
        node = int(np.argmax(over))
        raise AssumptionError(
            f"step size {config.step_sizes[node]:.6g} at node {node} is not below"
            f" its stability bound {bounds[node]:.6g}"
        )


class _StepOperator:
    """Precompiled one-iteration map for a quadratic ensemble.

    For quadratics the gradient stage is affine in the evaluation point,
    so the whole update per node k is (I - mu_k * R_k) phi_k + mu_k * d_k
    with R_k and d_k the c-combined Hessians and offsets. Identity
    combination factors are skipped entirely."""

    def __init__(self, config: DiffusionConfig, ensemble: CostEnsemble):
        n, m = ensemble.n, ensemble.dim
        if config.n != n:
            raise ValueError(f"config is for {config.n} nodes, ensemble has {n}")
        mu = config.step_sizes
        r = combine_hessians(config.c, ensemble)
        d = combine_gradient_offsets(config.c, ensemble)
        self.gain = np.eye(m)[None, :, :] - mu[:, None, None] * r
        self.offset = mu[:, None] * d
        eye = np.eye(n)
        self.a1t = None if np.array_equal(config.a1.matrix, eye) else config.a1.matrix.T.copy()
        self.a2t = None if np.array_equal(config.a2.matrix, eye) else config.a2.matrix.T.copy()
        self.shape = (n, m)

    def apply(self, w: np.ndarray) -> np.ndarray:
        phi = w if self.a1t is None else self.a1t @ w
        psi = np.einsum("kij,kj->ki", self.gain, phi) + self.offset
        return psi if self.a2t is None else self.a2t @ psi


def _as_state(iterate, shape: tuple[int, int]) -> np.ndarray:
    w = np.array(iterate, dtype=float)
    if w.shape != shape:
        raise ValueError(f"state must have shape {shape}, got {w.shape}")
    if not np.isfinite(w).all():
        raise ValueError("state entries must be finite")
    return w


def step(iterate, config: DiffusionConfig, ensemble: CostEnsemble) -> np.ndarray:
    """One synchronous update of all nodes from the previous iterate.

    ``iterate`` is the node-major state array of shape (N, M); the return
    value is the next state."""
    op = _StepOperator(config, ensemble)
    w = _as_state(iterate, op.shape)
    out = op.apply(w)
    if not np.isfinite(out).all():
        node = int(np.argmax(~np.isfinite(out).all(axis=1)))
        raise DivergenceError(
            f"non-finite estimate at node {node} after one step", node=node, iteration=1
        )
    return out


def run_to_fixed_point(
    config: DiffusionConfig,
    ensemble: CostEnsemble,
    init=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    trace=None,
) -> FixedPointResult:
    """Iterate until every node's update is below tol * (1 + |w_k|).

    The mixed absolute/relative test keeps the criterion meaningful when
    the optimum is far from the origin. The fixed point is unique under
    the standing assumptions, so ``init`` (default all-zeros) only affects
    the iteration count. Exhausting ``max_iter`` is reported through
    ``converged=False`` rather than an exception; a non-finite iterate
    raises DivergenceError.

    ``trace``, when given, is called with (iteration, max update norm)
    after every step.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least one")
    validate_step_condition(config, ensemble)
    op = _StepOperator(config, ensemble)
    w = np.zeros(op.shape) if init is None else _as_state(init, op.shape)
    apply_ = op.apply
    einsum = np.einsum
    tol2 = tol * tol
    iterations = 0
    worst = np.inf
    converged = False
    for iterations in range(1, max_iter + 1):
        wn = apply_(w)
        diff = wn - w
        upd2 = einsum("ki,ki->k", diff, diff)
        worst = float(upd2.max())
        if not math.isfinite(worst):
            node = int(np.argmax(~np.isfinite(upd2)))
            raise DivergenceError(
                f"iteration diverged: non-finite estimate at node {node}"
                f" on iteration {iterations}",
                node=node,
                iteration=iterations,
            )
        if trace is not None:
            trace(iterations, math.sqrt(worst))
        w = wn
        if worst <= tol2:
            # (1 + |w_k|) >= 1, so every node already satisfies its test
            converged = True
            break
        norms2 = einsum("ki,ki->k", wn, wn)
        gate = tol * (1.0 + math.sqrt(float(norms2.max())))
        if worst <= gate * gate:
            # the largest update clears the loosest per-node threshold;
            # only now is the exact per-node comparison worth its sqrt
            rhs = tol * (1.0 + np.sqrt(norms2))
            if (upd2 <= rhs * rhs).all():
                converged = True
                break
    w.setflags(write=False)
    return FixedPointResult(
        w_infinity=w,
        iterations_used=iterations,
        converged=converged,
        final_update_norm=math.sqrt(worst),
    )
