"""Network topologies and combination matrices.

A topology is an undirected connected graph with closed neighborhoods
(every node is its own neighbor). Combination matrices assign the
weights nodes place on their neighbors' messages; the three standard
constructions are the averaging, relative-degree, and Metropolis rules.
The Perron vector of the composite combination matrix drives all of the
small-step-size bias analysis, and Assumption 3 is the joint condition
on combination matrices and step sizes under which that bias vanishes.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import as_matrix, as_vector, dominant_eigpair
from .rng import SplitMix64

LEFT_STOCHASTIC = "left_stochastic"
RIGHT_STOCHASTIC = "right_stochastic"
DOUBLY_STOCHASTIC = "doubly_stochastic"

A_RULES = ("averaging", "relative_degree", "metropolis")
C_RULES = ("averaging", "relative_degree", "identity")

STOCHASTICITY_TOL = 1e-12
ASSUMPTION3_DEFAULT_TOL = 1e-8

# generating a connected graph requires the average open degree to be
# reachable within +-0.5 of the request
_DEGREE_SLACK = 0.5


class AssumptionError(ValueError):
    """A standing assumption of the algorithm is violated."""


@dataclass(frozen=True, eq=False)
class Topology:
    """Undirected connected graph over ``n_nodes`` with closed neighborhoods.

    ``adjacency`` is boolean, symmetric, with an all-true diagonal. ``seed``
    records the stream that generated it (0 for deserialized topologies).
    """

    n_nodes: int
    adjacency: np.ndarray
    seed: int = 0

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.shape != (self.n_nodes, self.n_nodes):
            raise ValueError(
                f"adjacency shape {adj.shape} does not match n_nodes={self.n_nodes}"
            )
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if not adj.diagonal().all():
            raise ValueError("neighborhoods are closed: the diagonal must be true")
        object.__setattr__(self, "adjacency", adj)
        if not self._connected():
            raise ValueError("topology must be a single connected component")
        adj.setflags(write=False)

    def _connected(self) -> bool:
        seen = np.zeros(self.n_nodes, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            u = stack.pop()
            for v in np.nonzero(self.adjacency[u])[0]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        return bool(seen.all())

    @property
    def degrees(self) -> np.ndarray:
        """Closed-neighborhood sizes (self included)."""
        return self.adjacency.sum(axis=0)

    @property
    def n_edges(self) -> int:
        """Undirected edges, self-loops excluded."""
        return int((self.adjacency.sum() - self.n_nodes) // 2)


@dataclass(frozen=True, eq=False)
class CombinationMatrix:
    """Nonnegative weight matrix with a declared stochasticity kind."""

    matrix: np.ndarray
    kind: str
    rule: str = "custom"

    def __post_init__(self):
        m = as_matrix(self.matrix)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"combination matrix must be square, got {m.shape}")
        if (m < 0).any():
            raise ValueError("combination matrix entries must be nonnegative")
        if self.kind not in (LEFT_STOCHASTIC, RIGHT_STOCHASTIC, DOUBLY_STOCHASTIC):
            raise ValueError(f"unknown stochasticity kind {self.kind!r}")
        if self.kind in (LEFT_STOCHASTIC, DOUBLY_STOCHASTIC):
            dev = np.abs(m.sum(axis=0) - 1.0).max()
            if dev > STOCHASTICITY_TOL:
                raise ValueError(f"columns must sum to one (max deviation {dev:.3e})")
        if self.kind in (RIGHT_STOCHASTIC, DOUBLY_STOCHASTIC):
            dev = np.abs(m.sum(axis=1) - 1.0).max()
            if dev > STOCHASTICITY_TOL:
                raise ValueError(f"rows must sum to one (max deviation {dev:.3e})")
        object.__setattr__(self, "matrix", m)
        m.setflags(write=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def combines_columns(self) -> bool:
        """True when columns are the convex combinations (left stochastic)."""
        return self.kind in (LEFT_STOCHASTIC, DOUBLY_STOCHASTIC)


@dataclass(frozen=True, eq=False)
class PerronData:
    """Perron vector of the composite combination matrix and the composite itself."""

    theta: np.ndarray
    composite: np.ndarray


@dataclass(frozen=True)
class Assumption3Report:
    """Result of checking that the weighted step-size row vector is constant."""

    satisfied: bool
    c0_estimate: float
    max_deviation: float
    tolerance: float = field(default=ASSUMPTION3_DEFAULT_TOL)


def _prufer_tree_edges(n: int, rng: SplitMix64) -> list[tuple[int, int]]:
    """Uniformly random labeled spanning tree, decoded from a random sequence."""
    if n == 2:
        return [(0, 1)]
    seq = [rng.below(n) for _ in range(n - 2)]
    degree = [1] * n
    for s in seq:
        degree[s] += 1
    leaves = [i for i in range(n) if degree[i] == 1]
    heapq.heapify(leaves)
    edges = []
    for s in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, s))
        degree[s] -= 1
        if degree[s] == 1:
            heapq.heappush(leaves, s)
    u = heapq.heappop(leaves)
    v = heapq.heappop(leaves)
    edges.append((u, v))
    return edges


def generate_topology(n: int, target_avg_degree: float, seed: int) -> Topology:
    """Connected random graph whose average open degree is within 0.5 of target.

    Starts from a uniformly random spanning tree (connectivity for free),
    then adds distinct random edges until the edge count nearest the target
    average degree is reached. Deterministic in (n, target_avg_degree, seed).
    """
    if n < 2:
        raise ValueError("need at least two nodes")
    if not (1.0 <= target_avg_degree < n):
        raise ValueError(
            f"target average degree must lie in [1, n), got {target_avg_degree}"
        )
    max_edges = n * (n - 1) // 2
    want = int(math.floor(n * target_avg_degree / 2.0 + 0.5))
    want = max(n - 1, min(want, max_edges))
    if abs(2.0 * want / n - target_avg_degree) > _DEGREE_SLACK + 1e-12:
        raise ValueError(
            f"average degree {target_avg_degree} is unreachable on a connected"
            f" graph of {n} nodes"
        )
    rng = SplitMix64(seed)
    edges = {(min(u, v), max(u, v)) for u, v in _prufer_tree_edges(n, rng)}
    while len(edges) < want:
        u = rng.below(n)
        v = rng.below(n)
        if u == v:
            continue
        edges.add((min(u, v), max(u, v)))
    adjacency = np.eye(n, dtype=bool)
    for u, v in edges:
        adjacency[u, v] = True
        adjacency[v, u] = True
    return Topology(n_nodes=n, adjacency=adjacency, seed=seed)


def _left_stochastic_by_rule(topology: Topology, rule: str) -> np.ndarray:
    adj = topology.adjacency
    deg = topology.degrees.astype(float)
    n = topology.n_nodes
    a = np.zeros((n, n))
    if rule == "averaging":
        # off-diagonal neighbors get 1/n_k, the diagonal absorbs the rest
        for k in range(n):
            for l in np.nonzero(adj[:, k])[0]:
                if l != k:
                    a[l, k] = 1.0 / deg[k]
            a[k, k] = 1.0 - a[:, k].sum()
    elif rule == "relative_degree":
        weighted = deg[:, None] * adj
        a = weighted / weighted.sum(axis=0)
    elif rule == "metropolis":
        off = adj / np.maximum.outer(deg, deg)
        np.fill_diagonal(off, 0.0)
        a = off
        np.fill_diagonal(a, 1.0 - off.sum(axis=0))
    else:
        raise ValueError(f"unknown combination rule {rule!r}")
    return a


def build_A(topology: Topology, rule: str) -> CombinationMatrix:
    """Left-stochastic combination matrix by the named rule.

    The Metropolis rule produces a symmetric, hence doubly-stochastic,
    matrix; all rules keep a strictly positive diagonal and place weight
    only inside closed neighborhoods.
    """
    if rule not in A_RULES:
        raise ValueError(f"rule must be one of {A_RULES}, got {rule!r}")
    a = _left_stochastic_by_rule(topology, rule)
    kind = DOUBLY_STOCHASTIC if rule == "metropolis" else LEFT_STOCHASTIC
    return CombinationMatrix(matrix=a, kind=kind, rule=rule)


def build_C(topology: Topology, rule: str) -> CombinationMatrix:
    """Right-stochastic gradient-exchange matrix.

    The averaging and relative-degree rules produce the transpose of the
    left-stochastic matrix they would build; the identity rule disables
    gradient exchange."""
    if rule not in C_RULES:
        raise ValueError(f"rule must be one of {C_RULES}, got {rule!r}")
    if rule == "identity":
        return identity_combination(topology.n_nodes)
    c = _left_stochastic_by_rule(topology, rule).T
    return CombinationMatrix(matrix=c, kind=RIGHT_STOCHASTIC, rule=rule)


def identity_combination(n: int) -> CombinationMatrix:
    return CombinationMatrix(matrix=np.eye(n), kind=DOUBLY_STOCHASTIC, rule="identity")


def check_primitive(p) -> bool:
    """True iff some power of the nonnegative matrix is entrywise positive.

    Uses the boolean sparsity pattern and the Wielandt exponent bound
    K = N^2 - 2N + 2: a nonnegative N x N matrix is primitive exactly when
    the K-th power of its pattern is full. Binary exponentiation on
    boolean matrices keeps the test exact."""
    p = as_matrix(p)
    if p.shape[0] != p.shape[1]:
        raise ValueError(f"matrix must be square, got {p.shape}")
    if (p < 0).any():
        raise ValueError("primitivity is defined for nonnegative matrices only")
    n = p.shape[0]
    if n == 1:
        return bool(p[0, 0] > 0)
    exponent = n * n - 2 * n + 2
    base = p > 0
    acc = np.eye(n, dtype=bool)
    e = exponent
    while e:
        if e & 1:
            acc = (acc.astype(np.uint8) @ base.astype(np.uint8)) > 0
        base_next = (base.astype(np.uint8) @ base.astype(np.uint8)) > 0
        base = base_next
        e >>= 1
    return bool(acc.all())


def perron_theta(a1: CombinationMatrix, a2: CombinationMatrix) -> PerronData:
    """Perron vector of the composite combination matrix a1 @ a2.

    The composite must be primitive (Assumption 2); its unique eigenvalue
    at one has a nonnegative right eigenvector, returned normalized so the
    entries sum to one."""
    composite = a1.matrix @ a2.matrix
    if not check_primitive(composite):
        raise AssumptionError(
            "Assumption 2 violated: the composite combination matrix is not primitive"
        )
    # tighter-than-default tolerance: downstream constants inherit this accuracy
    eigenvalue, theta = dominant_eigpair(composite, tol=1e-13)
    if abs(eigenvalue - 1.0) > 1e-8:
        raise AssumptionError(
            f"Assumption 2 violated: dominant eigenvalue {eigenvalue!r} is not one"
        )
    composite.setflags(write=False)
    return PerronData(theta=theta, composite=composite)


def check_assumption3(
    theta,
    a2: CombinationMatrix,
    omega0,
    c: CombinationMatrix,
    tol: float = ASSUMPTION3_DEFAULT_TOL,
) -> Assumption3Report:
    """Check that the weighted row vector built from (theta, a2, omega0, c)
    is constant, i.e. equals c0 times the all-ones row.

    ``omega0`` holds the normalized step sizes (entries in (0, 1], max one).
    The constant is estimated as the mean of the vector; the report carries
    the max-norm deviation from it."""
    theta = as_vector(theta)
    omega0 = as_vector(omega0)
    n = theta.shape[0]
    if a2.n != n or c.n != n or omega0.shape[0] != n:
        raise ValueError(
            f"dimension mismatch: theta has {n} entries, a2 is {a2.n}x{a2.n},"
            f" omega0 has {omega0.shape[0]}, c is {c.n}x{c.n}"
        )
    if (omega0 <= 0).any() or abs(omega0.max() - 1.0) > 1e-12:
        raise ValueError("normalized step sizes must lie in (0, 1] with max one")
    z = omega0 * (a2.matrix @ theta)
    v = c.matrix @ z
    c0 = float(v.mean())
    max_dev = float(np.abs(v - c0).max())
    return Assumption3Report(
        satisfied=max_dev <= tol, c0_estimate=c0, max_deviation=max_dev, tolerance=tol
    )


def design_step_sizes_for_assumption3(
    a1: CombinationMatrix, a2: CombinationMatrix, mu_max: float
) -> np.ndarray:
    """Step sizes that satisfy the constant-row condition with identity C.

    Scales each node inversely to its entry of a2 @ theta, so the weighted
    vector is constant by construction; the largest step equals mu_max."""
    if mu_max <= 0:
        raise ValueError("mu_max must be positive")
    theta = perron_theta(a1, a2).theta
    u = a2.matrix @ theta
    if (u == 0.0).any():
        raise ValueError(
            "cannot design step sizes: a2 @ theta has a zero entry at node"
            f" {int(np.argmin(u != 0.0))}"
        )
    return mu_max * u.min() / u


def topology_to_edge_list(topology: Topology) -> str:
    """Plain-text edge list: 'N <count>' then one 'u v' line per edge."""
    lines = [f"N {topology.n_nodes}"]
    adj = topology.adjacency
    for u in range(topology.n_nodes):
        for v in range(u + 1, topology.n_nodes):
            if adj[u, v]:
                lines.append(f"{u} {v}")
    return "\n".join(lines) + "\n"


def topology_from_edge_list(text: str) -> Topology:
    """Parse the edge-list format produced by topology_to_edge_list."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("N "):
        raise ValueError("edge list must start with a 'N <count>' header")
    n = int(lines[0].split()[1])
    adjacency = np.eye(n, dtype=bool)
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise ValueError(f"malformed edge line {ln!r}")
        u, v = int(parts[0]), int(parts[1])
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"edge {ln!r} references a node outside 0..{n - 1}")
        if u == v:
            raise ValueError("self-loops are implied and must be omitted")
        adjacency[u, v] = True
        adjacency[v, u] = True
    return Topology(n_nodes=n, adjacency=adjacency, seed=0)
