"""Leader-rooted directed communication graphs.

Edge convention, used everywhere in this package: ``weights[i, j] > 0``
means agent ``j`` transmits to agent ``i`` (information flows j -> i).
Agent 0 is the leader; it receives nothing, so row 0 is all zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SingularFollowerBlock(Exception):
    """The follower block of the Laplacian is numerically singular,
    which signals that the graph is not leader-rooted."""


class NoConvergence(Exception):
    """The distributed fixed-point iteration did not reach its tolerance
    within the iteration cap (numerically ill-conditioned weights)."""


@dataclass(frozen=True, eq=False)
class DirectedGraph:
    """Weighted directed graph over one leader (index 0) and N followers.

    ``weights`` is (N+1)x(N+1), nonnegative, zero diagonal, zero leader
    row, and every follower has at least one incoming edge. Whether the
    leader actually roots the graph is checked by :func:`is_leader_rooted`
    and, indirectly, by :func:`laplacian`.
    """

    num_followers: int
    weights: np.ndarray

    def __post_init__(self):
        W = np.array(self.weights, dtype=float)
        N = self.num_followers
        if N < 1:
            raise ValueError("at least one follower required")
        if W.shape != (N + 1, N + 1):
            raise ValueError(f"weights must be ({N + 1}, {N + 1}), got {W.shape}")
        if np.any(W < 0):
            raise ValueError("weights must be nonnegative")
        if np.any(np.diagonal(W) != 0):
            raise ValueError("self-loops are excluded (diagonal must be zero)")
        if np.any(W[0] != 0):
            raise ValueError("leader row must be zero (the leader receives nothing)")
        if np.any(W[1:].sum(axis=1) <= 0):
            raise ValueError("every follower needs at least one incoming edge")
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)

    @staticmethod
    def from_edges(num_followers: int, edges) -> "DirectedGraph":
        """Build from (receiver, sender, weight) triples."""
        W = np.zeros((num_followers + 1, num_followers + 1))
        for i, j, w in edges:
            W[int(i), int(j)] = float(w)
        return DirectedGraph(num_followers, W)


@dataclass(frozen=True, eq=False)
class LaplacianDecomposition:
    full_laplacian: np.ndarray
    follower_block: np.ndarray
    min_singular_value: float = field(default=0.0)


def laplacian(g: DirectedGraph, rel_tol: float = 1e-9) -> LaplacianDecomposition:
    """Graph Laplacian and its follower block.

    L has off-diagonal entries -w_ij and diagonal row sums; deleting the
    leader row/column leaves the follower block, which is invertible
    exactly when the leader roots the graph.

    Raises SingularFollowerBlock when the minimum singular value of the
    follower block falls below ``rel_tol`` times its spectral norm.
    """
    W = g.weights
    L = np.where(W > 0, -W, 0.0)  # avoids negative zeros
    np.fill_diagonal(L, W.sum(axis=1))
    Lt = L[1:, 1:]
    svals = np.linalg.svd(Lt, compute_uv=False)
    smin, smax = float(svals[-1]), float(svals[0])
    if smin <= rel_tol * max(smax, 1e-300):
        raise SingularFollowerBlock(
            f"follower block singular (sigma_min={smin:.3e}); graph is not leader-rooted"
        )
    L.setflags(write=False)
    Ltv = Lt.copy()
    Ltv.setflags(write=False)
    return LaplacianDecomposition(L, Ltv, smin)


def is_leader_rooted(g: DirectedGraph) -> bool:
    """True iff every follower is reachable from the leader along the
    direction of information flow (sender -> receiver)."""
    W = g.weights
    N = g.num_followers
    reached = np.zeros(N + 1, dtype=bool)
    reached[0] = True
    stack = [0]
    while stack:
        j = stack.pop()
        # j informs i whenever W[i, j] > 0
        for i in np.nonzero(W[:, j] > 0)[0]:
            if not reached[i]:
                reached[i] = True
                stack.append(int(i))
    return bool(reached.all())


def _follower_topo_order(W: np.ndarray) -> list[int] | None:
    """Topological order of followers under follower->follower dependencies,
    or None when those dependencies contain a cycle."""
    N = W.shape[0] - 1
    deps = {i: set(np.nonzero(W[i, 1:] > 0)[0] + 1) for i in range(1, N + 1)}
    order: list[int] = []
    ready = [i for i in range(1, N + 1) if not deps[i]]
    deps = {i: d for i, d in deps.items() if d}
    while ready:
        i = ready.pop()
        order.append(i)
        for k in list(deps):
            deps[k].discard(i)
            if not deps[k]:
                ready.append(k)
                del deps[k]
    return order if len(order) == N else None


def solve_transmitted(
    g: DirectedGraph,
    M: np.ndarray,
    states,
    tol: float = 1e-12,
    damping: float = 1.0,
) -> np.ndarray:
    """Distributed fixed point of the transmitted-vector recursion.

    Each follower averages, over its in-neighbors j, the quantity
    M(x_i - x_j) + omega_j; the leader transmits zero. Acyclic
    follower dependencies are resolved by one forward-substitution pass;
    otherwise the map is iterated (Jacobi style, optional damping) to
    ``tol``, with an iteration cap of 10*N*n.

    Args:
        g: leader-rooted graph.
        M: (m, n) mixing matrix applied to state differences.
        states: N+1 state vectors of dimension n (leader first).

    Returns:
        (N, m) array of transmitted vectors for followers 1..N.

    Raises:
        NoConvergence: iteration cap exceeded before reaching ``tol``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    X = np.asarray(states, dtype=float)
    N = g.num_followers
    m, n = M.shape
    if X.shape != (N + 1, n):
        raise ValueError(f"states must be ({N + 1}, {n}), got {X.shape}")
    W = g.weights
    rowsum = W[1:].sum(axis=1)
    MX = X @ M.T  # (N+1, m)

    order = _follower_topo_order(W)
    omega = np.zeros((N + 1, m))
    if order is not None:
        for i in order:
            wi = W[i]
            nz = np.nonzero(wi)[0]
            acc = np.zeros(m)
            for j in nz:
                acc += wi[j] * (MX[i] - MX[j] + omega[j])
            omega[i] = acc / rowsum[i - 1]
        return omega[1:]

    # cyclic follower dependencies: damped Jacobi iteration of the map
    cap = max(10 * N * n, 50)
    scale = 1.0 + float(np.max(np.abs(MX)))
    for _ in range(cap):
        prev = omega.copy()
        for i in range(1, N + 1):
            wi = W[i]
            nz = np.nonzero(wi)[0]
            acc = np.zeros(m)
            for j in nz:
                acc += wi[j] * (MX[i] - MX[j] + prev[j])
            omega[i] = (1.0 - damping) * prev[i] + damping * acc / rowsum[i - 1]
        if np.max(np.abs(omega - prev)) <= tol * scale:
            return omega[1:]
    raise NoConvergence(
        f"transmitted-vector iteration exceeded {cap} iterations at tol={tol:g}"
    )
