"""Discrete optimal transport: an exact transportation simplex and Sinkhorn.

The exact solver is a dense transportation simplex (north-west corner start,
MODI potentials, spanning-tree pivots).  Entering cells follow Dantzig's rule
and fall back to Bland's rule after a run of degenerate pivots, which rules
out cycling.  A solved basis can be handed back in as a warm start when only
the cost changes, which is how the Frank-Wolfe oracle uses it.

Sinkhorn solves ``min <C, P> + eps * KL(P | 1 x 1)`` over couplings.  It
starts in plain scaling form and switches to a log-stabilised form (potentials
absorbed into the kernel) as soon as a scaling vector leaves
``[1e-300, 1e300]`` or the kernel underflows.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionMismatch, MaxIterExceeded, NumericalUnderflow, ShapeMismatch, SolverFailure
from .measure import DiscreteMeasure

log = logging.getLogger(__name__)

MARGINAL_TOL = 1e-8


@dataclass
class TransportPlan:
    matrix: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    cost: float

    def marginal_error(self) -> float:
        """Largest absolute deviation of row/column sums from the marginals."""
        return max(
            float(np.abs(self.matrix.sum(axis=1) - self.row_marginal).max()),
            float(np.abs(self.matrix.sum(axis=0) - self.col_marginal).max()),
        )


def sq_euclidean_cost(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Squared Euclidean cost matrix ``|x_i - y_j|^2``.

    Accumulated coordinate by coordinate (not via the Gram identity) so that
    coincident atoms get an exact zero.
    """
    c = np.zeros((x.shape[0], y.shape[0]))
    for k in range(x.shape[1]):
        c += (x[:, k, None] - y[None, :, k]) ** 2
    return c


def _weights(m) -> np.ndarray:
    if isinstance(m, DiscreteMeasure):
        return np.asarray(m.weights)
    return np.asarray(m, dtype=float).reshape(-1)


# ---------------------------------------------------------------- exact solver


@dataclass
class SimplexBasis:
    """Spanning-tree basis of a transportation problem: ``n + m - 1`` cells and their flows."""

    cells: list
    flows: dict


def _northwest_corner(a: np.ndarray, b: np.ndarray) -> SimplexBasis:
    n, m = len(a), len(b)
    ra, rb = a.astype(float).copy(), b.astype(float).copy()
    i = j = 0
    cells, flows = [], {}
    while True:
        x = min(ra[i], rb[j])
        cells.append((i, j))
        flows[(i, j)] = max(x, 0.0)
        ra[i] -= x
        rb[j] -= x
        if i == n - 1 and j == m - 1:
            break
        if j == m - 1 or (i < n - 1 and ra[i] <= rb[j]):
            i += 1
        else:
            j += 1
    return SimplexBasis(cells, flows)


def _adjacency(cells, n: int, m: int) -> list:
    adj = [set() for _ in range(n + m)]
    for i, j in cells:
        adj[i].add(n + j)
        adj[n + j].add(i)
    return adj


def _rooted_tree(cost: np.ndarray, adj, n: int, m: int):
    """Root the basis tree at row 0: potentials with ``u_0 = 0``, parents and depths.

    ``u_i + v_j = c_ij`` holds on every basic cell.
    """
    N = n + m
    pot = np.full(N, np.nan)
    parent = [-1] * N
    depth = [0] * N
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if np.isnan(pot[nb]):
                if node < n:
                    pot[nb] = cost[node, nb - n] - pot[node]
                else:
                    pot[nb] = cost[nb, node - n] - pot[node]
                parent[nb] = node
                depth[nb] = depth[node] + 1
                queue.append(nb)
    if np.isnan(pot).any():
        raise SolverFailure("transportation basis is not a spanning tree")
    return pot[:n].copy(), pot[n:].copy(), parent, depth


def _tree_path(parent, depth, start: int, goal: int) -> list:
    """Nodes on the tree path from ``start`` to ``goal`` (both included)."""
    head, tail = [start], [goal]
    x, y = start, goal
    while x != y:
        if depth[x] >= depth[y]:
            x = parent[x]
            head.append(x)
        else:
            y = parent[y]
            tail.append(y)
    return head + tail[-2::-1]


def _rehang(adj, parent, depth, q: int, p: int) -> list:
    """Hang the component of ``q`` (already cut from the tree) below ``p``.

    Rewrites parents and depths inside the component and returns its nodes.
    """
    parent[q] = p
    depth[q] = depth[p] + 1
    nodes = [q]
    queue = deque([q])
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if nb != parent[node]:
                parent[nb] = node
                depth[nb] = depth[node] + 1
                nodes.append(nb)
                queue.append(nb)
    return nodes


def transport_simplex(
    cost: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    basis: Optional[SimplexBasis] = None,
    max_pivots: Optional[int] = None,
    degenerate_streak: Optional[int] = None,
):
    """Exact minimiser of ``<cost, P>`` over couplings of ``a`` and ``b``.

    Parameters
    ----------
    cost : (n, m) array
    a, b : nonnegative marginals with equal totals.
    basis : a feasible basis for the same marginals (warm start).  Its flows
        are reused verbatim, so it must come from a previous solve with
        identical ``a`` and ``b``.
    max_pivots : pivot budget; ``SolverFailure`` if exceeded.
    degenerate_streak : consecutive zero-length pivots tolerated under
        Dantzig's rule before switching to Bland's rule (default ``n + m``).
        The next nondegenerate pivot switches back.

    Returns
    -------
    plan : (n, m) array
    basis : SimplexBasis usable as the next warm start.
    """
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    if a.shape[0] != n or b.shape[0] != m:
        raise ShapeMismatch(f"cost {cost.shape} vs marginals {a.shape[0]}, {b.shape[0]}")
    if not np.all(np.isfinite(cost)):
        raise SolverFailure("cost matrix contains non-finite entries")
    if basis is None:
        basis = _northwest_corner(a, b)
    else:
        basis = SimplexBasis(list(basis.cells), dict(basis.flows))
    if max_pivots is None:
        max_pivots = 50 * (n + m) * max(n, m) + 1000
    if degenerate_streak is None:
        degenerate_streak = n + m

    scale = 1.0 + float(np.abs(cost).max()) if cost.size else 1.0
    tol = 1e-12 * scale
    cells, flows = basis.cells, basis.flows
    in_basis = np.zeros((n, m), dtype=bool)
    for c in cells:
        in_basis[c] = True
    bland = False
    streak = 0
    adj = _adjacency(cells, n, m)
    u, v, parent, depth = _rooted_tree(cost, adj, n, m)
    fresh = True

    for _ in range(max_pivots):
        reduced = cost - u[:, None] - v[None, :]
        reduced[in_basis] = 0.0
        if bland:
            candidates = np.flatnonzero(reduced < -tol)
            flat = int(candidates[0]) if candidates.size else -1
        else:
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -tol:
                flat = -1
        if flat < 0:
            if fresh:
                break
            # potentials were updated incrementally; confirm optimality from scratch
            u, v, parent, depth = _rooted_tree(cost, adj, n, m)
            fresh = True
            continue
        ei, ej = divmod(flat, m)
        r = float(reduced.flat[flat])

        # cycle: entering cell, then the tree path from column ej back to row ei
        path = _tree_path(parent, depth, n + ej, ei)
        cycle = []
        for p, q in zip(path[:-1], path[1:]):
            cycle.append((q, p - n) if p >= n else (p, q - n))
        minus = cycle[0::2]
        plus = cycle[1::2]
        theta = min(flows[c] for c in minus)
        leaving_candidates = [c for c in minus if flows[c] <= theta]
        leaving = min(leaving_candidates) if bland else leaving_candidates[0]
        cut = 2 * minus.index(leaving)

        for c in minus:
            flows[c] = max(flows[c] - theta, 0.0)
        for c in plus:
            flows[c] += theta
        flows[(ei, ej)] = theta
        del flows[leaving]
        cells.remove(leaving)
        cells.append((ei, ej))
        in_basis[leaving] = False
        in_basis[ei, ej] = True

        # The leaving edge splits the path; the half away from the root is
        # re-hung below the entering edge and its potentials shifted.
        li, lj = leaving
        adj[li].discard(n + lj)
        adj[n + lj].discard(li)
        lower = path[cut] if parent[path[cut]] == path[cut + 1] else path[cut + 1]
        col_side = lower == path[cut]  # subtree holds the column end of the entering edge
        q, p = (n + ej, ei) if col_side else (ei, n + ej)
        side = np.array(_rehang(adj, parent, depth, q, p))
        adj[ei].add(n + ej)
        adj[n + ej].add(ei)
        rows, cols = side[side < n], side[side >= n] - n
        delta = -r if col_side else r
        u[rows] += delta
        v[cols] -= delta
        fresh = False

        if theta <= 0.0:
            streak += 1
            if streak >= degenerate_streak and not bland:
                log.debug("transport simplex: switching to Bland's rule after %d degenerate pivots", streak)
                bland = True
        else:
            streak = 0
            bland = False
    else:
        raise SolverFailure(f"transportation simplex exceeded {max_pivots} pivots")

    plan = np.zeros((n, m))
    for (i, j), f in flows.items():
        plan[i, j] = f
    return plan, SimplexBasis(cells, flows)


def w2_exact(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Exact 2-Wasserstein distance and an optimal coupling.

    Returns
    -------
    distance : float
    plan : TransportPlan whose ``cost`` is the squared distance.
    """
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"dimensions {mu.dim} and {nu.dim} differ")
    cost = sq_euclidean_cost(mu.points, nu.points)
    a, b = np.asarray(mu.weights), np.asarray(nu.weights)
    plan, _ = transport_simplex(cost, a, b)
    value = max(float(np.sum(plan * cost)), 0.0)
    return float(np.sqrt(value)), TransportPlan(plan, a.copy(), b.copy(), value)


# ---------------------------------------------------------------- Sinkhorn


@dataclass
class SinkhornResult:
    plan: np.ndarray
    f: np.ndarray
    g: np.ndarray
    iterations: int
    marginal_error: float
    converged: bool
    log_domain: bool

    def as_plan(self, a, b, cost) -> TransportPlan:
        return TransportPlan(self.plan, a, b, float(np.sum(self.plan * cost)))


SCALING_BOUNDS = (1e-300, 1e300)
ABSORB_AT = 1e50


def sinkhorn(
    mu,
    nu,
    cost: np.ndarray,
    epsilon: float,
    tol: float = 1e-9,
    max_iter: int = 10_000,
    log_domain: Optional[bool] = None,
    init: Optional[tuple] = None,
    check_every: int = 10,
    strict: bool = False,
) -> SinkhornResult:
    """Entropic OT between weight vectors (or measures) ``mu`` and ``nu``.

    Minimises ``<cost, P> + epsilon * KL(P | 1 x 1)`` over couplings.  On the
    coupling polytope this differs from ``KL(P | mu x nu)`` by a constant, so
    both references share the same optimiser.

    ``log_domain``: ``None`` switches automatically, ``True`` forces the
    stabilised form, ``False`` forbids it and raises ``NumericalUnderflow``
    where the switch would happen.  ``init = (f, g)`` warm-starts from dual
    potentials (implies the stabilised form).  When ``max_iter`` runs out the
    best iterate is returned with ``converged=False``, or ``MaxIterExceeded``
    is raised if ``strict``.
    """
    a, b = _weights(mu), _weights(nu)
    cost = np.asarray(cost, dtype=float)
    n, m = len(a), len(b)
    if cost.shape != (n, m):
        raise ShapeMismatch(f"cost shape {cost.shape} != ({n}, {m})")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if n == 1 or m == 1:
        plan = np.outer(a, b)
        return SinkhornResult(plan, np.zeros(n), np.zeros(m), 0, 0.0, True, False)

    f = np.zeros(n) if init is None else np.array(init[0], dtype=float)
    g = np.zeros(m) if init is None else np.array(init[1], dtype=float)
    stabilised = bool(log_domain) or init is not None

    def kernel():
        return np.exp((f[:, None] + g[None, :] - cost) / epsilon)

    def log_update():
        # one exact log-domain sweep; leaves every column marginal satisfied
        nonlocal f, g
        f = epsilon * np.log(a) - epsilon * logsumexp((g[None, :] - cost) / epsilon, axis=1)
        g = epsilon * np.log(b) - epsilon * logsumexp((f[:, None] - cost) / epsilon, axis=0)

    if stabilised:
        log_update()
    K = kernel()
    u, v = np.ones(n), np.ones(m)
    err = np.inf
    it = 0
    lo, hi = SCALING_BOUNDS
    while it < max_iter:
        it += 1
        # overflow or 0/0 here is detected below and triggers the log-domain switch
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            u = a / (K @ v)
            v = b / (K.T @ u)
        bad = not (np.all(np.isfinite(u)) and np.all(np.isfinite(v)))
        out_of_range = bad or u.max() > hi or v.max() > hi or u.min() < lo or v.min() < lo
        if not stabilised and out_of_range:
            if log_domain is False:
                raise NumericalUnderflow(
                    f"scaling vectors left [{lo:g}, {hi:g}] at epsilon={epsilon:g}; use the log domain"
                )
            log.info("sinkhorn: switching to log-domain at iteration %d (epsilon=%g)", it, epsilon)
            stabilised = True
            log_update()
            K = kernel()
            u, v = np.ones(n), np.ones(m)
            continue
        if stabilised and (bad or max(u.max(), v.max(), 1 / u.min(), 1 / v.min()) > ABSORB_AT):
            if bad:
                log_update()
            else:
                f += epsilon * np.log(u)
                g += epsilon * np.log(v)
            K = kernel()
            u, v = np.ones(n), np.ones(m)
            if bad:
                continue
        if it % check_every == 0 or it == max_iter:
            row = u * (K @ v)
            err = float(np.abs(row - a).sum())
            if err <= tol:
                break
    plan = u[:, None] * K * v[None, :]
    if stabilised:
        f_out, g_out = f + epsilon * np.log(u), g + epsilon * np.log(v)
    else:
        with np.errstate(divide="ignore"):
            f_out, g_out = epsilon * np.log(u), epsilon * np.log(v)
    err = float(np.abs(plan.sum(axis=1) - a).sum() + np.abs(plan.sum(axis=0) - b).sum())
    converged = err <= tol
    if not converged and strict:
        raise MaxIterExceeded(f"sinkhorn did not reach tol={tol:g} in {max_iter} iterations (err={err:.3e})")
    return SinkhornResult(plan, f_out, g_out, it, err, converged, stabilised)


def round_to_marginals(plan: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Project an approximate coupling onto the exact coupling polytope.

    Rows are scaled down to at most ``a``, columns to at most ``b``, and the
    remaining deficit is added back as a rank-one correction.
    """
    P = np.maximum(np.asarray(plan, dtype=float), 0.0)
    rs = P.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(rs > a, a / rs, 1.0)
    P = P * x[:, None]
    cs = P.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.where(cs > b, b / cs, 1.0)
    P = P * y[None, :]
    da = np.maximum(a - P.sum(axis=1), 0.0)
    db = np.maximum(b - P.sum(axis=0), 0.0)
    total = da.sum()
    if total > 0:
        P = P + np.outer(da, db) / total
    return P
