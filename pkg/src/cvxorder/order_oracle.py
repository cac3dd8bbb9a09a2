"""Ground-truth checks for convex order, independent of the Frank-Wolfe solver.

``is_convex_order`` searches for a martingale coupling (Strassen) by linear
programming, ``forward_projection_grid`` bounds the forward projection
distance on a 1-D grid, and ``convex_inequality_check`` hunts for a convex
test function that separates the two measures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import DimensionMismatch, GridTooCoarse, InvalidInput, SolverFailure
from .measure import DiscreteMeasure, diameter
from .transport import TransportPlan, sq_euclidean_cost

HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


@dataclass
class MartingaleCoupling:
    plan: TransportPlan
    martingale_residual: float


@dataclass
class OrderResult:
    """Outcome of :func:`is_convex_order`; truthy iff a martingale coupling was found."""

    in_order: bool
    violation: float
    tol: float
    coupling: Optional[MartingaleCoupling] = None

    def __bool__(self) -> bool:
        return self.in_order


def _coupling_constraints(n: int, m: int):
    rows = sparse.kron(sparse.eye(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.eye(m))
    return rows, cols


def martingale_residual(plan: np.ndarray, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """``max_i |sum_j P_ij y_j - mu_i x_i|_inf / mu_i``."""
    a = np.asarray(mu.weights)
    r = plan @ nu.points - a[:, None] * mu.points
    return float(np.max(np.abs(r).max(axis=1) / a))


def is_convex_order(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: Optional[float] = None) -> OrderResult:
    """Decide ``mu <= nu`` in convex order by minimising martingale violation.

    Minimises the total L1 violation of ``sum_j P_ij y_j = mu_i x_i`` over
    couplings ``P`` of ``mu`` and ``nu``.  Zero-weight atoms of ``mu`` carry no
    constraint and are ignored.  The default tolerance is
    ``1e-7 * (1 + diameter)``; a positive answer also requires the per-atom
    martingale residual to be within it.
    """
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"dimensions {mu.dim} and {nu.dim} differ")
    if tol is None:
        tol = 1e-7 * (1.0 + diameter(mu, nu))
    keep = np.asarray(mu.weights) > 0
    X, a = mu.points[keep], np.asarray(mu.weights)[keep]
    Y, b = nu.points, np.asarray(nu.weights)
    n, m, d = len(a), len(b), mu.dim

    rows, cols = _coupling_constraints(n, m)
    # martingale rows: for atom i and coordinate k, sum_j P_ij Y_jk - s+ + s- = a_i X_ik
    mart = sparse.kron(sparse.eye(n), Y.T)
    slack = sparse.eye(n * d)
    A_eq = sparse.vstack(
        [
            sparse.hstack([rows, sparse.csr_matrix((n, 2 * n * d))]),
            sparse.hstack([cols, sparse.csr_matrix((m, 2 * n * d))]),
            sparse.hstack([mart, -slack, slack]),
        ]
    ).tocsc()
    b_eq = np.concatenate([a, b, (a[:, None] * X).ravel()])
    c = np.concatenate([np.zeros(n * m), np.ones(2 * n * d)])
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs", options=HIGHS_OPTIONS)
    if res.status != 0:
        raise SolverFailure(f"martingale LP failed: {res.message}")
    violation = max(float(res.fun), 0.0)
    plan = np.maximum(res.x[: n * m].reshape(n, m), 0.0)
    full_plan = np.zeros((mu.n, m))
    full_plan[keep] = plan
    kept = DiscreteMeasure(X, a)
    residual = martingale_residual(plan, kept, nu)
    in_order = violation <= tol and residual <= tol
    cost = float(np.sum(full_plan * sq_euclidean_cost(mu.points, Y)))
    coupling = MartingaleCoupling(TransportPlan(full_plan, np.asarray(mu.weights).copy(), b.copy(), cost), residual)
    return OrderResult(in_order, violation, tol, coupling if in_order else None)


# ---------------------------------------------------------------- 1-D forward projection


@dataclass(frozen=True)
class Grid1D:
    lo: float
    hi: float
    points: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidInput("grid needs lo < hi")
        if self.points < 2:
            raise InvalidInput("grid needs at least two points")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.points)

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.points - 1)

    @property
    def span(self) -> float:
        return self.hi - self.lo

    @classmethod
    def covering(cls, mu: DiscreteMeasure, nu: DiscreteMeasure, points: int, margin: float = 1.0) -> "Grid1D":
        """Grid over the hull of both supports, widened by ``margin`` times its span on each side.

        The forward projection can put mass outside that hull (for a Dirac
        ``mu`` it is ``nu`` translated onto the Dirac's location), hence the
        generous default margin.
        """
        allpts = np.concatenate([mu.points.ravel(), nu.points.ravel()])
        lo, hi = float(allpts.min()), float(allpts.max())
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        pad = margin * (hi - lo)
        return cls(lo - pad, hi + pad, points)


def forward_projection_grid(mu: DiscreteMeasure, nu: DiscreteMeasure, grid: Grid1D) -> float:
    """Upper bound on ``W2(P_{mu <= .}, nu)`` with the candidate measure restricted to ``grid``.

    Solves for ``P`` (``mu`` to grid, a martingale kernel) and ``Q`` (grid to
    ``nu``) sharing the grid marginal ``eta``, minimising the transport cost
    of ``Q``.  Returns the square root of the optimum.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise DimensionMismatch("forward_projection_grid works on 1-D measures only")
    x, a = mu.points[:, 0], np.asarray(mu.weights)
    y, b = nu.points[:, 0], np.asarray(nu.weights)
    z = grid.nodes
    tol = 1e-12 * max(1.0, abs(grid.lo), abs(grid.hi))
    if x.min() < grid.lo - tol or x.max() > grid.hi + tol:
        raise GridTooCoarse("grid does not cover the support of mu")
    if y.min() < grid.lo - tol or y.max() > grid.hi + tol:
        raise GridTooCoarse("grid does not cover the support of nu")
    n, m, G = len(a), len(b), len(z)

    p_rows, p_cols = _coupling_constraints(n, G)  # P is n x G
    q_rows, q_cols = _coupling_constraints(G, m)  # Q is G x m
    zero = lambda r, c: sparse.csr_matrix((r, c))  # noqa: E731
    A_eq = sparse.vstack(
        [
            sparse.hstack([p_rows, zero(n, G * m)]),  # P 1 = mu
            sparse.hstack([zero(m, n * G), q_cols]),  # Q^T 1 = nu
            sparse.hstack([p_cols, -q_rows]),  # P^T 1 = Q 1 (= eta)
            sparse.hstack([sparse.kron(sparse.eye(n), z[None, :]), zero(n, G * m)]),  # martingale
        ]
    ).tocsc()
    b_eq = np.concatenate([a, b, np.zeros(G), a * x])
    cost = ((z[:, None] - y[None, :]) ** 2).ravel()
    c = np.concatenate([np.zeros(n * G), cost])
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs", options=HIGHS_OPTIONS)
    if res.status != 0:
        raise SolverFailure(f"forward grid LP failed: {res.message}")
    return float(np.sqrt(max(res.fun, 0.0)))


# ---------------------------------------------------------------- convex test functions


@dataclass
class ConvexCheckReport:
    trials: int
    violations: list = field(default_factory=list)
    max_excess: float = -np.inf

    @property
    def passed(self) -> bool:
        return not self.violations


def convex_inequality_check(
    mu: DiscreteMeasure, nu: DiscreteMeasure, trials: int = 1000, seed=None, pieces: int = 5, tol: float = 1e-9
) -> ConvexCheckReport:
    """Look for a convex ``phi`` with ``int phi dmu > int phi dnu + tol``.

    Each trial draws ``phi(x) = max_k <s_k, x> + c_k`` with standard normal
    slopes and offsets.  A violation disproves ``mu <= nu``; passing every
    trial proves nothing.  ``violations`` holds ``(trial, excess, slopes, offsets)``.
    """
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"dimensions {mu.dim} and {nu.dim} differ")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    report = ConvexCheckReport(trials)
    for t in range(trials):
        slopes = rng.standard_normal((pieces, mu.dim))
        offsets = rng.standard_normal(pieces)
        excess = _phi_excess(mu, nu, slopes, offsets)
        report.max_excess = max(report.max_excess, excess)
        if excess > tol:
            report.violations.append((t, excess, slopes, offsets))
    return report


def _phi_excess(mu, nu, slopes, offsets) -> float:
    phi_mu = np.max(mu.points @ slopes.T + offsets, axis=1) @ mu.weights
    phi_nu = np.max(nu.points @ slopes.T + offsets, axis=1) @ nu.weights
    return float(phi_mu - phi_nu)
