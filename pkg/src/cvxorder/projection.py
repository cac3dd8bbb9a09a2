"""Backward Wasserstein projection of ``mu`` onto the measures dominated by ``nu``.

Every measure dominated by ``nu`` in convex order (for finite ``nu``) arises
by sending atom ``x_i`` of ``mu`` to a convex combination ``sum_j A_ij y_j``
of the atoms of ``nu``, with ``A`` row-stochastic and ``A^T mu = nu``.  The
projection distance is the square root of

    J(A) = sum_i mu_i | sum_j A_ij y_j - x_i |^2

minimised over that polytope.  In coupling coordinates ``P = diag(mu) A`` the
feasible set is exactly the set of couplings of ``mu`` and ``nu``, so the
Frank-Wolfe linear subproblem is an ordinary transport problem: the exact
transportation simplex (``oracle="lp"``) or Sinkhorn (``oracle="entropic"``).

With the exact oracle the default solver is fully corrective: after each
oracle call the weights over all visited vertices are re-optimised, which
drives ordered instances (``mu`` already dominated by ``nu``) to zero in a
handful of iterations where plain Frank-Wolfe crawls.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from .errors import DimensionMismatch, InvalidInput, NonFinite, ShapeMismatch
from .measure import DiscreteMeasure
from .transport import SimplexBasis, round_to_marginals, sinkhorn, transport_simplex

log = logging.getLogger(__name__)

ORACLES = ("lp", "entropic")
LINE_SEARCHES = ("exact", "fixed")
VARIANTS = ("vanilla", "away", "corrective")


@dataclass(frozen=True)
class SolverConfig:
    """Frank-Wolfe settings.

    ``gap_tol=None`` means ``gap_rel_tol * (1 + J(A0))``.  ``eps0=None`` means
    a tenth of the mean absolute linearised cost at the first iterate.  The
    entropic regularisation at iteration ``k`` is
    ``max(eps0 * eps_decay**k, min_eps)``.

    ``stall_tol`` (off by default) stops the solve once the objective has
    moved by less than it over the last ``stall_window`` iterations.
    ``patience`` bounds the run of iterations without any decrease that is
    tolerated once the oracle can no longer change (exact oracle, or the
    entropic one at ``min_eps``); such runs sit on the floating-point floor.
    """

    oracle: str = "lp"
    max_iter: int = 2000
    gap_tol: Optional[float] = None
    gap_rel_tol: float = 1e-10
    line_search: str = "exact"
    variant: str = "corrective"
    eps0: Optional[float] = None
    eps_decay: float = 0.7
    min_eps: float = 1e-6
    sinkhorn_max_iter: int = 1000
    sinkhorn_tol: float = 1e-9
    stall_tol: Optional[float] = None
    stall_window: int = 5
    patience: int = 10

    def __post_init__(self):
        if self.oracle not in ORACLES:
            raise InvalidInput(f"oracle must be one of {ORACLES}, got {self.oracle!r}")
        if self.line_search not in LINE_SEARCHES:
            raise InvalidInput(f"line_search must be one of {LINE_SEARCHES}, got {self.line_search!r}")
        if self.variant not in VARIANTS:
            raise InvalidInput(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.max_iter < 1:
            raise InvalidInput("max_iter must be >= 1")
        if self.gap_tol is not None and not self.gap_tol > 0:
            raise InvalidInput("gap_tol must be positive")
        if not self.gap_rel_tol > 0:
            raise InvalidInput("gap_rel_tol must be positive")
        if not 0 < self.eps_decay < 1:
            raise InvalidInput("eps_decay must lie in (0, 1)")
        if not self.min_eps > 0:
            raise InvalidInput("min_eps must be positive")
        if self.eps0 is not None and not self.eps0 > self.min_eps:
            raise InvalidInput("eps0 must exceed min_eps")
        if self.stall_tol is not None and not self.stall_tol > 0:
            raise InvalidInput("stall_tol must be positive")
        if self.stall_window < 1 or self.patience < 1:
            raise InvalidInput("stall_window and patience must be >= 1")

    def effective_variant(self) -> str:
        """Active-set variants need exact vertices and exact line search."""
        if self.oracle != "lp" or self.line_search != "exact":
            return "vanilla"
        return self.variant

    def epsilon(self, k: int, eps0: float) -> float:
        return max(eps0 * self.eps_decay**k, self.min_eps)


@dataclass
class TraceRecord:
    k: int
    objective: float
    gap: float
    step: float
    oracle: str
    epsilon: Optional[float] = None
    direction: str = "fw"


@dataclass
class ProjectionResult:
    A: np.ndarray
    distance: float
    projected: DiscreteMeasure
    trace: list = field(default_factory=list)
    converged: bool = False
    gap_tol: float = 0.0
    stop_reason: str = "max_iter"

    @property
    def iterations(self) -> int:
        return max(len(self.trace) - 1, 0)

    @property
    def objective(self) -> float:
        return self.trace[-1].objective if self.trace else self.distance**2

    @property
    def gap(self) -> float:
        return self.trace[-1].gap if self.trace else float("nan")

    def to_json(self) -> dict:
        return {
            "distance": self.distance,
            "converged": self.converged,
            "iterations": self.iterations,
            "gap_tol": self.gap_tol,
            "stop_reason": self.stop_reason,
            "trace": [
                {"k": r.k, "objective": r.objective, "gap": r.gap, "step": r.step, "epsilon": r.epsilon}
                for r in self.trace
            ],
            "projected": {
                "points": self.projected.points.tolist(),
                "weights": self.projected.weights.tolist(),
            },
        }


# ---------------------------------------------------------------- objective


def _check_shapes(A, mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"dimensions {mu.dim} and {nu.dim} differ")
    if A.shape != (mu.n, nu.n):
        raise ShapeMismatch(f"A has shape {A.shape}, expected ({mu.n}, {nu.n})")
    return A


def objective(A, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """``sum_i mu_i |(A Y)_i - x_i|^2``."""
    A = _check_shapes(A, mu, nu)
    r = A @ nu.points - mu.points
    return float(mu.weights @ np.sum(r * r, axis=1))


def gradient(A, mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    """``2 diag(mu) (A Y - X) Y^T``, the gradient of :func:`objective` in ``A``."""
    A = _check_shapes(A, mu, nu)
    r = A @ nu.points - mu.points
    return 2.0 * (mu.weights[:, None] * r) @ nu.points.T


def is_feasible(A, mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = 1e-8) -> bool:
    A = np.asarray(A, dtype=float)
    return bool(
        A.min() >= -tol
        and np.abs(A.sum(axis=1) - 1.0).max() <= tol
        and np.abs(mu.weights @ A - nu.weights).max() <= tol
    )


# ---------------------------------------------------------------- oracle


class _OracleState:
    """Warm-start data carried between oracle calls of one solve."""

    def __init__(self):
        self.basis: Optional[SimplexBasis] = None
        self.potentials: Optional[tuple] = None
        self.eps0: Optional[float] = None
        self.last_epsilon: Optional[float] = None
        self.last_slack: float = 0.0


def fw_oracle(G, mu: DiscreteMeasure, nu: DiscreteMeasure, cfg: SolverConfig, k: int = 0, state=None) -> np.ndarray:
    """Minimise ``<G, S>`` over barycentric matrices ``S`` (exactly or entropically).

    Returns ``S`` in barycentric coordinates (rows sum to one, ``S^T mu = nu``).
    """
    G = np.asarray(G, dtype=float)
    if G.shape != (mu.n, nu.n):
        raise ShapeMismatch(f"G has shape {G.shape}, expected ({mu.n}, {nu.n})")
    if not np.all(np.isfinite(G)):
        raise NonFinite("gradient contains non-finite entries")
    state = state or _OracleState()
    a = np.asarray(mu.weights)
    P = _coupling_oracle(G / a[:, None], a, np.asarray(nu.weights), cfg, k, state)
    return P / a[:, None]


def _coupling_oracle(C, a, b, cfg: SolverConfig, k: int, state: _OracleState) -> np.ndarray:
    if cfg.oracle == "lp":
        P, state.basis = transport_simplex(C, a, b, basis=state.basis)
        state.last_epsilon = None
        state.last_slack = 0.0
        return P
    if state.eps0 is None:
        state.eps0 = cfg.eps0 if cfg.eps0 is not None else max(0.1 * float(np.abs(C).mean()), 10 * cfg.min_eps)
    eps = cfg.epsilon(k, state.eps0)
    res = sinkhorn(
        a, b, C, eps, tol=cfg.sinkhorn_tol, max_iter=cfg.sinkhorn_max_iter, init=state.potentials, log_domain=True
    )
    state.potentials = (res.f, res.g)
    P = round_to_marginals(res.plan, a, b)
    state.last_epsilon = eps
    # worst-case excess of the entropic answer over the exact linear minimum
    n, m = C.shape
    state.last_slack = eps * np.log(n * m) + 2.0 * float(np.abs(C).max()) * res.marginal_error
    return P


# ---------------------------------------------------------------- solver


class _Problem:
    """Coupling-coordinate view: ``J(P) = sum_i |(P Y)_i - a_i x_i|^2 / a_i``."""

    def __init__(self, mu: DiscreteMeasure, nu: DiscreteMeasure):
        self.a = np.asarray(mu.weights)
        self.b = np.asarray(nu.weights)
        self.X = np.asarray(mu.points)
        self.Y = np.asarray(nu.points)

    def residual(self, P):
        return P @ self.Y / self.a[:, None] - self.X

    def value(self, R) -> float:
        return float(self.a @ np.sum(R * R, axis=1))

    def grad(self, R) -> np.ndarray:
        # gradient with respect to P, i.e. G_ij / a_i
        return 2.0 * R @ self.Y.T

    def curvature(self, DY) -> float:
        return float(np.sum(np.sum(DY * DY, axis=1) / self.a))


def _active_key(P: np.ndarray) -> bytes:
    nz = np.flatnonzero(P > 0)
    return nz.tobytes() + np.round(P.flat[nz], 15).tobytes()


class _ActiveSet:
    """Convex decomposition ``P = sum_v w_v V_v`` over visited oracle vertices."""

    def __init__(self, P0: np.ndarray, Y: np.ndarray):
        self.Y = Y
        self.atoms = {b"start": [1.0, P0.copy(), P0 @ Y]}

    def add(self, S: np.ndarray, weight: float = 0.0) -> bytes:
        key = _active_key(S)
        if key in self.atoms:
            self.atoms[key][0] += weight
        else:
            self.atoms[key] = [weight, S, S @ self.Y]
        return key

    def worst(self, C: np.ndarray):
        """Atom maximising ``<C, V>`` (the away vertex)."""
        return max(self.atoms.items(), key=lambda kv: float(np.sum(C * kv[1][1])))

    def fw_step(self, S: np.ndarray, step: float) -> None:
        if step >= 1.0:
            self.atoms.clear()
            self.add(S, 1.0)
            return
        for entry in self.atoms.values():
            entry[0] *= 1.0 - step
        self.add(S, step)

    def away_step(self, key: bytes, step: float, step_max: float) -> None:
        for entry in self.atoms.values():
            entry[0] *= 1.0 + step
        if step >= step_max:
            del self.atoms[key]
        else:
            self.atoms[key][0] -= step

    def correct(self, prob: "_Problem"):
        """Re-optimise the weights over the current atoms (fully corrective step).

        Solves ``min |sum_v w_v b_v - c|^2`` over the simplex with NNLS, the
        sum-to-one constraint enforced by a heavily weighted extra row.
        Returns the corrected coupling; zero-weight atoms are dropped.
        """
        keys = list(self.atoms)
        sq = np.sqrt(prob.a)[:, None]
        B = np.column_stack([(self.atoms[k][2] / sq).ravel() for k in keys])
        c = (sq * prob.X).ravel()
        rho = 1e4 * max(1.0, float(np.abs(B).max()), float(np.abs(c).max()))
        lhs = np.vstack([B, np.full((1, len(keys)), rho)])
        rhs = np.concatenate([c, [rho]])
        try:
            w, _ = nnls(lhs, rhs, maxiter=50 * lhs.shape[1] + 100)
        except RuntimeError:
            return None
        total = w.sum()
        if not total > 0:
            return None
        w = w / total
        w = _polish_on_support(B, c, w)
        P = sum(wi * self.atoms[k][1] for wi, k in zip(w, keys) if wi > 0)
        for wi, k in zip(w, keys):
            if wi > 0:
                self.atoms[k][0] = float(wi)
            else:
                del self.atoms[k]
        return P


def _polish_on_support(B: np.ndarray, c: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Exact equality-constrained least squares on the support of ``w``.

    The penalty row in the NNLS solve only enforces ``sum w = 1`` to about
    ``1/rho^2``; re-solving on the support removes that bias whenever the
    exact solution stays nonnegative.
    """
    support = np.flatnonzero(w > 0)
    if support.size < 2:
        return w
    ref, rest = support[0], support[1:]
    D = B[:, rest] - B[:, [ref]]
    z, *_ = np.linalg.lstsq(D, c - B[:, ref], rcond=None)
    if np.any(z < 0) or z.sum() > 1.0:
        return w
    out = np.zeros_like(w)
    out[rest] = z
    out[ref] = 1.0 - z.sum()
    return out


def project_backward(mu: DiscreteMeasure, nu: DiscreteMeasure, cfg: Optional[SolverConfig] = None) -> ProjectionResult:
    """Frank-Wolfe solve of the projection problem.

    Starts from ``A0`` with every row equal to ``nu.weights`` (all mass of
    ``mu`` sent to the barycenter of ``nu``) and stops once the duality gap
    ``<G, A - S>`` drops to the tolerance or ``max_iter`` is reached.
    """
    cfg = cfg or SolverConfig()
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"dimensions {mu.dim} and {nu.dim} differ")
    if np.any(mu.weights <= 0):
        raise InvalidInput("mu has zero-weight atoms; drop them before projecting")

    prob = _Problem(mu, nu)
    a, b, Y = prob.a, prob.b, prob.Y
    P = np.outer(a, b)
    R = prob.residual(P)
    J = prob.value(R)
    gap_tol = cfg.gap_tol if cfg.gap_tol is not None else cfg.gap_rel_tol * (1.0 + J)
    variant = cfg.effective_variant()
    active = _ActiveSet(P, Y) if variant in ("away", "corrective") else None
    state = _OracleState()
    trace = []
    converged = False
    stop_reason = "max_iter"
    idle = 0
    record = TraceRecord(0, J, float("nan"), 0.0, cfg.oracle)

    for k in range(cfg.max_iter + 1):
        C = prob.grad(R)
        if not np.all(np.isfinite(C)):
            raise NonFinite(f"non-finite gradient at iteration {k}")
        S = _coupling_oracle(C, a, b, cfg, k, state)
        d = S - P
        lin = float(np.sum(C * d))
        record.gap = -lin
        record.epsilon = state.last_epsilon
        trace.append(record)
        if -lin + state.last_slack <= gap_tol:
            converged, stop_reason = True, "gap"
            break
        if k == cfg.max_iter:
            break
        w = cfg.stall_window
        if cfg.stall_tol is not None and k >= w:
            recent = [r.objective for r in trace[-w - 1 :]]
            if max(recent) - min(recent) < cfg.stall_tol:
                stop_reason = "stalled"
                break
        frozen = cfg.oracle == "lp" or state.last_epsilon == cfg.min_eps
        if frozen and idle >= cfg.patience:
            stop_reason = "floor"
            break

        direction, step_max = "fw", 1.0
        if variant == "away":
            away_key, (away_w, V, _) = active.worst(C)
            d_away = P - V
            lin_away = float(np.sum(C * d_away))
            if lin_away < lin and away_w < 1.0:
                direction, d, lin = "away", d_away, lin_away
                step_max = away_w / (1.0 - away_w)

        if cfg.line_search == "exact":
            q = prob.curvature(d @ Y)
            if q > 0:
                step = min(max(-lin / (2.0 * q), 0.0), step_max)
            else:
                step = step_max if lin < 0 else 0.0
        else:
            step = 2.0 / (k + 2.0)

        P_next = P + step * d
        R_next = prob.residual(P_next)
        J_next = prob.value(R_next)
        if variant == "away" and step > 0:
            if direction == "fw":
                active.fw_step(S, step)
            else:
                active.away_step(away_key, step, step_max)
        elif variant == "corrective":
            direction = "corrective"
            active.add(S)
            P_corr = active.correct(prob)
            if P_corr is not None:
                R_corr = prob.residual(P_corr)
                J_corr = prob.value(R_corr)
                if J_corr <= J_next:
                    P_next, R_next, J_next = P_corr, R_corr, J_corr
                    step = float(active.atoms[_active_key(S)][0]) if _active_key(S) in active.atoms else 0.0
                else:
                    # keep the line-search point; re-seed the decomposition from it
                    active = _ActiveSet(P_next, Y)
        if not np.isfinite(J_next):
            raise NonFinite(f"objective became non-finite at iteration {k}")
        idle = idle + 1 if J_next >= J else 0
        P, R, J = P_next, R_next, J_next
        record = TraceRecord(k + 1, J, float("nan"), step, cfg.oracle, direction=direction)

    A = P / a[:, None]
    projected = DiscreteMeasure(A @ Y, a.copy())
    distance = float(np.sqrt(max(J, 0.0)))
    log.debug(
        "project_backward: %d iterations, J=%.6g, gap=%.3g (%s)", len(trace) - 1, J, trace[-1].gap, stop_reason
    )
    return ProjectionResult(A, distance, projected, trace, converged, gap_tol, stop_reason)


def projection_distance(mu: DiscreteMeasure, nu: DiscreteMeasure, cfg: Optional[SolverConfig] = None) -> float:
    return project_backward(mu, nu, cfg).distance
