"""Independent reference computations used to freeze expected values in the tests.

None of these reuse the package's solvers.
"""

import itertools

import numpy as np
from scipy.optimize import linprog, minimize


def naive_objective(A, mu, nu):
    """Double loop over atoms and coordinates."""
    total = 0.0
    for i in range(mu.n):
        for k in range(mu.dim):
            s = 0.0
            for j in range(nu.n):
                s += A[i][j] * nu.points[j][k]
            total += mu.weights[i] * (s - mu.points[i][k]) ** 2
    return total


def finite_difference_gradient(f, A, h=1e-5):
    G = np.zeros_like(A)
    for idx in np.ndindex(A.shape):
        Ap, Am = A.copy(), A.copy()
        Ap[idx] += h
        Am[idx] -= h
        G[idx] = (f(Ap) - f(Am)) / (2 * h)
    return G


def two_atom_dirac_grid(nu, x0, grid=200_001):
    """Backward distance of a Dirac at ``x0`` written as two half-atoms, for a two-atom ``nu``.

    The coupling constraints leave one free parameter ``t`` (the first
    half-atom sends ``t`` of its mass to ``y1``); ``J(t)`` is scanned on a grid.
    """
    y1, y2 = np.asarray(nu.points)
    b1 = nu.weights[0]
    # rows (t, 1-t) and (2 b1 - t, 1 - 2 b1 + t) with both in [0, 1]
    lo, hi = max(0.0, 2 * b1 - 1), min(1.0, 2 * b1)
    t = np.linspace(lo, hi, grid)
    s = 2 * b1 - t
    img1 = t[:, None] * y1 + (1 - t)[:, None] * y2
    img2 = s[:, None] * y1 + (1 - s)[:, None] * y2
    J = 0.5 * np.sum((img1 - x0) ** 2, axis=1) + 0.5 * np.sum((img2 - x0) ** 2, axis=1)
    k = int(np.argmin(J))
    return float(np.sqrt(J[k])), float(t[k])


def _random_coupling(rng, a, b, sweeps=500):
    P = rng.random((len(a), len(b))) + 1e-3
    for _ in range(sweeps):
        P *= (a / P.sum(axis=1))[:, None]
        P *= (b / P.sum(axis=0))[None, :]
    return P


def brute_force_distance(mu, nu, starts=20, seed=0):
    """Multi-start SLSQP on ``J(P) = sum_i |(P Y)_i / a_i - x_i|^2 a_i`` over couplings ``P``."""
    a, b = np.asarray(mu.weights), np.asarray(nu.weights)
    X, Y = np.asarray(mu.points), np.asarray(nu.points)
    n, m = len(a), len(b)
    rows = np.kron(np.eye(n), np.ones((1, m)))
    cols = np.kron(np.ones((1, n)), np.eye(m))
    Aeq = np.vstack([rows, cols])[:-1]  # one equation is redundant
    beq = np.concatenate([a, b])[:-1]

    def J(p):
        R = p.reshape(n, m) @ Y / a[:, None] - X
        return float(a @ np.sum(R * R, axis=1))

    def dJ(p):
        R = p.reshape(n, m) @ Y / a[:, None] - X
        return (2.0 * R @ Y.T).ravel()

    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(starts):
        p0 = _random_coupling(rng, a, b).ravel()
        res = minimize(
            J,
            p0,
            jac=dJ,
            method="SLSQP",
            bounds=[(0, None)] * (n * m),
            constraints=[{"type": "eq", "fun": lambda p: Aeq @ p - beq, "jac": lambda p: Aeq}],
            options={"ftol": 1e-16, "maxiter": 2000},
        )
        p = np.maximum(res.x, 0)
        if np.abs(Aeq @ p - beq).max() < 1e-9:
            best = min(best, J(p))
    return float(np.sqrt(max(best, 0.0)))


def vertex_couplings_cost(cost, a, b):
    """Exact OT cost by enumerating permutation couplings (uniform, equal sizes) or by generic LP."""
    n, m = cost.shape
    if n == m and np.allclose(a, 1.0 / n) and np.allclose(b, 1.0 / m) and n <= 7:
        return min(sum(cost[i, p[i]] for i in range(n)) / n for p in itertools.permutations(range(n)))
    Aeq = np.vstack([np.kron(np.eye(n), np.ones((1, m))), np.kron(np.ones((1, n)), np.eye(m))])
    return float(linprog(cost.ravel(), A_eq=Aeq, b_eq=np.concatenate([a, b]), method="highs").fun)
