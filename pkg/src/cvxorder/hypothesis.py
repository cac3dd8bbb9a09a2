"""Critical values, p-value bounds and the convex-order test itself.

Two regimes are supported.  :class:`LogSobolev` assumes both populations
satisfy a log-Sobolev inequality with constant ``kappa`` and uses fifth
moments; :class:`BoundedSupport` assumes supports of diameter at most ``D``
and uses moment orders ``k1, k2 > 4``.  The null hypothesis ``mu <= nu`` is
rejected when the projection statistic reaches the critical value ``t(alpha)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .errors import DimensionMismatch, InvalidAlpha, InvalidInput, InvalidRegime
from .measure import DiscreteMeasure, diameter, empirical_from_samples, moment5
from .projection import SolverConfig, project_backward

SCHEMA = "cvxorder/1"


@dataclass(frozen=True)
class LogSobolev:
    """Log-Sobolev regime with constant ``kappa`` in dimension ``dim``."""

    kappa: float
    dim: int = 2

    name = "log-sobolev"

    def validate(self) -> "LogSobolev":
        if not (math.isfinite(self.kappa) and self.kappa > 0):
            raise InvalidRegime(f"kappa must be positive, got {self.kappa}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidRegime(f"dim must be a positive integer, got {self.dim}")
        return self


@dataclass(frozen=True)
class BoundedSupport:
    """Bounded-support regime.

    Parameters
    ----------
    diameter : bound ``D`` on the support diameter.  ``None`` is only
        accepted by :func:`run_test`, which substitutes the observed diameter.
    k1, k2 : moment orders for ``mu`` and ``nu``, both greater than 4.
    c_const : the constant ``C`` in ``C2(k) = C**(k/2)``.  Its value is not
        pinned down by the theory; 1.0 is a placeholder.
    """

    diameter: Optional[float]
    k1: float = 8.0
    k2: float = 8.0
    c_const: float = 1.0
    dim: int = 2

    name = "bounded"

    def validate(self) -> "BoundedSupport":
        if self.diameter is None or not (math.isfinite(self.diameter) and self.diameter > 0):
            raise InvalidRegime(f"diameter must be positive, got {self.diameter}")
        if not (self.k1 > 4 and self.k2 > 4):
            raise InvalidRegime(f"k1 and k2 must exceed 4, got {self.k1}, {self.k2}")
        if not (math.isfinite(self.c_const) and self.c_const > 0):
            raise InvalidRegime(f"c_const must be positive, got {self.c_const}")
        return self


Regime = Union[LogSobolev, BoundedSupport]


def regime_to_dict(regime: Regime) -> dict:
    return {"variant": regime.name, **asdict(regime)}


def _check_alpha(alpha: float) -> None:
    if not (isinstance(alpha, (int, float, np.floating)) and 0.0 < alpha < 1.0):
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha!r}")


def _check_sizes(n: int, m: int) -> None:
    if n < 1 or m < 1:
        raise InvalidInput(f"sample sizes must be >= 1, got n={n}, m={m}")


def _check(regime) -> Regime:
    if not isinstance(regime, (LogSobolev, BoundedSupport)):
        raise InvalidRegime(f"unknown regime {regime!r}")
    return regime.validate()


def _m5_max(m5) -> float:
    if m5 is None:
        raise InvalidInput("the log-Sobolev regime needs fifth-moment estimates (m5_mu, m5_nu)")
    a, b = m5
    if a < 0 or b < 0:
        raise InvalidInput("fifth moments are nonnegative")
    return max(float(a), float(b))


def _pow3(x: float) -> float:
    try:
        return 3.0**x
    except OverflowError:
        return math.inf


def c1(k: float) -> float:
    """``3**(12k/(k-4) + 1) * (1/(3**(k/2 - 2) - 1) + 3)`` for ``k > 4``."""
    return _pow3(12.0 * k / (k - 4.0) + 1.0) * (1.0 / (_pow3(k / 2.0 - 2.0) - 1.0) + 3.0)


def c2(k: float, c_const: float = 1.0) -> float:
    return c_const ** (k / 2.0)


# ---------------------------------------------------------------- critical value


def rate_term(regime: Regime, n: int, m: int, m5=None) -> float:
    """Sample-size threshold the statistic must clear for the p-value bound to hold.

    Log-Sobolev: ``80 sqrt(d) max(M5)**(1/5) * (log(n v m)**(2[d=4]) / (n ^ m))**(1/(d v 4))``.
    Bounded: ``sqrt(8) D sqrt(max(C1(k1), C2(k1))) / min(n**(1/k1), m**(1/k2))``.
    """
    regime = _check(regime)
    _check_sizes(n, m)
    lo, hi = min(n, m), max(n, m)
    if isinstance(regime, LogSobolev):
        d = regime.dim
        log_factor = math.log(hi) ** 2 if d == 4 else 1.0
        return 80.0 * math.sqrt(d) * _m5_max(m5) ** 0.2 * (log_factor / lo) ** (1.0 / max(d, 4))
    k1, k2 = regime.k1, regime.k2
    const = max(c1(k1), c2(k1, regime.c_const))
    return math.sqrt(8.0) * regime.diameter * math.sqrt(const) / min(n ** (1.0 / k1), m ** (1.0 / k2))


def concentration_term(regime: Regime, alpha: float, n: int, m: int) -> float:
    """``(32 kappa log(2/alpha) / (n ^ m))**(1/2)`` or ``(32 D**4 log(2/alpha) / (n ^ m))**(1/4)``."""
    regime = _check(regime)
    _check_alpha(alpha)
    _check_sizes(n, m)
    lo = min(n, m)
    if isinstance(regime, LogSobolev):
        return math.sqrt(32.0 * regime.kappa * math.log(2.0 / alpha) / lo)
    return (32.0 * regime.diameter**4 * math.log(2.0 / alpha) / lo) ** 0.25


def critical_value(regime: Regime, alpha: float, n: int, m: int, m5=None) -> float:
    """Critical value ``t(alpha)``: the larger of :func:`rate_term` and :func:`concentration_term`.

    ``m5 = (M5(mu), M5(nu))`` is required in the log-Sobolev regime.
    """
    return max(rate_term(regime, n, m, m5), concentration_term(regime, alpha, n, m))


@dataclass(frozen=True)
class PValueBound:
    bound: float
    valid: bool


def p_value_bound(regime: Regime, t: float, n: int, m: int, m5=None) -> PValueBound:
    """Upper bound on the p-value of an observed statistic ``t``.

    ``exp(-n t^2 / 32 kappa) + exp(-m t^2 / 32 kappa)`` (log-Sobolev) or
    ``exp(-n t^4 / 32 D^4) + exp(-m t^4 / 32 D^4)`` (bounded), clamped to 1.
    ``valid`` is False when ``t`` is below :func:`rate_term`; the bound is
    then reported but not rigorous.
    """
    regime = _check(regime)
    if not t >= 0:
        raise InvalidInput(f"t must be nonnegative, got {t}")
    if isinstance(regime, LogSobolev):
        scale = t * t / (32.0 * regime.kappa)
    else:
        scale = t**4 / (32.0 * regime.diameter**4)
    bound = min(1.0, math.exp(-n * scale) + math.exp(-m * scale))
    return PValueBound(bound, bool(t >= rate_term(regime, n, m, m5)))


def type2_bound(regime: Regime, alpha: float, n: int, m: int, m5=None) -> tuple:
    """``(beta, t(alpha))``: under the alternative ``W2 >= 2 t(alpha)`` the type II error is at most ``alpha``."""
    return alpha, critical_value(regime, alpha, n, m, m5)


def rate_bound(regime: Regime, n: int, m: int, m5=None) -> dict:
    """Deviation ``epsilon`` of the statistic from its population value and the confidence of that bound.

    Log-Sobolev: ``42 sqrt(d) max(M5, 1)**(1/5) (n ^ m)**-(1/d ^ 1/4) log(n ^ m)**(1/2 [d=4])``
    with probability ``1 - 2 exp(-sqrt(n ^ m) / (2 kappa))``.
    Bounded: ``2 D max(C1', C**(k v /2))**(1/2) (n ^ m)**(-1/k v)``
    with probability ``1 - 2 exp(-2 sqrt(n ^ m) / D^4)``, where ``C1'`` takes
    the larger order in the exponent and the smaller one in the denominator.
    Probabilities are clamped to ``[0, 1]``.
    """
    regime = _check(regime)
    _check_sizes(n, m)
    lo = min(n, m)
    if isinstance(regime, LogSobolev):
        d = regime.dim
        m5max = max(_m5_max(m5), 1.0)
        eps = 42.0 * math.sqrt(d) * m5max**0.2 * lo ** -min(1.0 / d, 0.25)
        if d == 4:
            eps *= math.sqrt(math.log(lo))
        prob = 1.0 - 2.0 * math.exp(-math.sqrt(lo) / (2.0 * regime.kappa))
    else:
        kmax, kmin = max(regime.k1, regime.k2), min(regime.k1, regime.k2)
        c1_mixed = _pow3(12.0 * kmax / (kmin - 4.0) + 1.0) * (1.0 / (_pow3(kmin / 2.0 - 2.0) - 1.0) + 3.0)
        const = max(c1_mixed, regime.c_const ** (kmax / 2.0))
        eps = 2.0 * regime.diameter * math.sqrt(const) * lo ** (-1.0 / kmax)
        prob = 1.0 - 2.0 * math.exp(-2.0 * math.sqrt(lo) / regime.diameter**4)
    return {"epsilon": eps, "probability": min(max(prob, 0.0), 1.0)}


# ---------------------------------------------------------------- the test


@dataclass
class TestReport:
    """Outcome of :func:`run_test`; ``to_json`` gives the stable serialised form."""

    statistic: float
    t_alpha: float
    alpha: float
    decision: str
    p_value_bound: float
    p_value_valid: bool
    regime: Regime
    n: int
    m: int
    type2_bound: float
    diagnostics: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "statistic": self.statistic,
            "t_alpha": self.t_alpha,
            "alpha": self.alpha,
            "decision": self.decision,
            "p_value_bound": self.p_value_bound,
            "p_value_valid": self.p_value_valid,
            "regime": regime_to_dict(self.regime),
            "n": self.n,
            "m": self.m,
            "type2_bound": self.type2_bound,
            "diagnostics": self.diagnostics,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _as_measure(x) -> DiscreteMeasure:
    if isinstance(x, DiscreteMeasure):
        return x
    return empirical_from_samples(x)


def run_test(mu_samples, nu_samples, regime: Regime, alpha: float = 0.05, solver: Optional[SolverConfig] = None):
    """Test ``H0: mu <= nu`` (convex order) from samples of each.

    Samples may be ``(n, d)`` arrays or :class:`DiscreteMeasure` objects.
    The regime's dimension is taken from the data.  In the bounded regime a
    ``diameter`` of ``None`` is replaced by the observed diameter of the
    pooled samples, which underestimates the true one; the diagnostics say so.
    """
    _check_alpha(alpha)
    mu, nu = _as_measure(mu_samples), _as_measure(nu_samples)
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"dimensions {mu.dim} and {nu.dim} differ")
    if not isinstance(regime, (LogSobolev, BoundedSupport)):
        raise InvalidRegime(f"unknown regime {regime!r}")
    regime = replace(regime, dim=mu.dim)
    diagnostics: dict = {}
    m5 = None
    if isinstance(regime, LogSobolev):
        m5 = (moment5(mu), moment5(nu))
        diagnostics["moment5_mu"], diagnostics["moment5_nu"] = m5
    else:
        if regime.diameter is None:
            observed = diameter(mu, nu)
            if not observed > 0:
                raise InvalidRegime("observed diameter is 0; pass an explicit diameter")
            regime = replace(regime, diameter=observed)
            diagnostics["diameter_source"] = "observed (underestimates the true diameter)"
        else:
            diagnostics["diameter_source"] = "user"
        diagnostics["diameter"] = regime.diameter
    regime.validate()

    result = project_backward(mu, nu, solver)
    stat = result.distance
    n, m = mu.n, nu.n
    t_alpha = critical_value(regime, alpha, n, m, m5)
    pv = p_value_bound(regime, stat, n, m, m5)
    beta, _ = type2_bound(regime, alpha, n, m, m5)
    diagnostics["rate_term"] = rate_term(regime, n, m, m5)
    diagnostics["concentration_term"] = concentration_term(regime, alpha, n, m)
    diagnostics["rate_bound"] = rate_bound(regime, n, m, m5)
    diagnostics["solver"] = {
        "oracle": (solver or SolverConfig()).oracle,
        "converged": result.converged,
        "stop_reason": result.stop_reason,
        "iterations": result.iterations,
        "gap": result.gap,
        "gap_tol": result.gap_tol,
    }
    decision = "Reject" if stat >= t_alpha else "Accept"
    return TestReport(stat, t_alpha, alpha, decision, pv.bound, pv.valid, regime, n, m, beta, diagnostics)
