"""Finitely supported probability measures and the samplers that produce them.

A :class:`DiscreteMeasure` is a point cloud ``points`` of shape ``(n, d)``
with simplex weights of shape ``(n,)``.  Coincident atoms are never merged:
row ``i`` of every barycentric matrix built downstream refers to atom ``i``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    InvalidInput,
    InvalidSigma,
    NegativeWeight,
    NonPSDCovariance,
    ZeroMass,
)

WEIGHT_SUM_TOL = 1e-9
PSD_PIVOT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Immutable weighted point cloud.

    Build instances with :func:`new_discrete` or :func:`empirical_from_samples`;
    the constructor trusts its arguments.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )

    def __hash__(self):
        return hash((self.points.tobytes(), self.weights.tobytes()))

    def __repr__(self) -> str:
        return f"DiscreteMeasure(n={self.n}, d={self.dim})"


def new_discrete(points, weights) -> DiscreteMeasure:
    """Validate ``points``/``weights`` and renormalise the weights to sum to one.

    Raises
    ------
    DimensionMismatch
        If the number of points and weights differ, or rows have unequal length.
    NegativeWeight
        If any weight is negative.
    ZeroMass
        If all weights are zero.
    """
    try:
        pts = np.array(points, dtype=float)
    except ValueError as exc:  # ragged input
        raise DimensionMismatch(f"points have inconsistent dimensions: {exc}") from None
    w = np.array(weights, dtype=float).reshape(-1)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if pts.size else pts.reshape(0, 1)
    if pts.ndim != 2:
        raise DimensionMismatch(f"points must be a list of vectors, got shape {pts.shape}")
    if pts.shape[0] == 0:
        raise EmptyInput("a measure needs at least one atom")
    if pts.shape[1] < 1:
        raise DimensionMismatch("points must have dimension >= 1")
    if pts.shape[0] != w.shape[0]:
        raise DimensionMismatch(f"{pts.shape[0]} points but {w.shape[0]} weights")
    if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
        raise InvalidInput("points and weights must be finite")
    if np.any(w < 0):
        raise NegativeWeight(f"negative weight {w.min()!r}")
    total = w.sum()
    if total <= 0:
        raise ZeroMass("all weights are zero")
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise InvalidInput(f"weights sum to {total!r}, expected 1 within {WEIGHT_SUM_TOL}")
    if abs(total - 1.0) > 4.0 * np.finfo(float).eps * len(w):
        w = w / total
    return DiscreteMeasure(pts, w)


def empirical_from_samples(samples) -> DiscreteMeasure:
    """Uniform-weight empirical measure; duplicate samples stay separate atoms."""
    pts = np.array(samples, dtype=float)
    if pts.size == 0:
        raise EmptyInput("no samples")
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    n = pts.shape[0]
    return new_discrete(pts, np.full(n, 1.0 / n))


# ---------------------------------------------------------------- samplers


@dataclass(frozen=True)
class UniformBox:
    lo: float = 0.0
    hi: float = 1.0
    d: int = 2


@dataclass(frozen=True)
class Gaussian:
    mean: Sequence[float]
    cov: Sequence[Sequence[float]]


@dataclass(frozen=True)
class GaussianConvolution:
    """Draw from ``base`` and add independent ``N(0, cov)`` noise."""

    base: "Family"
    cov: Sequence[Sequence[float]] = field(default=None)


Family = Union[UniformBox, Gaussian, GaussianConvolution]


def psd_factor(cov) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == cov`` for a PSD ``cov``.

    Pivots in ``[-PSD_PIVOT_TOL, PSD_PIVOT_TOL]`` are treated as exact zeros
    so singular covariances are accepted.
    """
    c = np.array(cov, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise NonPSDCovariance(f"covariance must be square, got shape {c.shape}")
    if not np.allclose(c, c.T, atol=1e-12, rtol=0):
        raise NonPSDCovariance("covariance is not symmetric")
    d = c.shape[0]
    L = np.zeros_like(c)
    for j in range(d):
        pivot = c[j, j] - L[j, :j] @ L[j, :j]
        if pivot < -PSD_PIVOT_TOL:
            raise NonPSDCovariance(f"negative pivot {pivot:.3e} at index {j}")
        if pivot <= PSD_PIVOT_TOL:
            # the rest of column j must vanish as well
            rest = c[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]
            if np.any(np.abs(rest) > 1e-8):
                raise NonPSDCovariance(f"zero pivot with nonzero off-diagonal at index {j}")
            continue
        L[j, j] = np.sqrt(pivot)
        L[j + 1 :, j] = (c[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def family_dim(family: Family) -> int:
    if isinstance(family, UniformBox):
        return int(family.d)
    if isinstance(family, Gaussian):
        return len(family.mean)
    if isinstance(family, GaussianConvolution):
        return family_dim(family.base)
    raise InvalidInput(f"unknown sampling family {family!r}")


def _draw(family: Family, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(family, UniformBox):
        if not family.lo < family.hi:
            raise InvalidInput("UniformBox needs lo < hi")
        return rng.uniform(family.lo, family.hi, size=(n, int(family.d)))
    if isinstance(family, Gaussian):
        mean = np.asarray(family.mean, dtype=float)
        L = psd_factor(family.cov)
        if L.shape[0] != mean.shape[0]:
            raise DimensionMismatch("mean and covariance disagree on dimension")
        return mean + rng.standard_normal((n, mean.shape[0])) @ L.T
    if isinstance(family, GaussianConvolution):
        d = family_dim(family.base)
        cov = np.eye(d) if family.cov is None else family.cov
        L = psd_factor(cov)
        if L.shape[0] != d:
            raise DimensionMismatch("noise covariance and base family disagree on dimension")
        base = _draw(family.base, n, rng)
        return base + rng.standard_normal((n, d)) @ L.T
    raise InvalidInput(f"unknown sampling family {family!r}")


def sample(family: Family, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. draws from ``family`` as an ``(n, d)`` array.

    ``seed`` is either an integer (a fresh ``numpy`` PCG64 stream) or an
    existing ``np.random.Generator``, which is advanced.
    """
    if n < 1:
        raise InvalidInput("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return _draw(family, int(n), rng)


# ---------------------------------------------------------------- statistics


def barycenter(m: DiscreteMeasure) -> np.ndarray:
    return m.weights @ m.points


def moment5(m: DiscreteMeasure) -> float:
    """``sum_i w_i * ||x_i||_5^5``, i.e. the 5-norm raised to the fifth power."""
    return float(m.weights @ np.sum(np.abs(m.points) ** 5, axis=1))


def diameter(m1: DiscreteMeasure, m2: DiscreteMeasure, chunk: int = 2048) -> float:
    """Largest Euclidean distance between any two atoms of ``m1`` and ``m2`` combined."""
    if m1.dim != m2.dim:
        raise DimensionMismatch(f"dimensions {m1.dim} and {m2.dim} differ")
    pts = np.unique(np.vstack([m1.points, m2.points]), axis=0)
    sq = np.sum(pts**2, axis=1)
    best = 0.0
    for start in range(0, len(pts), chunk):
        block = pts[start : start + chunk]
        d2 = sq[start : start + chunk, None] + sq[None, :] - 2.0 * block @ pts.T
        best = max(best, float(d2.max()))
    if best <= 0.0:
        return 0.0
    # refine the rounding-prone Gram formula on the maximising pair
    i, j = _argmax_pair(pts, sq, chunk)
    return float(np.linalg.norm(pts[i] - pts[j]))


def _argmax_pair(pts, sq, chunk):
    best, arg = -1.0, (0, 0)
    for start in range(0, len(pts), chunk):
        block = pts[start : start + chunk]
        d2 = sq[start : start + chunk, None] + sq[None, :] - 2.0 * block @ pts.T
        k = int(np.argmax(d2))
        r, c = divmod(k, d2.shape[1])
        if d2[r, c] > best:
            best, arg = float(d2[r, c]), (start + r, c)
    return arg


def smooth(m: DiscreteMeasure, sigma: float, replicas: int = 10, seed=None) -> DiscreteMeasure:
    """Monte-Carlo stand-in for convolution with ``N(0, sigma^2 I)``.

    Atom ``i`` is replaced by ``replicas`` noisy copies carrying ``w_i / replicas``
    each.  Copies of atom ``i`` occupy rows ``i*replicas ... (i+1)*replicas - 1``.
    """
    if not (sigma > 0 and np.isfinite(sigma)):
        raise InvalidSigma(f"sigma must be positive, got {sigma!r}")
    if replicas < 1:
        raise InvalidInput("replicas must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pts = np.repeat(m.points, replicas, axis=0)
    pts = pts + sigma * rng.standard_normal(pts.shape)
    w = np.repeat(m.weights / replicas, replicas)
    return DiscreteMeasure(pts, w / w.sum())


def affine_map(m: DiscreteMeasure, A, b) -> DiscreteMeasure:
    """Pushforward of ``m`` by ``x -> A x + b``; weights are untouched."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.shape[1] != m.dim or A.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"map {A.shape} + {b.shape} incompatible with dimension {m.dim}")
    return DiscreteMeasure(m.points @ A.T + b, m.weights.copy())


def translate(m: DiscreteMeasure, v) -> DiscreteMeasure:
    v = np.asarray(v, dtype=float).reshape(-1)
    return affine_map(m, np.eye(m.dim), v)


# ---------------------------------------------------------------- CSV I/O


def to_csv(m: DiscreteMeasure) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{k + 1}" for k in range(m.dim)] + ["weight"])
    for p, w in zip(m.points, m.weights):
        writer.writerow([repr(float(v)) for v in p] + [repr(float(w))])
    return buf.getvalue()


def write_csv(m: DiscreteMeasure, path) -> None:
    Path(path).write_text(to_csv(m), encoding="utf-8")


def from_csv(text: str) -> DiscreteMeasure:
    """Parse the ``x1,...,xd[,weight]`` format; a missing weight column means uniform."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise EmptyInput("empty measure file")
    header = [h.strip().lower() for h in rows[0]]
    has_weight = header[-1] == "weight"
    coords = header[:-1] if has_weight else header
    if not coords or any(h != f"x{k + 1}" for k, h in enumerate(coords)):
        raise InvalidInput(f"bad header {rows[0]!r}; expected x1,...,xd[,weight]")
    body = rows[1:]
    if not body:
        raise EmptyInput("measure file has a header but no atoms")
    width = len(header)
    for lineno, r in enumerate(body, start=2):
        if len(r) != width:
            raise DimensionMismatch(f"line {lineno}: expected {width} fields, got {len(r)}")
    try:
        data = np.array([[float(c) for c in r] for r in body], dtype=float)
    except ValueError as exc:
        raise InvalidInput(f"non-numeric field: {exc}") from None
    if has_weight:
        return new_discrete(data[:, :-1], data[:, -1])
    return empirical_from_samples(data)


def read_csv(path) -> DiscreteMeasure:
    return from_csv(Path(path).read_text(encoding="utf-8"))
