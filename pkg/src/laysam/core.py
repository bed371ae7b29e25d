"""Shared numeric primitives: point storage, nearest-center distances,
order-statistic selection, and seeded sampling.

Every operation here is pure: identical inputs (plus the seed, where one is
taken) give bit-identical outputs regardless of parallelism. Wrapped arrays
are treated as immutable; callers must not modify them in place.

Accumulations over points rely on numpy's pairwise summation so that cost
comparisons at 1e-9 tolerance stay stable.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

# Seeds are 64-bit unsigned integers.
Seed = int

_SEED_SPAN = 2**64


def _check_seed(seed):
    seed = operator.index(seed)
    if not 0 <= seed < _SEED_SPAN:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def derive_seeds(seed, count):
    """Derive `count` independent child seeds from one parent seed.

    The derivation is a pure function of (seed, count); child i is the same
    no matter how many siblings are requested after it is drawn, which keeps
    per-layer / per-trial substreams independent of scheduling.
    """
    ss = np.random.SeedSequence(_check_seed(seed))
    return ss.generate_state(int(count), dtype=np.uint64)


@dataclass(frozen=True)
class PointSet:
    """n points in d dimensions, stored as a dense (n, d) float64 matrix.

    With ``has_response=True`` the last column is the response y and the
    first d-1 columns are the features (regression layout).
    """

    coords: np.ndarray
    has_response: bool = False

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2:
            raise ValueError(f"coords must be 2-d (n points x d dims), got shape {coords.shape}")
        n, d = coords.shape
        if n < 1 or d < 1:
            raise ValueError("need at least one point and one dimension")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coords must be finite")
        if self.has_response and d < 2:
            raise ValueError("response layout needs at least one feature column (d >= 2)")
        object.__setattr__(self, "coords", coords)

    @classmethod
    def from_1d(cls, values, has_response=False):
        """Convenience constructor for 1-d instances: one coordinate per point."""
        return cls(np.asarray(values, dtype=np.float64).reshape(-1, 1), has_response)

    @property
    def n(self):
        return self.coords.shape[0]

    @property
    def dim(self):
        return self.coords.shape[1]

    @property
    def features(self):
        """The feature block: all columns, or all but the response column."""
        return self.coords[:, :-1] if self.has_response else self.coords

    @property
    def response(self):
        if not self.has_response:
            raise ValueError("this point set has no response column")
        return self.coords[:, -1]


@dataclass(frozen=True)
class WeightedPointSet:
    """Points with nonnegative weights; total weight must be positive."""

    points: PointSet
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (self.points.n,):
            raise ValueError(f"weights must have shape ({self.points.n},), got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        if w.sum() <= 0:
            raise ValueError("total weight must be positive")
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_points(cls, points):
        """Lift a plain point set to unit weights (total weight n)."""
        return cls(points, np.ones(points.n))

    @property
    def n(self):
        return self.points.n

    @property
    def dim(self):
        return self.points.dim

    @property
    def total_weight(self):
        return float(np.sum(self.weights))


def as_weighted(data):
    """Accept a PointSet, WeightedPointSet, or anything with a ``.data`` weighted view."""
    if isinstance(data, WeightedPointSet):
        return data
    if isinstance(data, PointSet):
        return WeightedPointSet.from_points(data)
    inner = getattr(data, "data", None)
    if isinstance(inner, WeightedPointSet):
        return inner
    raise TypeError(f"cannot interpret {type(data).__name__} as a weighted point set")


def _coords_of(points):
    if isinstance(points, PointSet):
        return points.coords
    return np.asarray(points, dtype=np.float64)


def _centers_of(centers):
    c = getattr(centers, "centers", centers)
    c = np.asarray(c, dtype=np.float64)
    if c.ndim == 1:
        c = c.reshape(1, -1)
    return c


def nearest_centers(points, centers):
    """Per-point (distance to nearest center, index of nearest center).

    Ties between centers go to the smaller center index. Brute force over all
    n*k pairs; k is small enough that no spatial index is warranted.
    """
    p = _coords_of(points)
    c = _centers_of(centers)
    if c.shape[0] < 1:
        raise ValueError("need at least one center")
    if c.shape[1] != p.shape[1]:
        raise ValueError(
            f"dimension mismatch: points are {p.shape[1]}-d, centers are {c.shape[1]}-d"
        )
    d = cdist(p, c)
    idx = np.argmin(d, axis=1)
    return d[np.arange(len(p)), idx], idx


def min_distances(points, centers):
    """Euclidean distance from every point to its nearest center."""
    return nearest_centers(points, centers)[0]


def select_top_m(values, m):
    """Indices of the m largest values, plus the largest non-selected value.

    Ties at the cutoff prefer the smaller index into the selected set. The
    returned threshold is the maximum among non-selected entries (0.0 when
    everything is selected). Runs in expected linear time via argpartition.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError("values must be 1-d")
    n = values.shape[0]
    m = operator.index(m)
    if not 0 <= m <= n:
        raise ValueError(f"m must be in [0, {n}], got {m}")
    if m == n:
        return np.arange(n, dtype=np.int64), 0.0
    if m == 0:
        return np.empty(0, dtype=np.int64), float(values.max()) if n else 0.0
    kth = n - m
    part = np.argpartition(values, kth)
    cut = values[part[kth]]  # the m-th largest value
    greater = np.flatnonzero(values > cut)
    ties = np.flatnonzero(values == cut)
    need = m - greater.shape[0]
    selected = np.sort(np.concatenate([greater, ties[:need]])).astype(np.int64)
    if need < ties.shape[0]:
        threshold = float(cut)  # an equal value stays outside the selection
    else:
        below = values[values < cut]
        threshold = float(below.max()) if below.size else 0.0
    return selected, threshold


def sample_without_replacement(population_size, m, seed):
    """m distinct indices from range(population_size), uniform over m-subsets.

    Deterministic for a fixed seed; the result is returned in ascending order.
    """
    population_size = operator.index(population_size)
    m = operator.index(m)
    if not 0 <= m <= population_size:
        raise ValueError(f"cannot draw {m} items from a population of {population_size}")
    rng = np.random.default_rng(_check_seed(seed))
    picks = rng.choice(population_size, size=m, replace=False)
    return np.sort(picks).astype(np.int64)
