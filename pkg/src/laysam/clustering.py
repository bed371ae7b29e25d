"""Trimmed clustering with outliers: objectives, layered-sampling coresets,
and the iterative solvers the coresets accelerate.

The trimmed objective discards outlier mass z of largest nearest-center
distances and averages what remains over (W - z). A weighted point of weight
w behaves exactly like w overlapping unit points, so the point at the
inlier/outlier boundary may be split fractionally.

The layered coreset partitions the input into geometric rings around an
anchor solution, samples uniformly inside each ring, and keeps the outermost
ceil((1 + 1/eps) * z) points verbatim with unit weight. The construction is
one distance pass plus a linear-time selection, O(k*n*d) overall.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    PointSet,
    WeightedPointSet,
    as_weighted,
    derive_seeds,
    min_distances,
    nearest_centers,
    sample_without_replacement,
    select_top_m,
)

log = logging.getLogger(__name__)


class DegenerateLayersError(ValueError):
    """The outer ring would hold the entire input: the coreset is the full set."""


@dataclass(frozen=True)
class CenterSet:
    """A clustering solution: k centers in R^d."""

    centers: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.float64)
        if c.ndim == 1:
            c = c.reshape(1, -1)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError("centers must be a nonempty (k, d) array")
        if not np.all(np.isfinite(c)):
            raise ValueError("centers must be finite")
        object.__setattr__(self, "centers", c)

    @classmethod
    def from_1d(cls, values):
        return cls(np.asarray(values, dtype=np.float64).reshape(-1, 1))

    @property
    def k(self):
        return self.centers.shape[0]

    @property
    def dim(self):
        return self.centers.shape[1]


@dataclass(frozen=True)
class LayerPartition:
    """Ring membership around an anchor solution.

    ``layers[i]`` holds the indices of ring i: ring 0 covers distances up to
    the base radius r, ring i >= 1 covers (2^(i-1) r, 2^i r], subject to the
    rank rule that ``outer`` is exactly the ``outer_target`` farthest points
    (ties broken toward the smaller index). 2^N r equals the largest distance
    outside ``outer``.
    """

    base_radius: float
    layers: tuple
    outer: np.ndarray
    outer_target: int

    @property
    def n_layers(self):
        """N: index of the outermost ring (there are N + 1 rings)."""
        return len(self.layers) - 1


@dataclass(frozen=True)
class BuilderParams:
    """Parameters a coreset was built with (None where not applicable)."""

    epsilon: float = None
    eta: float = None
    layer_targets: tuple = None
    constant: float = None


@dataclass(frozen=True)
class Coreset:
    """A weighted subset of a source instance, tagged with per-point origin.

    Origin tags are "layer<i>" for ring samples, "outer" for verbatim outer
    points, and "uniform" / "nn" for the baseline constructions.
    ``source_indices[j]`` is the row of the source instance that point j came
    from. Total weight always equals the source size n.
    """

    data: WeightedPointSet
    origin: np.ndarray
    source_indices: np.ndarray
    params: BuilderParams = None

    @property
    def size(self):
        return self.data.n

    @property
    def total_weight(self):
        return self.data.total_weight


@dataclass(frozen=True)
class TrimmedCostReport:
    """Objective value plus the induced inlier/outlier split.

    ``outlier_weight_per_point`` maps point index -> weight removed; the
    boundary point may appear with a fractional share so that the removed
    mass is exactly z. ``assignment`` is the nearest-center index per point
    (None for regression residual trims). ``distances`` is the per-point
    distance (or |residual|) the trim was computed from.
    """

    cost: float
    inlier_weight: float
    outlier_weight_per_point: dict
    assignment: np.ndarray
    distances: np.ndarray

    def inlier_mass(self, weights):
        """Per-point weight left after removing the outlier shares."""
        w = np.array(weights, dtype=np.float64, copy=True)
        for i, m in self.outlier_weight_per_point.items():
            w[i] -= m
        return np.maximum(w, 0.0)


def trim_by_distance(distances, weights, z, power, assignment=None):
    """Core trimming rule shared by the clustering and regression objectives.

    Removes exactly z mass greedily from the largest distances (ties broken
    toward the smaller point index, splitting the boundary point if needed)
    and returns the normalized trimmed cost report.
    """
    distances = np.asarray(distances, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if power not in (1, 2):
        raise ValueError(f"power must be 1 or 2, got {power}")
    total = float(np.sum(weights))
    z = float(z)
    if not 0 <= z < total:
        raise ValueError(f"outlier mass z={z} must satisfy 0 <= z < total weight {total}")
    n = distances.shape[0]
    removed = {}
    if z > 0:
        order = np.lexsort((np.arange(n), -distances))  # farthest first, ties by index
        w_ord = weights[order]
        cum = np.cumsum(w_ord)
        j = min(int(np.searchsorted(cum, z, side="left")), n - 1)
        for t in range(j):
            if w_ord[t] > 0:
                removed[int(order[t])] = float(w_ord[t])
        frac = z - (float(cum[j - 1]) if j else 0.0)
        if frac > 0:
            removed[int(order[j])] = min(frac, float(w_ord[j]))
    w_in = np.array(weights, copy=True)
    for i, m in removed.items():
        w_in[i] -= m
    np.maximum(w_in, 0.0, out=w_in)
    vals = distances if power == 1 else distances * distances
    cost = float(np.sum(w_in * vals) / (total - z))
    return TrimmedCostReport(
        cost=cost,
        inlier_weight=total - z,
        outlier_weight_per_point=removed,
        assignment=assignment,
        distances=distances,
    )


def trimmed_cluster_cost(data, centers, z, power):
    """Trimmed k-clustering objective of a (weighted) instance at ``centers``.

    power=1 gives the k-median objective, power=2 the k-means objective; in
    both cases the farthest z mass is discarded and the rest is averaged over
    (W - z).
    """
    w = as_weighted(data)
    c = centers if isinstance(centers, CenterSet) else CenterSet(centers)
    dist, assign = nearest_centers(w.points, c)
    return trim_by_distance(dist, w.weights, z, power, assignment=assign)


def _layers_from_distances(distances, z, epsilon, n_layers=None):
    n = distances.shape[0]
    if not 0 < z < n:
        raise ValueError(f"need 0 < z < n, got z={z}, n={n}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    m = math.ceil((1 + 1 / epsilon) * z)
    if m >= n:
        raise DegenerateLayersError(
            f"outer ring would hold {m} >= n={n} points; the coreset is the full set"
        )
    outer, threshold = select_top_m(distances, m)
    if n_layers is None:
        n_layers = max(1, math.ceil(math.log2((n - z) / z)))
    if n_layers < 1:
        raise ValueError("need at least one doubling layer")
    r = threshold / float(2**n_layers)
    non_outer = np.setdiff1d(np.arange(n), outer, assume_unique=True)
    d_no = distances[non_outer]
    level = np.zeros(d_no.shape[0], dtype=np.int64)
    if r > 0:
        above = d_no > r
        level[above] = np.ceil(np.log2(d_no[above] / r)).astype(np.int64)
        np.clip(level, 0, n_layers, out=level)
    layers = tuple(non_outer[level == i] for i in range(n_layers + 1))
    if log.isEnabledFor(logging.DEBUG):
        # Markov-style sanity diagnostic: the cap 2^N r should stay within
        # (eps/z)(n-z) times the trimmed l1 cost at the anchor. Logged only.
        anchor_cost = trim_by_distance(distances, np.ones(n), z, 1).cost
        log.debug(
            "layer cap 2^%d*r=%.6g vs (eps/z)(n-z)*anchor_cost=%.6g",
            n_layers,
            threshold,
            epsilon / z * (n - z) * anchor_cost,
        )
    return LayerPartition(
        base_radius=float(r), layers=layers, outer=outer, outer_target=m
    )


def build_layers_clustering(points, anchor, z, epsilon, n_layers=None):
    """Partition an instance into rings around an anchor solution.

    The outer set is exactly the ceil((1 + 1/eps) * z) farthest points from
    the anchor (index tie-break); 2^N r is the largest remaining distance and
    N defaults to max(1, ceil(log2((n - z) / z))). Raises
    DegenerateLayersError when the outer set would be the whole input.
    """
    dist = min_distances(points, anchor)
    return _layers_from_distances(dist, z, epsilon, n_layers)


def _clustering_layer_target(k, d, epsilon, eta, n_layers, constant):
    return math.ceil(
        constant
        * (1.0 / epsilon**2)
        * k
        * d
        * math.log(max(d / epsilon, 2.0))
        * math.log((n_layers + 1) / eta)
    )


def _resolve_targets(partition, sample_override, default_target):
    count = partition.n_layers + 1
    if sample_override is None:
        targets = [default_target] * count
    elif np.isscalar(sample_override):
        targets = [int(sample_override)] * count
    else:
        targets = [int(t) for t in sample_override]
        if len(targets) != count:
            raise ValueError(f"need {count} per-layer targets, got {len(targets)}")
    return [max(1, t) for t in targets]


def _full_set_coreset(points, epsilon, eta):
    n = points.n
    return Coreset(
        data=WeightedPointSet.from_points(points),
        origin=np.full(n, "outer", dtype="<U16"),
        source_indices=np.arange(n, dtype=np.int64),
        params=BuilderParams(epsilon=epsilon, eta=eta),
    )


def _sample_layers(points, partition, targets, seed, params):
    """Draw the per-ring samples and assemble the weighted coreset.

    Ring i contributes min(targets[i], |ring i|) points of weight
    |ring i| / |sample i| (weight exactly 1 when fully taken); the outer
    points enter verbatim with unit weight. Sampling is sequential per ring
    with seed-derived substreams, so the result is schedule-independent.
    """
    child = derive_seeds(seed, partition.n_layers + 1)
    idx_parts, w_parts, origin_parts = [], [], []
    for i, members in enumerate(partition.layers):
        pop = members.shape[0]
        if pop == 0:
            continue
        take = min(targets[i], pop)
        pick = sample_without_replacement(pop, take, int(child[i]))
        idx_parts.append(members[pick])
        w_parts.append(np.full(take, pop / take, dtype=np.float64))
        origin_parts.append(np.full(take, f"layer{i}", dtype="<U16"))
    idx_parts.append(partition.outer)
    w_parts.append(np.ones(partition.outer.shape[0]))
    origin_parts.append(np.full(partition.outer.shape[0], "outer", dtype="<U16"))
    src = np.concatenate(idx_parts)
    weights = np.concatenate(w_parts)
    origin = np.concatenate(origin_parts)
    data = WeightedPointSet(
        PointSet(points.coords[src], has_response=points.has_response), weights
    )
    return Coreset(data=data, origin=origin, source_indices=src, params=params)


def layered_coreset_clustering(
    points, anchor, z, epsilon, eta, sample_override=None, seed=0, constant=0.05
):
    """Layered-sampling coreset for trimmed k-clustering around ``anchor``.

    Per-ring sample targets default to
    ceil(constant * (1/eps^2) * k * d * ln(max(d/eps, 2)) * ln((N+1)/eta));
    ``sample_override`` (an int, or one int per ring) replaces the formula.
    Total weight equals n. In the degenerate case where the outer ring would
    cover everything, the full instance is returned verbatim with unit
    weights, all points tagged "outer".
    """
    if not isinstance(points, PointSet):
        raise TypeError("layered coresets are built from an unweighted PointSet")
    c = anchor if isinstance(anchor, CenterSet) else CenterSet(anchor)
    try:
        partition = build_layers_clustering(points, c, z, epsilon)
    except DegenerateLayersError:
        warnings.warn("outer ring covers the whole input; returning the full set")
        return _full_set_coreset(points, epsilon, eta)
    default = _clustering_layer_target(
        c.k, points.dim, epsilon, eta, partition.n_layers, constant
    )
    targets = _resolve_targets(partition, sample_override, default)
    params = BuilderParams(
        epsilon=epsilon,
        eta=eta,
        layer_targets=tuple(targets),
        constant=constant if sample_override is None else None,
    )
    return _sample_layers(points, partition, targets, seed, params)


def _weighted_median_columns(x, w):
    """Coordinate-wise weighted (lower) median."""
    half = w.sum() / 2.0
    out = np.empty(x.shape[1])
    for c in range(x.shape[1]):
        order = np.argsort(x[:, c], kind="stable")
        cum = np.cumsum(w[order])
        out[c] = x[order[np.searchsorted(cum, half, side="left")], c]
    return out


def _update_centers(weighted, report, centers, power):
    x = weighted.points.coords
    w_in = report.inlier_mass(weighted.weights)
    assign = report.assignment
    k = centers.shape[0]
    new = np.array(centers, copy=True)
    dead = []
    for j in range(k):
        sel = np.flatnonzero((assign == j) & (w_in > 0))
        if sel.size == 0:
            dead.append(j)
            continue
        wj = w_in[sel]
        if power == 2:
            new[j] = (wj[:, None] * x[sel]).sum(axis=0) / wj.sum()
        else:
            new[j] = _weighted_median_columns(x[sel], wj)
    if dead:
        # Re-seed each emptied center at the farthest remaining inlier point
        # (distance descending, ties by ascending index) - deterministic.
        alive = np.flatnonzero(w_in > 0)
        order = alive[np.lexsort((alive, -report.distances[alive]))]
        for j, i in zip(dead, order):
            new[j] = x[i]
    return new


def kmeans_minus_minus(
    data, k, z, init, max_iter=100, tol=1e-6, power=2, cost_log=None
):
    """Alternating minimization for trimmed k-clustering.

    Each round trims the farthest z mass at the current centers, then
    recomputes every center from its assigned inlier mass (weighted mean for
    power=2, coordinate-wise weighted median for power=1; the boundary point
    contributes its inlier fraction). A round that would increase the cost is
    rejected and the previous solution returned, so the cost sequence is
    non-increasing. Stops when the relative improvement drops below ``tol``
    or after ``max_iter`` rounds. A center that loses all assigned mass is
    re-seeded at the farthest remaining inlier point.

    Returns (CenterSet, final TrimmedCostReport, rounds performed). When
    ``cost_log`` is a list, the cost after every evaluation is appended.
    """
    w = as_weighted(data)
    c = init if isinstance(init, CenterSet) else CenterSet(init)
    if c.k != k:
        raise ValueError(f"init has {c.k} centers, expected k={k}")
    centers = np.array(c.centers, copy=True)
    report = trimmed_cluster_cost(w, CenterSet(centers), z, power)
    if cost_log is not None:
        cost_log.append(report.cost)
    iterations = 0
    for _ in range(max_iter):
        candidate = _update_centers(w, report, centers, power)
        new_report = trimmed_cluster_cost(w, CenterSet(candidate), z, power)
        if new_report.cost > report.cost * (1 + 1e-12):
            break  # safeguard: never accept a worsening step
        gain = report.cost - new_report.cost
        rel = gain / report.cost if report.cost > 0 else 0.0
        centers, report = candidate, new_report
        iterations += 1
        if cost_log is not None:
            cost_log.append(report.cost)
        if rel < tol:
            break
    return CenterSet(centers), report, iterations


def _trimmed_mean(values, z_count, power):
    n = values.shape[0]
    keep = n - z_count
    kept = np.partition(values, keep - 1)[:keep] if z_count else values
    vals = kept if power == 1 else kept * kept
    return float(np.sum(vals) / keep)


def local_search_outliers_seed(points, k, z, sample_factor=40, seed=0, power=1):
    """Seed k centers by local search with outliers on a small uniform sample.

    Draws min(sample_factor * k, n) points, initializes by a greedy
    farthest-point sweep, then repeatedly applies the best single-center swap
    with a sample point while it improves the trimmed sample cost by more
    than a (1 - 1/k) factor, up to a budget of 100 * k accepted swaps. The
    outlier count is rescaled to the sample as ceil(z * |sample| / n).
    Returned centers are always sample points; if the sample has fewer than k
    distinct points, duplicates are allowed (with a warning).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    n = points.n
    size = min(sample_factor * k, n)
    if size < k:
        raise ValueError(f"sample of {size} points cannot seed {k} centers")
    child = derive_seeds(seed, 1)
    idx = sample_without_replacement(n, size, int(child[0]))
    s = points.coords[idx]
    zs = min(math.ceil(z * size / n), size - 1) if z > 0 else 0

    # Greedy farthest-point sweep (ties toward the smaller index).
    chosen = [0]
    gap = np.linalg.norm(s - s[0], axis=1)
    while len(chosen) < k:
        t = int(np.argmax(gap))
        chosen.append(t)
        np.minimum(gap, np.linalg.norm(s - s[t], axis=1), out=gap)
    if np.unique(s[chosen], axis=0).shape[0] < k:
        warnings.warn("sample has fewer than k distinct points; duplicated centers")

    pair = np.linalg.norm(s[:, None, :] - s[None, :, :], axis=2)  # all sample pairs
    cur = np.array(chosen)
    dist_cur = pair[:, cur]
    cost = _trimmed_mean(dist_cur.min(axis=1), zs, power)
    accepted = 0
    while accepted < 100 * k:
        best = (cost, None, None)
        in_use = set(int(v) for v in cur)
        for j in range(k):
            others = (
                np.delete(dist_cur, j, axis=1).min(axis=1)
                if k > 1
                else np.full(size, np.inf)
            )
            for q in range(size):
                if q in in_use:
                    continue
                cand_cost = _trimmed_mean(np.minimum(others, pair[:, q]), zs, power)
                if cand_cost < best[0]:
                    best = (cand_cost, j, q)
        if best[1] is None or best[0] >= (1 - 1 / k) * cost:
            break
        cur[best[1]] = best[2]
        dist_cur = pair[:, cur]
        cost = best[0]
        accepted += 1
    return CenterSet(points.coords[idx[cur]])
