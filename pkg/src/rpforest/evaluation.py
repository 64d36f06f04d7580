"""Exhaustive reference answers, accuracy metrics, and the separation bound.

The reference table is computed by brute force over all pairs, through the
same distance expression the forest uses.  Equal true distances therefore
compare equal exactly, which is what lets the metrics treat ties robustly
and check approximate-vs-exact dominance with zero tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .data import Dataset, as_dataset
from .forest import BatchResult, RandomProjectionForest, point_distances, top_k_by_distance
from .projection import project_matrix, random_direction
from .rng import seed_sequence
from .tree import RpTree, build_tree


@dataclass(frozen=True)
class ExactKnnTable:
    """True top-K (indices and distances) for every dataset point.

    Self-matches are excluded by index; rank-K ties go to the smaller index,
    the same rule the forest applies.
    """

    k: int
    indices: np.ndarray
    distances: np.ndarray
    checksum: str

    @property
    def n(self) -> int:
        return self.indices.shape[0]

    def kth_distances(self) -> np.ndarray:
        return self.distances[:, self.k - 1]


def _exact_block(points: np.ndarray, lo: int, hi: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    n = points.shape[0]
    all_ids = np.arange(n, dtype=np.int64)
    idx = np.empty((hi - lo, k), dtype=np.int64)
    dist = np.empty((hi - lo, k), dtype=np.float64)
    for i in range(lo, hi):
        d = point_distances(points, points[i])
        d[i] = np.inf
        idx[i - lo], dist[i - lo] = top_k_by_distance(all_ids, d, k)
    return idx, dist


def exact_knn(data, k: int, n_jobs: int = 1) -> ExactKnnTable:
    """Brute-force true top-K table; quadratic in n, use for evaluation only."""
    data = as_dataset(data)
    if not 1 <= k <= data.n - 1:
        raise ValueError(f"need 1 <= k <= n-1, got k={k} with n={data.n}")
    if n_jobs == 1 or data.n < 4:
        blocks = [_exact_block(data.points, 0, data.n, k)]
    else:
        bounds = np.linspace(0, data.n, abs(n_jobs) * 4 + 1).astype(int)
        spans = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        blocks = Parallel(n_jobs=n_jobs)(
            delayed(_exact_block)(data.points, a, b, k) for a, b in spans
        )
    return ExactKnnTable(
        k=k,
        indices=np.concatenate([b[0] for b in blocks]),
        distances=np.concatenate([b[1] for b in blocks]),
        checksum=data.checksum(),
    )


def exact_knn_cached(data, k: int, cache_dir, n_jobs: int = 1) -> ExactKnnTable:
    """Like :func:`exact_knn`, memoized on (dataset fingerprint, k)."""
    data = as_dataset(data)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"exact_{data.checksum()[:32]}_k{k}.npz"
    if path.exists():
        with np.load(path, allow_pickle=False) as payload:
            if str(payload["checksum"]) == data.checksum() and int(payload["k"]) == k:
                return ExactKnnTable(
                    k=k,
                    indices=payload["indices"],
                    distances=payload["distances"],
                    checksum=data.checksum(),
                )
    table = exact_knn(data, k, n_jobs=n_jobs)
    np.savez(
        path,
        k=np.int64(k),
        checksum=np.str_(table.checksum),
        indices=table.indices,
        distances=table.distances,
    )
    return table


@dataclass(frozen=True)
class AccuracyReport:
    """Accuracy of one batch of approximate answers against the truth.

    The optional trailing fields record the run that produced the batch so
    a report row is self-describing.
    """

    k: int
    n_queries: int
    missing_rate: float
    mean_exact_dk: float
    mean_approx_dk: float
    normalized_discrepancy: float
    shortfall_count: int
    dominance_violations: int
    n_trees: int | None = None
    n_try: int | None = None
    leaf_capacity: int | None = None
    seed: int | None = None


def missing_rate(approx: BatchResult, exact: ExactKnnTable) -> float:
    """Average fraction of the true top-K each query failed to cover.

    A query's miss count is K minus the number of returned points whose
    distance is within the true K-th distance.  Counting by distance rather
    than identity means a returned point tied with a true neighbor is never
    scored as a miss.  Shortfall rows simply have fewer returned points and
    miss accordingly.
    """
    _check_match(approx, exact)
    within = (approx.distances <= exact.kth_distances()[:, None]).sum(axis=1)
    misses = exact.k - within
    return float(misses.sum()) / (exact.n * exact.k)


def discrepancy(approx: BatchResult, exact: ExactKnnTable) -> tuple[float, float, float, int]:
    """(mean exact d_k, mean approx d_k, normalized gap, rows excluded).

    Rows that returned fewer than K points have no K-th distance; they are
    excluded from both means and reported, never silently dropped into the
    average.  The gap is (approx - exact) / exact with 0/0 defined as 0.
    """
    _check_match(approx, exact)
    ok = ~approx.shortfalls
    excluded = int((~ok).sum())
    if not ok.any():
        return math.nan, math.nan, math.nan, excluded
    mean_exact = float(exact.kth_distances()[ok].mean())
    mean_approx = float(approx.distances[ok, approx.k - 1].mean())
    if mean_exact == 0.0:
        gap = 0.0 if mean_approx == 0.0 else math.inf
    else:
        gap = (mean_approx - mean_exact) / mean_exact
    return mean_exact, mean_approx, gap, excluded


def dominance_violations(approx: BatchResult, exact: ExactKnnTable) -> int:
    """Rows where any approximate rank distance undercuts the true one.

    The j-th smallest distance within a candidate subset can never be below
    the j-th smallest overall, so any violation is a defect, not noise.
    """
    _check_match(approx, exact)
    return int((approx.distances < exact.distances).any(axis=1).sum())


def accuracy_report(
    approx: BatchResult,
    exact: ExactKnnTable,
    *,
    n_trees: int | None = None,
    n_try: int | None = None,
    leaf_capacity: int | None = None,
    seed: int | None = None,
) -> AccuracyReport:
    mean_exact, mean_approx, gap, _ = discrepancy(approx, exact)
    return AccuracyReport(
        k=exact.k,
        n_queries=exact.n,
        missing_rate=missing_rate(approx, exact),
        mean_exact_dk=mean_exact,
        mean_approx_dk=mean_approx,
        normalized_discrepancy=gap,
        shortfall_count=int(approx.shortfalls.sum()),
        dominance_violations=dominance_violations(approx, exact),
        n_trees=n_trees,
        n_try=n_try,
        leaf_capacity=leaf_capacity,
        seed=seed,
    )


def _check_match(approx: BatchResult, exact: ExactKnnTable) -> None:
    if approx.k != exact.k:
        raise ValueError(f"k mismatch: approx {approx.k} vs exact {exact.k}")
    if approx.n_queries != exact.n:
        raise ValueError(f"row mismatch: approx {approx.n_queries} vs exact {exact.n}")


@dataclass(frozen=True)
class SeparationBoundParams:
    """Inputs to the pair-separation probability bound.

    ``pair_distance`` is the distance between the two points, ``neck`` the
    smallest projected extent of the set over all unit directions,
    ``shrink_factor`` the per-level node-extent decay in (0, 1),
    ``max_splits`` the tree depth cap (at least 2), and ``ensemble_size``
    the number of independent trees.
    """

    pair_distance: float
    neck: float
    shrink_factor: float
    max_splits: int
    ensemble_size: int

    def __post_init__(self):
        if not self.pair_distance > 0:
            raise ValueError(f"pair_distance must be > 0, got {self.pair_distance}")
        if not self.neck > 0:
            raise ValueError(f"neck must be > 0, got {self.neck}")
        if not 0.0 < self.shrink_factor < 1.0:
            raise ValueError(f"shrink_factor must be in (0, 1), got {self.shrink_factor}")
        if self.max_splits < 2:
            raise ValueError(f"max_splits must be >= 2, got {self.max_splits}")
        if self.ensemble_size < 1:
            raise ValueError(f"ensemble_size must be >= 1, got {self.ensemble_size}")


def separation_bound(params: SeparationBoundParams) -> float:
    """Upper bound on the probability every tree separates the pair.

    The single-tree factor is (2 d / (pi nu)) / (gamma^(J-2) (1 - gamma));
    independence across trees raises it to the ensemble size.  The factor
    exceeds 1 (and the bound is vacuous) unless the pair is much closer
    than the neck.
    """
    base = (2.0 * params.pair_distance) / (math.pi * params.neck)
    base = base / (params.shrink_factor ** (params.max_splits - 2) * (1.0 - params.shrink_factor))
    return base ** params.ensemble_size


def estimate_neck(data, n_dirs: int, rng: np.random.Generator, indices=None) -> float:
    """Monte-Carlo upper estimate of the neck (min projected extent).

    Sequential minimum over ``n_dirs`` random directions, so for a fixed
    generator state the estimate can only tighten as ``n_dirs`` grows.  An
    optional index subset restricts the estimate to those points.
    """
    pts = as_dataset(data).points
    if indices is not None:
        pts = pts[np.asarray(indices, dtype=np.int64)]
    if pts.shape[0] < 2:
        raise ValueError(f"need at least 2 points, got {pts.shape[0]}")
    if n_dirs < 1:
        raise ValueError(f"n_dirs must be >= 1, got {n_dirs}")
    best = math.inf
    for _ in range(n_dirs):
        coeffs = project_matrix(pts, random_direction(pts.shape[1], rng))
        best = min(best, float(coeffs.max() - coeffs.min()))
    return best


def nearest_pair(data) -> tuple[int, int, float]:
    """Closest pair of distinct points (i, j, distance), i < j."""
    table = exact_knn(data, 1)
    i = int(np.argmin(table.distances[:, 0]))
    j = int(table.indices[i, 0])
    return (min(i, j), max(i, j), float(table.distances[i, 0]))


def pair_separated(tree: RpTree, i: int, j: int) -> bool:
    """Whether the tree assigned the two dataset points to different leaves."""
    assign = tree.leaf_assignments()
    return bool(assign[i] != assign[j])


def separation_probability(
    data,
    pair: tuple[int, int],
    forest: RandomProjectionForest,
    trials: int,
    master_seed=None,
) -> float:
    """Fraction of independently grown ensembles separating the pair.

    An ensemble separates the pair when no tree puts both points in one
    leaf.  Trial t grows trees from the streams (master_seed, t, 0..T-1),
    exactly the trees ``forest`` would grow when fitted with
    ``random_state = seed_sequence(master_seed, t)``; growth stops early at
    the first tree that keeps the pair together, which cannot change the
    outcome.
    """
    data = as_dataset(data)
    i, j = (data.check_index(pair[0]), data.check_index(pair[1]))
    if i == j:
        raise ValueError(f"pair must be two distinct points, got ({i}, {j})")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    params = forest._tree_params()
    separated = 0
    for trial in range(trials):
        all_separate = True
        for t in range(forest.n_trees):
            rng = np.random.default_rng(seed_sequence(master_seed, trial, t))
            tree = build_tree(data, params, rng)
            if not pair_separated(tree, i, j):
                all_separate = False
                break
        separated += int(all_separate)
    return separated / trials
