"""Forest search: union the routed leaves, then exact top-K inside the union.

The estimator follows the familiar fit/kneighbors surface.  Constructor
arguments are stored verbatim and validated in :meth:`fit`; fitted state
lives in trailing-underscore attributes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import Dataset, as_dataset, check_matrix, check_vector
from .rng import SeedLike, seed_sequence
from .tree import RpTree, TreeParams, build_tree

FOREST_FORMAT = "rpforest.forest"
FOREST_VERSION = 1


def point_distances(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Euclidean distance from ``q`` to every row of ``points``.

    Single distance path for forest queries and the exhaustive reference,
    so equal true distances compare equal bit for bit.
    """
    diff = points - q
    return np.sqrt((diff * diff).sum(axis=1))


def top_k_by_distance(ids: np.ndarray, dist: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Closest ``k`` of the given candidates; rank-K ties keep smaller index.

    Returns fewer than ``k`` entries when fewer candidates were supplied.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if ids.shape[0] > k:
        kth = np.partition(dist, k - 1)[k - 1]
        keep = dist <= kth
        ids, dist = ids[keep], dist[keep]
    order = np.lexsort((ids, dist))[:k]
    return ids[order].astype(np.int64), dist[order]


@dataclass(frozen=True)
class QueryResult:
    """Top-K answer for one query."""

    indices: np.ndarray
    distances: np.ndarray
    candidate_count: int
    shortfall: bool
    query_index: int | None = None


@dataclass(frozen=True)
class BatchResult:
    """Top-K answers for a query batch, padded to fixed width.

    Rows with fewer than ``k`` candidates are padded with index -1 and
    distance +inf and flagged in ``shortfalls``; nothing is silently
    dropped.
    """

    k: int
    indices: np.ndarray
    distances: np.ndarray
    candidate_counts: np.ndarray
    shortfalls: np.ndarray

    @property
    def n_queries(self) -> int:
        return self.indices.shape[0]


def _run_query_block(
    trees: list[RpTree],
    points: np.ndarray,
    Q: np.ndarray,
    k: int,
    exclude: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Answer a contiguous block of queries (module-level for pickling)."""
    m = Q.shape[0]
    leaf_ids = [tree.route_many(Q) for tree in trees]
    out_idx = np.full((m, k), -1, dtype=np.int64)
    out_dist = np.full((m, k), np.inf, dtype=np.float64)
    counts = np.empty(m, dtype=np.int64)
    for j in range(m):
        merged = np.concatenate(
            [tree.leaf_buckets[leaf_ids[t][j]] for t, tree in enumerate(trees)]
        )
        cand = np.unique(merged)
        if exclude is not None and exclude[j] >= 0:
            cand = cand[cand != exclude[j]]
        ids, dist = top_k_by_distance(cand, point_distances(points[cand], Q[j]), k)
        out_idx[j, : ids.shape[0]] = ids
        out_dist[j, : dist.shape[0]] = dist
        counts[j] = cand.shape[0]
    return out_idx, out_dist, counts, counts < k


def _build_one(data: Dataset, params: TreeParams, entropy, spawn_key: tuple, i: int) -> RpTree:
    """Build tree ``i`` from its own child stream (module-level for pickling)."""
    seq = np.random.SeedSequence(entropy=entropy, spawn_key=spawn_key + (i,))
    return build_tree(data, params, np.random.default_rng(seq))


class RandomProjectionForest(BaseEstimator):
    """Approximate k-nearest-neighbor index over an ensemble of projection trees.

    Each of ``n_trees`` trees is grown independently from its own random
    stream.  A query is routed down every tree; the union of the reached
    leaf buckets is the candidate set, and the answer is the exact top-K
    within it by Euclidean distance.

    Results are a deterministic function of (data, parameters,
    ``random_state``); ``n_jobs`` only distributes work and never changes
    any output bit.
    """

    def __init__(
        self,
        n_trees: int = 10,
        leaf_capacity: int = 20,
        n_try: int = 1,
        max_retries: int = 3,
        min_extent: float = 1e-12,
        random_state: SeedLike = None,
        n_jobs: int = 1,
    ):
        self.n_trees = n_trees
        self.leaf_capacity = leaf_capacity
        self.n_try = n_try
        self.max_retries = max_retries
        self.min_extent = min_extent
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _tree_params(self) -> TreeParams:
        return TreeParams(
            leaf_capacity=self.leaf_capacity,
            n_try=self.n_try,
            max_retries=self.max_retries,
            min_extent=self.min_extent,
        )

    def _effective_jobs(self, n_jobs: int | None = None) -> int:
        jobs = self.n_jobs if n_jobs is None else n_jobs
        if not isinstance(jobs, (int, np.integer)) or jobs == 0:
            raise ValueError(f"n_jobs must be a nonzero integer, got {jobs!r}")
        return int(jobs)

    def fit(self, X, y=None) -> "RandomProjectionForest":
        """Grow the forest over ``X`` (array-like or Dataset); rows are ids."""
        if not isinstance(self.n_trees, (int, np.integer)) or self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees!r}")
        params = self._tree_params()
        jobs = self._effective_jobs()
        data = as_dataset(X)
        base = seed_sequence(self.random_state)
        if jobs == 1 or self.n_trees == 1:
            trees = [
                _build_one(data, params, base.entropy, tuple(base.spawn_key), i)
                for i in range(self.n_trees)
            ]
        else:
            trees = Parallel(n_jobs=jobs)(
                delayed(_build_one)(data, params, base.entropy, tuple(base.spawn_key), i)
                for i in range(self.n_trees)
            )
        self.dataset_ = data
        self.trees_ = trees
        self.entropy_ = base.entropy
        self.n_features_in_ = data.dim
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "trees_"):
            raise NotFittedError("this forest is not fitted; call fit(X) first")

    def candidates(self, x, exclude_index: int | None = None) -> np.ndarray:
        """Sorted union of the leaf buckets the query routes to, one per tree."""
        self._check_fitted()
        vec = check_vector(x, self.n_features_in_)
        cand = np.unique(np.concatenate([tree.route(vec) for tree in self.trees_]))
        if exclude_index is not None:
            cand = cand[cand != self.dataset_.check_index(exclude_index)]
        return cand

    def query(self, x, k: int = 5, exclude_index: int | None = None) -> QueryResult:
        """Approximate top-K for one query point.

        ``exclude_index`` drops that dataset row from the candidates; raw
        coordinate queries exclude nothing, even if they equal a data point.
        """
        self._check_fitted()
        vec = check_vector(x, self.n_features_in_)
        cand = self.candidates(vec, exclude_index)
        ids, dist = top_k_by_distance(cand, point_distances(self.dataset_.points[cand], vec), k)
        return QueryResult(
            indices=ids,
            distances=dist,
            candidate_count=int(cand.shape[0]),
            shortfall=bool(cand.shape[0] < k),
            query_index=exclude_index,
        )

    def query_index(self, i: int, k: int = 5) -> QueryResult:
        """Approximate top-K for dataset point ``i``, excluding itself."""
        self._check_fitted()
        i = self.dataset_.check_index(i)
        return self.query(self.dataset_.points[i], k, exclude_index=i)

    def _batch(self, Q: np.ndarray, k: int, exclude: np.ndarray | None, jobs: int) -> BatchResult:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        m = Q.shape[0]
        if jobs == 1 or m < 2:
            blocks = [_run_query_block(self.trees_, self.dataset_.points, Q, k, exclude)]
        else:
            n_blocks = min(abs(jobs) * 4, m) if jobs != 1 else 1
            bounds = np.linspace(0, m, n_blocks + 1).astype(int)
            spans = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
            blocks = Parallel(n_jobs=jobs)(
                delayed(_run_query_block)(
                    self.trees_,
                    self.dataset_.points,
                    Q[lo:hi],
                    k,
                    None if exclude is None else exclude[lo:hi],
                )
                for lo, hi in spans
            )
        return BatchResult(
            k=k,
            indices=np.concatenate([b[0] for b in blocks]),
            distances=np.concatenate([b[1] for b in blocks]),
            candidate_counts=np.concatenate([b[2] for b in blocks]),
            shortfalls=np.concatenate([b[3] for b in blocks]),
        )

    def batch_query(self, X, k: int = 5, n_jobs: int | None = None) -> BatchResult:
        """Approximate top-K for every row of ``X``; no self-exclusion."""
        self._check_fitted()
        Q = check_matrix(X, self.n_features_in_)
        return self._batch(Q, k, None, self._effective_jobs(n_jobs))

    def batch_query_dataset(
        self, k: int = 5, indices=None, n_jobs: int | None = None
    ) -> BatchResult:
        """Approximate top-K for dataset rows, each excluding itself by index."""
        self._check_fitted()
        if indices is None:
            idx = np.arange(self.dataset_.n, dtype=np.int64)
        else:
            idx = np.asarray(indices, dtype=np.int64).reshape(-1)
            for i in idx:
                self.dataset_.check_index(int(i))
        Q = self.dataset_.points[idx]
        return self._batch(Q, k, idx, self._effective_jobs(n_jobs))

    def kneighbors(self, X=None, n_neighbors: int = 5, return_distance: bool = True):
        """Familiar estimator surface over the batch queries.

        ``X=None`` queries the fitted points themselves, excluding each row
        from its own answer.  Shortfall rows are padded with -1 indices and
        +inf distances.
        """
        self._check_fitted()
        if X is None:
            res = self.batch_query_dataset(k=n_neighbors)
        else:
            res = self.batch_query(X, k=n_neighbors)
        if return_distance:
            return res.distances, res.indices
        return res.indices

    def save(self, path) -> None:
        """Serialize params and trees as JSON next to a dataset fingerprint.

        Coordinates are not stored; :meth:`load` takes the same dataset and
        verifies it against the fingerprint.
        """
        self._check_fitted()
        payload = {
            "format": FOREST_FORMAT,
            "version": FOREST_VERSION,
            "params": {
                "n_trees": int(self.n_trees),
                "leaf_capacity": int(self.leaf_capacity),
                "n_try": int(self.n_try),
                "max_retries": int(self.max_retries),
                "min_extent": float(self.min_extent),
                "entropy": int(self.entropy_),
            },
            "dataset": {
                "n": self.dataset_.n,
                "dim": self.dataset_.dim,
                "sha256": self.dataset_.checksum(),
            },
            "trees": [tree.to_dict() for tree in self.trees_],
        }
        with open(Path(path), "w", encoding="utf-8") as handle:
            json.dump(payload, handle)

    @classmethod
    def load(cls, path, X) -> "RandomProjectionForest":
        """Rebuild a saved forest over ``X``, verifying the dataset fingerprint."""
        with open(Path(path), encoding="utf-8") as handle:
            payload = json.load(handle)
        if payload.get("format") != FOREST_FORMAT:
            raise ValueError(f"not a forest file: format={payload.get('format')!r}")
        if payload.get("version") != FOREST_VERSION:
            raise ValueError(f"unsupported forest version {payload.get('version')!r}")
        data = as_dataset(X)
        meta = payload["dataset"]
        if data.n != meta["n"] or data.dim != meta["dim"]:
            raise ValueError(
                f"dataset shape ({data.n}, {data.dim}) does not match saved "
                f"({meta['n']}, {meta['dim']})"
            )
        if data.checksum() != meta["sha256"]:
            raise ValueError("dataset contents do not match the saved fingerprint")
        params = payload["params"]
        est = cls(
            n_trees=int(params["n_trees"]),
            leaf_capacity=int(params["leaf_capacity"]),
            n_try=int(params["n_try"]),
            max_retries=int(params["max_retries"]),
            min_extent=float(params["min_extent"]),
            random_state=int(params["entropy"]),
        )
        est.dataset_ = data
        est.trees_ = [RpTree.from_dict(t) for t in payload["trees"]]
        est.entropy_ = int(params["entropy"])
        est.n_features_in_ = data.dim
        return est
