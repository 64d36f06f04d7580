"""Randomly grown projection trees.

A tree recursively splits the point set: project a node's points onto a
random direction, draw a cut uniformly between the smallest and largest
coefficient, and send strictly-smaller coefficients left, the rest right.
Nodes holding fewer points than ``leaf_capacity`` become leaves.  Routing a
query replays the stored directions and cuts with the same strict-less
convention, so every dataset point lands in the leaf it was assigned to
during the build.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .projection import project_matrix, select_direction


@dataclass(frozen=True)
class TreeParams:
    """Growth parameters shared by every split of one tree."""

    leaf_capacity: int = 20
    n_try: int = 1
    max_retries: int = 3
    min_extent: float = 1e-12

    def __post_init__(self):
        if self.leaf_capacity < 2:
            raise ValueError(f"leaf_capacity must be >= 2, got {self.leaf_capacity}")
        if self.n_try < 1:
            raise ValueError(f"n_try must be >= 1, got {self.n_try}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")
        if not self.min_extent >= 0:
            raise ValueError(f"min_extent must be >= 0, got {self.min_extent}")


@dataclass(frozen=True)
class SplitRecord:
    """The direction and cut value that define one internal node."""

    direction: np.ndarray
    cut: float


@dataclass(frozen=True)
class Split:
    left: np.ndarray
    right: np.ndarray
    record: SplitRecord


def split_node(
    indices: np.ndarray,
    points: np.ndarray,
    params: TreeParams,
    rng: np.random.Generator,
) -> Split | None:
    """Split one node, or return None if it must become a degenerate leaf.

    The node becomes degenerate when the chosen direction's coefficients are
    (near-)identical, or when ``1 + max_retries`` cut draws all land on the
    minimum coefficient and leave the left side empty.  The right side can
    never be empty: cuts are drawn from the half-open range [lo, hi).
    """
    if indices.shape[0] < 2:
        raise ValueError("split_node needs at least 2 points")
    direction, coeffs = select_direction(indices, points, params.n_try, rng)
    tol = params.min_extent * max(1.0, abs(coeffs.lo), abs(coeffs.hi))
    if coeffs.extent <= tol:
        return None
    for _ in range(1 + params.max_retries):
        cut = float(rng.uniform(coeffs.lo, coeffs.hi))
        go_left = coeffs.values < cut
        if go_left.any():
            return Split(
                left=indices[go_left],
                right=indices[~go_left],
                record=SplitRecord(direction=direction, cut=cut),
            )
    return None


@dataclass
class RpTree:
    """One grown projection tree in flat-array form.

    ``children`` holds, per internal node, the left/right child reference:
    a value >= 0 is another internal node's id, a value < 0 is a leaf id
    stored as its bitwise complement (leaf ``j`` appears as ``~j``).  The
    root follows the same encoding, covering single-leaf trees.
    """

    dim: int
    n_points: int
    root: int
    directions: np.ndarray
    cuts: np.ndarray
    children: np.ndarray
    leaf_buckets: list[np.ndarray] = field(repr=False)
    leaf_degenerate: np.ndarray = field(repr=False)

    @property
    def n_internal(self) -> int:
        return self.cuts.shape[0]

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_buckets)

    def leaf_for(self, x: np.ndarray) -> int:
        """Leaf id the query routes to."""
        node = self.root
        row = np.asarray(x, dtype=np.float64).reshape(1, self.dim)
        while node >= 0:
            coeff = project_matrix(row, self.directions[node])[0]
            node = self.children[node, 0] if coeff < self.cuts[node] else self.children[node, 1]
        return ~int(node)

    def route(self, x: np.ndarray) -> np.ndarray:
        """Point indices in the leaf the query routes to."""
        return self.leaf_buckets[self.leaf_for(x)]

    def leaf_assignments(self) -> np.ndarray:
        """Leaf id per dataset point, read off the buckets themselves."""
        assign = np.full(self.n_points, -1, dtype=np.int64)
        for leaf_id, bucket in enumerate(self.leaf_buckets):
            assign[bucket] = leaf_id
        return assign

    def route_many(self, X: np.ndarray) -> np.ndarray:
        """Leaf id per row of ``X``.

        Descends subsets of the batch together; each row's projection is the
        same per-row reduction :func:`leaf_for` uses, so the two agree bit
        for bit.
        """
        m = X.shape[0]
        out = np.empty(m, dtype=np.int64)
        stack = [(self.root, np.arange(m, dtype=np.int64))]
        while stack:
            node, rows = stack.pop()
            if rows.shape[0] == 0:
                continue
            if node < 0:
                out[rows] = ~int(node)
                continue
            coeffs = project_matrix(X[rows], self.directions[node])
            go_left = coeffs < self.cuts[node]
            stack.append((int(self.children[node, 1]), rows[~go_left]))
            stack.append((int(self.children[node, 0]), rows[go_left]))
        return out

    def to_dict(self) -> dict:
        return {
            "dim": int(self.dim),
            "n_points": int(self.n_points),
            "root": int(self.root),
            "directions": [[float(v) for v in row] for row in self.directions],
            "cuts": [float(v) for v in self.cuts],
            "children": [[int(l), int(r)] for l, r in self.children],
            "leaves": [
                {"indices": [int(i) for i in bucket], "degenerate": bool(flag)}
                for bucket, flag in zip(self.leaf_buckets, self.leaf_degenerate)
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RpTree":
        dim = int(payload["dim"])
        n_internal = len(payload["cuts"])
        return cls(
            dim=dim,
            n_points=int(payload["n_points"]),
            root=int(payload["root"]),
            directions=np.asarray(payload["directions"], dtype=np.float64).reshape(n_internal, dim),
            cuts=np.asarray(payload["cuts"], dtype=np.float64),
            children=np.asarray(payload["children"], dtype=np.int64).reshape(n_internal, 2),
            leaf_buckets=[
                np.asarray(leaf["indices"], dtype=np.int64) for leaf in payload["leaves"]
            ],
            leaf_degenerate=np.asarray(
                [leaf["degenerate"] for leaf in payload["leaves"]], dtype=bool
            ),
        )

    def equals(self, other: "RpTree") -> bool:
        return (
            self.dim == other.dim
            and self.n_points == other.n_points
            and self.root == other.root
            and np.array_equal(self.directions, other.directions)
            and np.array_equal(self.cuts, other.cuts)
            and np.array_equal(self.children, other.children)
            and len(self.leaf_buckets) == len(other.leaf_buckets)
            and all(np.array_equal(a, b) for a, b in zip(self.leaf_buckets, other.leaf_buckets))
            and np.array_equal(self.leaf_degenerate, other.leaf_degenerate)
        )


def build_tree(data: Dataset, params: TreeParams, rng: np.random.Generator) -> RpTree:
    """Grow one tree over the whole dataset.

    Nodes with fewer than ``leaf_capacity`` points become leaves; all larger
    nodes are split.  Nodes are processed in left-first depth-first order,
    which fixes the RNG consumption order and makes the build reproducible
    from the generator's seed alone.
    """
    points = data.points
    directions: list[np.ndarray] = []
    cuts: list[float] = []
    children: list[list[int]] = []
    leaf_buckets: list[np.ndarray] = []
    leaf_degenerate: list[bool] = []

    def add_leaf(idx: np.ndarray, degenerate: bool) -> int:
        leaf_buckets.append(np.sort(idx).astype(np.int64))
        leaf_degenerate.append(degenerate)
        return ~(len(leaf_buckets) - 1)

    root = 0
    stack: list[tuple[np.ndarray, tuple[int, int] | None]] = [
        (np.arange(data.n, dtype=np.int64), None)
    ]
    while stack:
        idx, slot = stack.pop()
        if idx.shape[0] < params.leaf_capacity:
            ref = add_leaf(idx, False)
        else:
            split = split_node(idx, points, params, rng)
            if split is None:
                ref = add_leaf(idx, True)
            else:
                node_id = len(cuts)
                directions.append(split.record.direction)
                cuts.append(split.record.cut)
                children.append([0, 0])
                stack.append((split.right, (node_id, 1)))
                stack.append((split.left, (node_id, 0)))
                ref = node_id
        if slot is None:
            root = ref
        else:
            children[slot[0]][slot[1]] = ref

    n_internal = len(cuts)
    return RpTree(
        dim=data.dim,
        n_points=data.n,
        root=root,
        directions=(
            np.vstack(directions) if n_internal else np.zeros((0, data.dim), dtype=np.float64)
        ),
        cuts=np.asarray(cuts, dtype=np.float64),
        children=(
            np.asarray(children, dtype=np.int64).reshape(n_internal, 2)
            if n_internal
            else np.zeros((0, 2), dtype=np.int64)
        ),
        leaf_buckets=leaf_buckets,
        leaf_degenerate=np.asarray(leaf_degenerate, dtype=bool),
    )
