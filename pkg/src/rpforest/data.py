"""Immutable point set, CSV ingestion, and the distance primitive."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .rng import SeedLike, stream


class DataFormatError(ValueError):
    """Malformed input data; carries 1-based row/column positions when known."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class Dataset:
    """An immutable n x D matrix of finite float64 coordinates.

    Row index is the point's identity for the dataset's lifetime.  The
    underlying array is marked read-only, so a built index can share it
    across any number of concurrent readers.
    """

    points: np.ndarray
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError(f"points must be a 2-D array, got ndim={pts.ndim}")
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be at least 1x1, got shape {pts.shape}")
        if not np.isfinite(pts).all():
            bad = np.argwhere(~np.isfinite(pts))[0]
            raise ValueError(f"non-finite coordinate at row {bad[0]}, column {bad[1]}")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.ids is not None:
            ids = tuple(str(v) for v in self.ids)
            if len(ids) != pts.shape[0]:
                raise ValueError(f"ids length {len(ids)} != row count {pts.shape[0]}")
            object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n

    def check_index(self, i: int) -> int:
        if not 0 <= i < self.n:
            raise IndexError(f"point index {i} out of range [0, {self.n})")
        return int(i)

    def distance(self, i: int, j: int) -> float:
        """Euclidean distance between points ``i`` and ``j``."""
        self.check_index(i)
        self.check_index(j)
        diff = self.points[i] - self.points[j]
        return float(np.sqrt((diff * diff).sum()))

    def checksum(self) -> str:
        """SHA-256 fingerprint over shape and raw coordinate bytes."""
        digest = hashlib.sha256()
        digest.update(f"{self.n}x{self.dim}:".encode("ascii"))
        digest.update(self.points.tobytes())
        return digest.hexdigest()


def as_dataset(X) -> Dataset:
    """Accept a Dataset or anything array-like and validate it."""
    if isinstance(X, Dataset):
        return X
    return Dataset(np.asarray(X, dtype=np.float64))


def check_vector(x, dim: int) -> np.ndarray:
    """Validate a single query point against the expected dimension."""
    vec = np.asarray(x, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != dim:
        raise ValueError(f"expected a vector of dimension {dim}, got shape {vec.shape}")
    if not np.isfinite(vec).all():
        raise ValueError("query contains non-finite coordinates")
    return vec


def check_matrix(X, dim: int) -> np.ndarray:
    """Validate a batch of query points against the expected dimension."""
    mat = np.asarray(X, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[1] != dim:
        raise ValueError(f"expected an (m, {dim}) matrix, got shape {mat.shape}")
    if not np.isfinite(mat).all():
        raise ValueError("queries contain non-finite coordinates")
    return np.ascontiguousarray(mat)


def load_points(path, format: str = "csv", has_header: bool = False) -> Dataset:
    """Load a dataset from a CSV file of decimal-point reals.

    Every data row must have the same number of numeric columns.  Errors
    report 1-based row (counting the header, if any) and column positions.
    """
    if format != "csv":
        raise ValueError(f"unsupported format {format!r}; only 'csv' is supported")
    rows: list[list[float]] = []
    ncols: int | None = None
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc.strerror or exc}") from exc
    with handle:
        reader = csv.reader(handle)
        for lineno, cells in enumerate(reader, start=1):
            if lineno == 1 and has_header:
                continue
            if not cells or (len(cells) == 1 and not cells[0].strip()):
                continue  # skip blank lines, including a trailing newline
            if ncols is None:
                ncols = len(cells)
            elif len(cells) != ncols:
                raise DataFormatError(
                    f"ragged row: expected {ncols} columns, got {len(cells)}", row=lineno
                )
            parsed = []
            for col, cell in enumerate(cells, start=1):
                try:
                    value = float(cell.strip())
                except ValueError:
                    raise DataFormatError(
                        f"non-numeric cell {cell.strip()!r}", row=lineno, column=col
                    ) from None
                if not math.isfinite(value):
                    raise DataFormatError(
                        f"non-finite cell {cell.strip()!r}", row=lineno, column=col
                    )
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return Dataset(np.array(rows, dtype=np.float64))


def save_points(data: Dataset, path, header: Sequence[str] | None = None) -> None:
    """Write a dataset as CSV with full-precision (round-trippable) values."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        if header is not None:
            if len(header) != data.dim:
                raise ValueError(f"header length {len(header)} != dimension {data.dim}")
            writer.writerow(header)
        for row in data.points:
            writer.writerow([repr(float(v)) for v in row])


def gen_gaussian(n: int, dim: int, scales: Sequence[float], seed: SeedLike = None) -> Dataset:
    """Centered Gaussian sample with a per-axis standard deviation."""
    if n < 1 or dim < 1:
        raise ValueError(f"need n >= 1 and dim >= 1, got n={n}, dim={dim}")
    scale = np.asarray(scales, dtype=np.float64)
    if scale.shape != (dim,):
        raise ValueError(f"scales must have length {dim}, got shape {scale.shape}")
    if not np.isfinite(scale).all() or (scale < 0).any():
        raise ValueError("scales must be finite and nonnegative")
    rng = stream(seed)
    return Dataset(rng.standard_normal((n, dim)) * scale)


def standardize(data: Dataset) -> Dataset:
    """Per-column standardization to zero mean, unit variance.

    Constant columns are only centered (a zero std divides by 1).
    """
    mean = data.points.mean(axis=0)
    std = data.points.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return Dataset((data.points - mean) / std, ids=data.ids)
