"""Random directions, 1-D projections, and spread-based direction selection.

Every projection in the library goes through :func:`project_matrix`, which
computes ``(X * direction).sum(axis=1)`` row by row.  That keeps the reduction
order identical whether we project one point or a thousand, so a point routed
through a tree lands in exactly the leaf its coefficients were computed with
at build time.  Don't swap this for a BLAS matrix-vector product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ProjectionCoeffs:
    """Projection coefficients of a node's points plus their range."""

    values: np.ndarray
    lo: float
    hi: float

    @property
    def extent(self) -> float:
        return self.hi - self.lo


def random_direction(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random unit vector (normalized standard Gaussian)."""
    while True:
        vec = rng.standard_normal(dim)
        norm = float(np.sqrt((vec * vec).sum()))
        if norm > 0.0:  # astronomically rare redraw
            return vec / norm


def project_matrix(X: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Project rows of ``X`` onto ``direction``; the library's only dot path."""
    return (X * direction).sum(axis=1)


def project(indices: np.ndarray, points: np.ndarray, direction: np.ndarray) -> ProjectionCoeffs:
    """Project the selected rows and record the coefficient range."""
    values = project_matrix(points[indices], direction)
    return ProjectionCoeffs(values=values, lo=float(values.min()), hi=float(values.max()))


def spread(coeffs: ProjectionCoeffs) -> float:
    """Sample standard deviation (ddof=1) of the coefficients; 0 for n=1."""
    n = coeffs.values.shape[0]
    if n < 2:
        return 0.0
    return float(np.std(coeffs.values, ddof=1))


def select_direction(
    indices: np.ndarray,
    points: np.ndarray,
    n_try: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, ProjectionCoeffs]:
    """Draw ``n_try`` candidate directions and keep the max-spread one.

    Ties keep the first candidate (strict > comparison).  ``n_try=1`` is the
    plain single-draw variant.
    """
    if n_try < 1:
        raise ValueError(f"n_try must be >= 1, got {n_try}")
    dim = points.shape[1]
    best_dir = None
    best_coeffs = None
    best_spread = -1.0
    for _ in range(n_try):
        cand = random_direction(dim, rng)
        coeffs = project(indices, points, cand)
        s = spread(coeffs)
        if s > best_spread:
            best_dir, best_coeffs, best_spread = cand, coeffs, s
    return best_dir, best_coeffs
