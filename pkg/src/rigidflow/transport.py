"""Feature-space affinities and slack-augmented Sinkhorn soft assignment.

The assignment pipeline is: affinity -> add_slack -> sinkhorn ->
soft_correspondences. The slack row/column absorbs the mass of points that
have no real counterpart (occlusion, sampling holes) so outliers are
down-weighted rather than force-matched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .geom import PointCloud

__all__ = [
    "AffinityMatrix",
    "AssignmentMatrix",
    "affinity",
    "add_slack",
    "sinkhorn",
    "soft_correspondences",
]

# Entries are floored here before any division so that underflowed affinities
# (huge feature distances) cannot produce zero row/column sums.
_FLOOR = 1e-30


@dataclass(frozen=True)
class AffinityMatrix:
    """Pairwise similarity exp(-||f_i - g_j|| / tau), entries in (0, 1]."""

    values: np.ndarray
    tau: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("affinity values must be a 2-D matrix")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class AssignmentMatrix:
    """(N+1) x (M+1) nonnegative matrix whose last row/column are slack.

    After `sinkhorn`, every real row sums to 1 over all M+1 columns and every
    real column sums to 1 over all N+1 rows (to the tolerance the affinity
    conditioning allows); the slack row and column themselves are never
    normalized.
    """

    values: np.ndarray
    n_rows: int
    n_cols: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.n_rows + 1, self.n_cols + 1):
            raise ValueError(
                f"values must have shape ({self.n_rows + 1}, {self.n_cols + 1}), got {v.shape}"
            )
        if np.any(v < 0):
            raise ValueError("assignment entries must be nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def real(self) -> np.ndarray:
        """The (N, M) block excluding slack."""
        return self.values[: self.n_rows, : self.n_cols]


def affinity(features_x: np.ndarray, features_y: np.ndarray, tau: float) -> AffinityMatrix:
    """Exponentiated negative feature distance, entry (i, j) = exp(-||f_i - g_j|| / tau).

    `features_x` is (N, D) and `features_y` is (M, D). Larger tau softens the
    contrast between the best and the remaining candidates.

    Raises:
        ValueError: if tau <= 0 ("nonpositive temperature") or feature
            dimensions disagree.
    """
    if tau <= 0:
        raise ValueError("nonpositive temperature")
    fx = np.asarray(features_x, dtype=np.float64)
    fy = np.asarray(features_y, dtype=np.float64)
    if fx.ndim != 2 or fy.ndim != 2 or fx.shape[1] != fy.shape[1]:
        raise ValueError("feature matrices must be (N, D) and (M, D) with equal D")
    values = np.maximum(np.exp(-cdist(fx, fy) / tau), _FLOOR)
    return AffinityMatrix(values=values, tau=float(tau))


def add_slack(m: AffinityMatrix, slack_value: float) -> AssignmentMatrix:
    """Append one slack row and column (corner included) filled with `slack_value`."""
    if slack_value <= 0:
        raise ValueError("slack_value must be positive")
    n, mm = m.values.shape
    out = np.full((n + 1, mm + 1), float(slack_value))
    out[:n, :mm] = m.values
    return AssignmentMatrix(values=out, n_rows=n, n_cols=mm)


def sinkhorn(a: AssignmentMatrix, iterations: int = 3) -> AssignmentMatrix:
    """Alternating row/column normalization with slack left unnormalized.

    Each iteration divides every real row by its sum over all M+1 columns,
    then every real column by its sum over all N+1 rows. The slack row and
    column participate in those sums but are never themselves scaled to 1, so
    they can absorb outlier mass.

    Raises:
        ValueError: if iterations < 1, or a real row/column sums to zero
            ("degenerate affinity").
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    n, m = a.n_rows, a.n_cols
    v = a.values.copy()
    if np.any(v[:n].sum(axis=1) == 0) or np.any(v[:, :m].sum(axis=0) == 0):
        raise ValueError("degenerate affinity")
    v = np.maximum(v, _FLOOR)
    for _ in range(iterations):
        v[:n] /= v[:n].sum(axis=1, keepdims=True)
        v[:, :m] /= v[:, :m].sum(axis=0, keepdims=True)
    return AssignmentMatrix(values=v, n_rows=n, n_cols=m)


def soft_correspondences(
    a: AssignmentMatrix,
    target: PointCloud,
    source: PointCloud | None = None,
) -> tuple[PointCloud, np.ndarray]:
    """Per-row barycentric match point in `target` plus its confidence weight.

    Row i yields the point sum_j a_ij y_j / sum_j a_ij over real columns only,
    and the weight sum_j a_ij (the mass not lost to slack, in [0, 1] after
    `sinkhorn`). A row whose real entries are all zero gets weight 0 and, when
    `source` is given, its own source point as a stand-in match, which keeps it
    inert under weighted fitting.
    """
    if len(target) != a.n_cols:
        raise ValueError("target size does not match assignment columns")
    if source is not None and len(source) != a.n_rows:
        raise ValueError("source size does not match assignment rows")
    real = a.real
    weights = real.sum(axis=1)
    dead = weights == 0
    denom = np.where(dead, 1.0, weights)
    points = (real @ target.points) / denom[:, None]
    if np.any(dead):
        points[dead] = source.points[dead] if source is not None else 0.0
    return PointCloud(points=points), weights
