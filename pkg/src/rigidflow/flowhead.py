"""Initial flow from feature-space soft correspondences.

Each source point is matched to a softmax-weighted combination of target
points in feature space; its flow is the displacement to that combination.
No learned refinement runs on top of this: the optional `smooth_flow` pass is
a plain k-NN mean and is off by default.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .geom import FlowField, PointCloud

__all__ = ["FlowField", "soft_flow", "smooth_flow"]


def soft_flow(x: PointCloud, y: PointCloud, tau_flow: float) -> FlowField:
    """Soft-correspondence flow: row-softmax of -||f_i - g_j|| / tau over targets.

    flow_i = sum_j softmax_j(-||f_i - g_j|| / tau) y_j - x_i. Small tau
    approaches hard nearest-feature matching; large tau blends targets.

    Raises:
        ValueError: if tau_flow <= 0 or either cloud lacks features.
    """
    if tau_flow <= 0:
        raise ValueError("nonpositive temperature")
    if x.features is None or y.features is None:
        raise ValueError("both clouds need feature attributes")
    if x.features.shape[1] != y.features.shape[1]:
        raise ValueError("feature dimensions differ")
    logits = -cdist(x.features, y.features) / tau_flow
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    return FlowField(weights @ y.points - x.points)


def smooth_flow(
    points: PointCloud,
    flow: FlowField,
    k: int = 8,
    radius: float | None = None,
) -> FlowField:
    """Average each point's flow with its k nearest neighbors' flows.

    A simple non-learned smoother. When `radius` is given, neighbors beyond
    it are excluded (the point itself always participates).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(flow) != len(points):
        raise ValueError("flow length does not match point count")
    k_eff = min(k, len(points))
    dist, idx = cKDTree(points.points).query(points.points, k=k_eff)
    dist = dist.reshape(len(points), k_eff)
    idx = idx.reshape(len(points), k_eff)
    keep = np.ones_like(dist, dtype=bool) if radius is None else dist <= radius
    keep[:, 0] = True
    counts = keep.sum(axis=1)
    summed = np.where(keep[:, :, None], flow.vectors[idx], 0.0).sum(axis=1)
    return FlowField(summed / counts[:, None])
