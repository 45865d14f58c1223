"""Density-based decomposition of foreground points into candidate rigid bodies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geom import PointCloud

__all__ = ["ClusterLabeling", "dbscan"]


@dataclass(frozen=True)
class ClusterLabeling:
    """Per-point integer labels: -1 for noise, 0..K-1 for retained clusters."""

    labels: np.ndarray
    cluster_sizes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "cluster_sizes", np.asarray(self.cluster_sizes, dtype=np.int64))

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_sizes)

    def __len__(self) -> int:
        return len(self.labels)


def dbscan(
    points: PointCloud,
    eps: float,
    min_samples: int,
    min_cluster_size: int = 1,
) -> ClusterLabeling:
    """Deterministic DBSCAN over 3D coordinates with a size filter.

    A point is core when its eps-ball (itself included) holds at least
    `min_samples` points. Clusters are the eps-connected components of core
    points; non-core points within eps of a core join the cluster of their
    lowest-indexed core neighbor, which removes the classical order
    dependence of border assignment. Clusters smaller than
    `min_cluster_size` are relabeled to noise (-1), and surviving clusters
    are renumbered 0..K-1 in order of their first core point.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_samples < 1:
        raise ValueError("min_samples must be at least 1")
    n = len(points)
    if n == 0:
        return ClusterLabeling(labels=np.empty(0, dtype=np.int64), cluster_sizes=np.empty(0, dtype=np.int64))

    neighbors = cKDTree(points.points).query_ball_point(points.points, r=eps)
    core = np.array([len(nb) >= min_samples for nb in neighbors])
    labels = np.full(n, -1, dtype=np.int64)

    next_id = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != -1:
            continue
        labels[seed] = next_id
        stack = [seed]
        while stack:
            j = stack.pop()
            for q in neighbors[j]:
                if core[q] and labels[q] == -1:
                    labels[q] = next_id
                    stack.append(q)
        next_id += 1

    for i in range(n):
        if not core[i]:
            claiming = [q for q in neighbors[i] if core[q]]
            if claiming:
                labels[i] = labels[min(claiming)]

    if next_id == 0:
        return ClusterLabeling(labels=labels, cluster_sizes=np.empty(0, dtype=np.int64))

    sizes = np.bincount(labels[labels >= 0], minlength=next_id)
    keep = sizes >= min_cluster_size
    remap = np.full(next_id, -1, dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))
    relabeled = np.where(labels >= 0, remap[labels], -1)
    return ClusterLabeling(labels=relabeled, cluster_sizes=sizes[keep])
