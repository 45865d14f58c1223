"""Test-time ICP refinement of the ego-motion and per-object transforms."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.spatial import cKDTree

from .geom import PointCloud, RigidTransform, compose
from .rigidfit import WeightedCorrespondenceSet, weighted_kabsch

if TYPE_CHECKING:
    from .pipeline import SceneDecomposition

__all__ = ["IcpConfig", "IcpResult", "icp_refine", "refine_scene"]


@dataclass(frozen=True)
class IcpConfig:
    """Gating distance, iteration cap, and relative-RMSE stopping threshold."""

    max_correspondence_distance: float
    max_iterations: int = 300
    convergence_epsilon: float = 1e-6

    def __post_init__(self):
        if self.max_correspondence_distance <= 0:
            raise ValueError("max_correspondence_distance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.convergence_epsilon <= 0:
            raise ValueError("convergence_epsilon must be positive")


@dataclass(frozen=True)
class IcpResult:
    """Outcome of one point-to-point ICP run.

    `rmse` is the matched-inlier RMSE of the returned transform (inf when no
    pair ever fell inside the gate, in which case `no_overlap` is set and the
    initial transform is returned unchanged). `rmse_history` records the
    evaluated RMSE per iteration; it is non-increasing by construction.
    """

    transform: RigidTransform
    rmse: float
    iterations: int
    no_overlap: bool
    rmse_history: tuple


def icp_refine(
    source: PointCloud,
    target: PointCloud,
    initial: RigidTransform,
    cfg: IcpConfig,
) -> IcpResult:
    """Point-to-point ICP from `initial`, gated to the configured distance.

    Per iteration: move the source by the current estimate, match every moved
    point to its nearest target within the gate, evaluate the matched RMSE,
    then solve a uniform-weight rigid fit on the matched pairs and compose it
    onto the estimate. Stops at the iteration cap, when the relative RMSE
    change drops below `convergence_epsilon`, or when the RMSE would increase
    (the gate admits new, farther pairs as alignment improves, so an increase
    is possible; the best transform seen is what is returned). The returned
    transform's matched RMSE is therefore never worse than the initial one.
    """
    if len(source) == 0 or len(target) == 0:
        raise ValueError("source and target must be nonempty")
    tree = cKDTree(target.points)
    gate = cfg.max_correspondence_distance
    src = source.points

    current = initial
    best_transform, best_rmse = initial, np.inf
    history: list[float] = []
    prev = None
    for _ in range(cfg.max_iterations):
        moved = current.apply(src)
        dist, idx = tree.query(moved, k=1, distance_upper_bound=gate)
        matched = np.isfinite(dist)
        n_matched = int(matched.sum())
        if n_matched == 0:
            if not history:
                return IcpResult(initial, np.inf, 0, True, ())
            break
        rmse = float(np.sqrt(np.mean(dist[matched] ** 2)))
        if prev is not None and rmse > prev:
            break  # keep the best already recorded
        history.append(rmse)
        if rmse < best_rmse:
            best_transform, best_rmse = current, rmse
        if rmse == 0.0:
            break
        if prev is not None and abs(prev - rmse) <= cfg.convergence_epsilon * prev:
            break
        prev = rmse
        if n_matched < 3:
            break
        pairs = WeightedCorrespondenceSet(
            source=PointCloud(moved[matched]),
            target=PointCloud(target.points[idx[matched]]),
            weights=np.ones(n_matched),
        )
        try:
            delta = weighted_kabsch(pairs)
        except ValueError:
            break  # degenerate match geometry: keep the best so far
        current = compose(delta, current)
    return IcpResult(best_transform, best_rmse, len(history), False, tuple(history))


def refine_scene(
    decomp: "SceneDecomposition",
    x: PointCloud,
    y: PointCloud,
    cfg_bg: IcpConfig | None = None,
    cfg_fg: IcpConfig | None = None,
) -> "SceneDecomposition":
    """Refine the ego-motion and every fitted cluster transform with ICP.

    The ego-motion is refined by registering the source background onto the
    target background (default gate 0.15 m); each cluster is refined against
    all foreground points of the target (default gate 0.25 m), since
    instance-level correspondence is unknown. Entities that cannot be
    refined (no gated overlap, too few points, degenerate geometry) keep
    their input transforms. Masks and cluster labels are never modified.
    """
    if cfg_bg is None:
        cfg_bg = IcpConfig(max_correspondence_distance=0.15)
    if cfg_fg is None:
        cfg_fg = IcpConfig(max_correspondence_distance=0.25)

    ego = decomp.ego
    ego_refined = False
    bg_x = x.select(decomp.bg_mask_x)
    bg_y = y.select(decomp.bg_mask_y)
    if len(bg_x) >= 3 and len(bg_y) > 0:
        result = icp_refine(bg_x, bg_y, decomp.ego, cfg_bg)
        if not result.no_overlap:
            ego = result.transform
            ego_refined = True

    fg_x = x.select(~decomp.bg_mask_x)
    fg_y = y.select(~decomp.bg_mask_y)
    transforms = list(decomp.cluster_transforms)
    refined = [False] * len(transforms)
    if len(fg_y) > 0:
        for k, fitted in enumerate(decomp.cluster_fitted):
            if not fitted:
                continue
            pts = fg_x.select(decomp.clusters.labels == k)
            if len(pts) < 3:
                continue
            result = icp_refine(pts, fg_y, transforms[k], cfg_fg)
            if not result.no_overlap:
                transforms[k] = result.transform
                refined[k] = True

    out = dataclasses.replace(
        decomp,
        ego=ego,
        ego_refined=ego_refined,
        cluster_transforms=transforms,
        cluster_refined=refined,
    )
    if decomp.voxel_flow is not None:
        from .pipeline import assemble_rigid_flow  # deferred: pipeline imports this module

        out = dataclasses.replace(out, voxel_flow=assemble_rigid_flow(out))
    return out
