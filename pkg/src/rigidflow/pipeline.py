"""End-to-end inference: masks -> ego-motion -> clusters -> per-cluster fits
-> rigid flow assembly -> optional ICP refinement -> voxel-to-point transfer.

The pipeline consumes two preprocessed clouds that already carry per-point
features and foreground probabilities (from any provider: the synthetic
oracle, raw coordinates, or externally computed files), voxelizes them, and
estimates everything on the voxel clouds. The assembled rigid flow lives on
the source voxels and is transferred back to the original points by
inverse-distance interpolation at the very end.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusterLabeling, dbscan
from .flowhead import smooth_flow, soft_flow
from .geom import (
    FlowField,
    PointCloud,
    RigidTransform,
    transfer_flow_to_points,
    voxelize,
)
from .refine import IcpConfig, refine_scene
from .rigidfit import estimate_ego_motion, fit_cluster_transform
from .transport import AssignmentMatrix

__all__ = [
    "PipelineConfig",
    "SceneDecomposition",
    "preprocess",
    "infer_rigid_flow",
    "assemble_rigid_flow",
    "with_xyz_features",
    "with_height_mask",
]


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(text: str, kind: str):
    text = text.strip()
    if kind == "optional_float":
        return None if text.lower() == "none" else float(text)
    if kind == "float":
        return float(text)
    if kind == "int":
        return int(text)
    if kind == "bool":
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    raise ValueError(f"unknown config field kind {kind!r}")


# field name -> parse kind, for the flat key/value config format
_CONFIG_KINDS = {
    "voxel_size": "float",
    "max_points": "int",
    "range_cutoff": "float",
    "remove_ground": "bool",
    "ground_removal_y": "float",
    "fg_threshold": "float",
    "dbscan_eps": "float",
    "dbscan_min_samples": "int",
    "dbscan_min_cluster_size": "int",
    "tau_ego": "float",
    "tau_flow": "float",
    "slack_d0": "optional_float",
    "sinkhorn_iterations": "int",
    "ego_sample_size": "int",
    "interp_k": "int",
    "flow_smooth_k": "int",
    "flow_smooth_radius": "optional_float",
    "normalized_chamfer": "bool",
    "lambda_inlier": "float",
    "lambda_cd": "float",
    "icp_bg.max_correspondence_distance": "float",
    "icp_bg.max_iterations": "int",
    "icp_bg.convergence_epsilon": "float",
    "icp_fg.max_correspondence_distance": "float",
    "icp_fg.max_iterations": "int",
    "icp_fg.convergence_epsilon": "float",
    "seed": "int",
    "threads": "int",
}


@dataclass(frozen=True)
class PipelineConfig:
    """All tunables of the inference pipeline, with working defaults.

    Geometry: clouds are cut at `range_cutoff` meters from the sensor,
    optionally ground-filtered at `ground_removal_y` (up axis is y), sampled
    down to `max_points`, and voxelized at `voxel_size` with at most
    `max_points` voxels. Foreground is `fg_prob > fg_threshold`. `slack_d0`
    (None means 2 * tau_ego) sets the feature distance at which the slack
    outlier bin competes with real matches. `threads` caps worker threads
    for internally parallelizable stages (0 = automatic); the reference
    implementation runs single-threaded either way and is deterministic for
    a fixed `seed`.
    """

    voxel_size: float = 0.1
    max_points: int = 8192
    range_cutoff: float = 35.0
    remove_ground: bool = False
    ground_removal_y: float = -1.4
    fg_threshold: float = 0.5
    dbscan_eps: float = 0.75
    dbscan_min_samples: int = 5
    dbscan_min_cluster_size: int = 10
    tau_ego: float = 0.005
    tau_flow: float = 0.1
    slack_d0: float | None = None
    sinkhorn_iterations: int = 3
    ego_sample_size: int = 1024
    interp_k: int = 3
    flow_smooth_k: int = 0
    flow_smooth_radius: float | None = None
    normalized_chamfer: bool = False
    lambda_inlier: float = 0.005
    lambda_cd: float = 0.5
    icp_bg: IcpConfig = IcpConfig(max_correspondence_distance=0.15, max_iterations=300)
    icp_fg: IcpConfig = IcpConfig(max_correspondence_distance=0.25, max_iterations=300)
    seed: int = 0
    threads: int = 0

    def validate(self) -> None:
        positive = {
            "voxel_size": self.voxel_size,
            "range_cutoff": self.range_cutoff,
            "dbscan_eps": self.dbscan_eps,
            "tau_ego": self.tau_ego,
            "tau_flow": self.tau_flow,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.fg_threshold < 1.0:
            raise ValueError("fg_threshold must be in (0, 1)")
        if self.max_points < 3:
            raise ValueError("max_points must be at least 3")
        if self.dbscan_min_samples < 1 or self.dbscan_min_cluster_size < 1:
            raise ValueError("dbscan counts must be at least 1")
        if self.sinkhorn_iterations < 1:
            raise ValueError("sinkhorn_iterations must be at least 1")
        if self.ego_sample_size < 3:
            raise ValueError("ego_sample_size must be at least 3")
        if self.interp_k < 1:
            raise ValueError("interp_k must be at least 1")
        if self.slack_d0 is not None and self.slack_d0 <= 0:
            raise ValueError("slack_d0 must be positive when set")
        if self.flow_smooth_k < 0:
            raise ValueError("flow_smooth_k must be nonnegative")
        if self.lambda_inlier < 0 or self.lambda_cd < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.threads < 0:
            raise ValueError("threads must be nonnegative")

    @property
    def resolved_slack_d0(self) -> float:
        return self.slack_d0 if self.slack_d0 is not None else 2.0 * self.tau_ego

    def to_flat_dict(self) -> dict:
        """Flatten to string key/value pairs (nested ICP configs get dotted keys)."""
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, IcpConfig):
                for g in dataclasses.fields(value):
                    out[f"{f.name}.{g.name}"] = _format_value(getattr(value, g.name))
            else:
                out[f.name] = _format_value(value)
        return out

    @classmethod
    def from_flat_dict(cls, flat: dict) -> "PipelineConfig":
        """Inverse of `to_flat_dict`; unknown keys raise."""
        kwargs: dict = {}
        icp: dict = {"icp_bg": {}, "icp_fg": {}}
        for key, raw in flat.items():
            if key not in _CONFIG_KINDS:
                raise ValueError(f"unknown config key {key!r}")
            value = _parse_value(str(raw), _CONFIG_KINDS[key])
            if "." in key:
                head, tail = key.split(".", 1)
                icp[head][tail] = value
            else:
                kwargs[key] = value
        for name in ("icp_bg", "icp_fg"):
            if icp[name]:
                base = getattr(cls(), name)
                kwargs[name] = dataclasses.replace(base, **icp[name])
        return cls(**kwargs)


@dataclass(frozen=True)
class SceneDecomposition:
    """Everything the pipeline inferred about one frame pair, at voxel level.

    Masks and probabilities index the voxel clouds `voxel_x` / `voxel_y`.
    `clusters` labels the foreground voxels of the source in extraction
    order; `cluster_transforms[k]` explains cluster k (identity placeholder
    when `cluster_fitted[k]` is False, in which case the cluster falls back
    to the unconstrained flow during assembly). `voxel_flow` is the
    assembled per-voxel rigid flow.
    """

    fg_prob_x: np.ndarray
    fg_prob_y: np.ndarray
    bg_mask_x: np.ndarray
    bg_mask_y: np.ndarray
    clusters: ClusterLabeling
    ego: RigidTransform
    cluster_transforms: list
    cluster_fitted: list
    ego_refined: bool = False
    cluster_refined: list = field(default_factory=list)
    voxel_x: PointCloud | None = None
    voxel_y: PointCloud | None = None
    unconstrained_flow: FlowField | None = None
    voxel_flow: FlowField | None = None
    assignment: AssignmentMatrix | None = None

    def __post_init__(self):
        if len(self.cluster_transforms) != self.clusters.n_clusters:
            raise ValueError("one transform per retained cluster required")
        if len(self.cluster_fitted) != len(self.cluster_transforms):
            raise ValueError("one fitted flag per cluster transform required")


def preprocess(
    pc: PointCloud, cfg: PipelineConfig, rng: np.random.Generator | None = None
) -> PointCloud:
    """Range-filter, optionally ground-filter, and subsample a cloud.

    Points farther than `range_cutoff` from the origin are dropped; with
    `remove_ground`, only points above `ground_removal_y` survive. When more
    than `max_points` remain, a uniform random subset of exactly
    `max_points` is kept (seeded via `rng`). Attributes follow their points.

    Raises:
        ValueError: "insufficient points" when fewer than 3 points survive.
    """
    cfg.validate()
    keep = np.linalg.norm(pc.points, axis=1) <= cfg.range_cutoff
    if cfg.remove_ground:
        keep &= pc.points[:, 1] > cfg.ground_removal_y
    out = pc.select(np.flatnonzero(keep))
    if len(out) < 3:
        raise ValueError("insufficient points")
    if len(out) > cfg.max_points:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        out = out.select(rng.choice(len(out), size=cfg.max_points, replace=False))
    return out


def with_xyz_features(pc: PointCloud) -> PointCloud:
    """Use raw coordinates as features (the degenerate nearest-point regime)."""
    return dataclasses.replace(pc, features=pc.points.copy())


def with_height_mask(pc: PointCloud, height: float) -> PointCloud:
    """Crude foreground heuristic: everything above `height` (y up) is foreground."""
    return dataclasses.replace(pc, fg_prob=(pc.points[:, 1] > height).astype(np.float64))


def assemble_rigid_flow(decomp: SceneDecomposition) -> FlowField:
    """Per-voxel flow from the segment transforms.

    Background voxels move with the ego-motion, each fitted cluster with its
    own transform, and the remaining foreground voxels (noise label or
    unfitted cluster) keep the unconstrained soft flow. By construction the
    flow inside every transformed segment is exactly rigid.
    """
    if decomp.voxel_x is None or decomp.unconstrained_flow is None:
        raise ValueError("decomposition lacks voxel-level data")
    pts = decomp.voxel_x.points
    out = np.zeros_like(pts)
    bg = decomp.bg_mask_x
    out[bg] = decomp.ego.apply(pts[bg]) - pts[bg]
    fg_index = np.flatnonzero(~bg)
    if len(fg_index) != len(decomp.unconstrained_flow):
        raise ValueError("unconstrained flow does not match foreground voxel count")
    out[fg_index] = decomp.unconstrained_flow.vectors
    for k, (t, fitted) in enumerate(zip(decomp.cluster_transforms, decomp.cluster_fitted)):
        if not fitted:
            continue
        sel = fg_index[decomp.clusters.labels == k]
        out[sel] = t.apply(pts[sel]) - pts[sel]
    return FlowField(out)


def infer_rigid_flow(
    x: PointCloud,
    y: PointCloud,
    cfg: PipelineConfig | None = None,
    refine: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[SceneDecomposition, FlowField]:
    """Estimate rigid multi-body flow from source cloud `x` to target `y`.

    Both clouds must carry `features` and `fg_prob`. Steps: voxelize both
    clouds (attributes averaged per cell); threshold foreground
    probabilities; estimate the ego-motion on the backgrounds via
    Sinkhorn-weighted rigid fitting; cluster the source foreground; compute
    the soft-correspondence flow on the foreground; fit one transform per
    cluster from that flow; assemble the per-voxel rigid flow; optionally
    refine every transform with ICP and reassemble; finally interpolate the
    voxel flow back onto the original source points.

    Returns the voxel-level decomposition and the per-point flow for `x`.

    Raises:
        ValueError: "no background" when thresholding leaves either side
            without background voxels; attribute/validation errors otherwise.
    """
    if cfg is None:
        cfg = PipelineConfig()
    cfg.validate()
    for name, pc in (("source", x), ("target", y)):
        if pc.features is None or pc.fg_prob is None:
            raise ValueError(f"{name} cloud needs features and fg_prob attributes")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    grid_x = voxelize(x, cfg.voxel_size, cfg.max_points, rng)
    grid_y = voxelize(y, cfg.voxel_size, cfg.max_points, rng)
    vx = grid_x.voxel_centers
    vy = grid_y.voxel_centers

    fg_mask_x = vx.fg_prob > cfg.fg_threshold
    fg_mask_y = vy.fg_prob > cfg.fg_threshold
    bg_mask_x = ~fg_mask_x
    bg_mask_y = ~fg_mask_y
    if not bg_mask_x.any() or not bg_mask_y.any():
        raise ValueError("no background")

    ego, assignment = estimate_ego_motion(
        vx.select(bg_mask_x),
        vy.select(bg_mask_y),
        tau=cfg.tau_ego,
        n_sample=cfg.ego_sample_size,
        slack_d0=cfg.resolved_slack_d0,
        iterations=cfg.sinkhorn_iterations,
        rng=rng,
    )

    fg_x = vx.select(fg_mask_x)
    fg_y = vy.select(fg_mask_y)
    clusters = dbscan(fg_x, cfg.dbscan_eps, cfg.dbscan_min_samples, cfg.dbscan_min_cluster_size)

    if len(fg_x) > 0 and len(fg_y) > 0:
        unconstrained = soft_flow(fg_x, fg_y, cfg.tau_flow)
        if cfg.flow_smooth_k > 0:
            unconstrained = smooth_flow(
                fg_x, unconstrained, k=cfg.flow_smooth_k, radius=cfg.flow_smooth_radius
            )
    else:
        unconstrained = FlowField(np.zeros((len(fg_x), 3)))

    transforms: list[RigidTransform] = []
    fitted: list[bool] = []
    for k in range(clusters.n_clusters):
        sel = clusters.labels == k
        try:
            transforms.append(
                fit_cluster_transform(fg_x.select(sel), FlowField(unconstrained.vectors[sel]))
            )
            fitted.append(True)
        except ValueError:
            transforms.append(RigidTransform.identity())
            fitted.append(False)

    decomp = SceneDecomposition(
        fg_prob_x=vx.fg_prob,
        fg_prob_y=vy.fg_prob,
        bg_mask_x=bg_mask_x,
        bg_mask_y=bg_mask_y,
        clusters=clusters,
        ego=ego,
        cluster_transforms=transforms,
        cluster_fitted=fitted,
        cluster_refined=[False] * len(transforms),
        voxel_x=vx,
        voxel_y=vy,
        unconstrained_flow=unconstrained,
        assignment=assignment,
    )
    decomp = dataclasses.replace(decomp, voxel_flow=assemble_rigid_flow(decomp))
    if refine:
        decomp = refine_scene(decomp, vx, vy, cfg.icp_bg, cfg.icp_fg)

    point_flow = transfer_flow_to_points(grid_x, decomp.voxel_flow, x, cfg.interp_k)
    return decomp, point_flow
