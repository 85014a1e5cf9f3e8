"""Volume-aware evaluation of labeled Gaussian scenes.

Ground truth comes as a labeled point cloud. Each Gaussian is pseudo-labeled
from the points through Mahalanobis distances, and IoU is measured over
Gaussians weighted by their significant score (ellipsoid volume times
opacity). A voxel grid labeled from opacity-weighted Gaussian densities gives
an independent volume-aware IoU used to validate the Gaussian-level metric.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import (
    InvalidArgumentError,
    NumericalDegeneracyError,
    ResourceLimitError,
)
from .gaussians import Gaussian3D, Scene, quaternion_to_rotation

logger = logging.getLogger(__name__)

PSEUDO_LABEL_MODES = ("affinity", "paper_verbatim")

# Volume times opacity per Gaussian.
SignificantScores = np.ndarray
_GAUSS_NORM = (2.0 * math.pi) ** 1.5


@dataclass(frozen=True)
class EvalConfig:
    """Constants of the evaluation protocol."""

    covariance_eps: float = 1e-8                 # added to squared scales before inversion
    cutoff_sigma: float = 3.0                    # density is zero beyond this many sigmas
    relative_density_threshold: float = 1e-4     # empty voxel: p_j < this * max p_j
    voxel_divisions: int = 128                   # default spacing = bbox diagonal / divisions
    max_cells: int = 10_000_000
    exclude_undefined: bool = True               # undefined IoU left out of mIoU
    iou_buckets: Tuple[float, ...] = (0.15, 0.30, 0.45)


DEFAULT_EVAL = EvalConfig()


@dataclass
class LabeledPointCloud:
    """Q points with integer semantic labels in [0, label_count)."""

    points: np.ndarray
    labels: np.ndarray
    label_count: int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(self.points) != len(self.labels):
            raise InvalidArgumentError("Point and label counts differ")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.label_count):
            raise InvalidArgumentError(f"Point labels must lie in [0, {self.label_count})")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class VoxelGrid:
    """Regular grid of voxel centers with per-label scores, densities and labels."""

    origin: np.ndarray
    spacing: float
    dims: Tuple[int, int, int]
    scores: np.ndarray          # (cells, label_count)
    density: np.ndarray         # (cells,)
    labels: np.ndarray          # (cells,), -1 for empty voxels
    threshold: float

    @property
    def cell_count(self) -> int:
        return int(np.prod(self.dims))

    @property
    def nonempty(self) -> np.ndarray:
        return self.labels >= 0

    def same_geometry(self, other: "VoxelGrid") -> bool:
        return (
            tuple(self.dims) == tuple(other.dims)
            and self.spacing == other.spacing
            and np.array_equal(self.origin, other.origin)
        )


@dataclass
class SceneEvaluation:
    """Everything needed to compare the Gaussian and voxel metrics on one scene."""

    pred: np.ndarray
    gt: np.ndarray
    significance: np.ndarray
    grid_gt: VoxelGrid
    grid_pred: VoxelGrid
    label_count: int


def _inverse_variances(scales: np.ndarray, eps: float) -> np.ndarray:
    variances = np.asarray(scales, dtype=float) ** 2 + eps
    if np.any(~np.isfinite(variances)) or np.any(variances <= 0):
        raise NumericalDegeneracyError("Covariance is singular after regularization")
    return 1.0 / variances


def _mahalanobis_many(
    points: np.ndarray, center: np.ndarray, rot: np.ndarray, inv_var: np.ndarray
) -> np.ndarray:
    local = (points - center) @ rot
    return np.sum(local * local * inv_var, axis=-1)


def mahalanobis_distance(p: Sequence[float], g: Gaussian3D, config: EvalConfig = DEFAULT_EVAL) -> float:
    """
    Squared Mahalanobis distance (p - mu)^T Sigma^-1 (p - mu).

    Sigma is R diag(s^2 + eps) R^T, so the inverse never needs a matrix solve.

    Example:
        >>> g = Gaussian3D([0, 0, 0], [2, 1, 1], [1, 0, 0, 0], 1.0, [0, 0, 0])
        >>> round(mahalanobis_distance([2, 0, 0], g), 6)
        1.0
    """
    inv_var = _inverse_variances(g.scale, config.covariance_eps)
    rot = quaternion_to_rotation(g.rotation)
    d = float(_mahalanobis_many(np.asarray(p, dtype=float)[None, :], g.center, rot, inv_var)[0])
    if not math.isfinite(d):
        raise NumericalDegeneracyError("Mahalanobis distance is not finite")
    return d


def pseudo_label_gaussians(
    pc: LabeledPointCloud,
    scene: Scene,
    mode: str = "affinity",
    config: EvalConfig = DEFAULT_EVAL,
) -> np.ndarray:
    """
    Label every Gaussian from a labeled point cloud.

    ``paper_verbatim`` takes the label whose points have the largest summed
    Mahalanobis distance, as the protocol is written. ``affinity`` takes the
    label with the largest summed exp(-d/2). Ties go to the lowest label.

    Args:
        pc: Labeled point cloud in the scene's frame
        scene: Gaussians to label
        mode: ``affinity`` or ``paper_verbatim``
        config: Evaluation constants

    Returns:
        Integer label per Gaussian
    """
    if mode not in PSEUDO_LABEL_MODES:
        raise InvalidArgumentError(f"Unknown pseudo-labeling mode {mode!r}")
    if len(pc) == 0:
        raise InvalidArgumentError("Point cloud is empty")

    rots = quaternion_to_rotation(scene.rotations)
    inv_vars = _inverse_variances(scene.scales, config.covariance_eps)
    labels = np.empty(len(scene), dtype=np.int64)

    for i in range(len(scene)):
        d = _mahalanobis_many(pc.points, scene.centers[i], rots[i], inv_vars[i])
        weights = d if mode == "paper_verbatim" else np.exp(-0.5 * d)
        sums = np.bincount(pc.labels, weights=weights, minlength=pc.label_count)
        labels[i] = int(np.argmax(sums))

    logger.debug(f"Pseudo-labeled {len(scene)} Gaussians from {len(pc)} points ({mode})")
    return labels


def significant_score(g: Gaussian3D) -> float:
    """Relative ellipsoid volume times opacity, s_x * s_y * s_z * alpha."""
    return float(np.prod(g.scale) * g.opacity)


def significant_scores(scene: Scene) -> SignificantScores:
    return np.prod(scene.scales, axis=1) * scene.opacities


def binary_weighted_iou(
    pred_mask: np.ndarray, gt_mask: np.ndarray, d: np.ndarray
) -> Optional[float]:
    """
    d-weighted IoU of two binary indicator vectors; None when the union is empty.
    """
    pred = np.asarray(pred_mask, dtype=float)
    gt = np.asarray(gt_mask, dtype=float)
    d = np.asarray(d, dtype=float)
    if not (pred.shape == gt.shape == d.shape):
        raise InvalidArgumentError(
            f"Length mismatch: pred {pred.shape}, gt {gt.shape}, scores {d.shape}"
        )
    both = pred * gt
    intersection = float(d @ both)
    union = float(d @ (pred + gt - both))
    if union == 0:
        return None
    return intersection / union


def weighted_iou(
    pred: np.ndarray, gt: np.ndarray, d: np.ndarray, label: int
) -> Optional[float]:
    """
    Significance-weighted IoU of one label.

    Example:
        >>> weighted_iou([0, 1, 1], [0, 0, 1], [1, 2, 4], 0)
        0.3333333333333333
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise InvalidArgumentError(f"Length mismatch: pred {pred.shape}, gt {gt.shape}")
    return binary_weighted_iou(pred == label, gt == label, d)


def _summarize_ious(
    per_label: Dict[int, Optional[float]], config: EvalConfig
) -> Dict[str, object]:
    undefined = [label for label, iou in per_label.items() if iou is None]
    if config.exclude_undefined:
        values = [iou for iou in per_label.values() if iou is not None]
    else:
        values = [0.0 if iou is None else iou for iou in per_label.values()]

    if undefined:
        logger.debug(f"Undefined IoU (empty union) for labels {undefined}")

    return {
        "per_label": per_label,
        "miou": float(np.mean(values)) if values else None,
        "undefined_labels": undefined,
    }


def mean_weighted_iou(
    pred: np.ndarray,
    gt: np.ndarray,
    d: np.ndarray,
    label_count: int,
    config: EvalConfig = DEFAULT_EVAL,
) -> Dict[str, object]:
    """
    Per-label weighted IoU and their mean.

    Returns:
        Dictionary with ``per_label``, ``miou`` and ``undefined_labels``
    """
    per_label = {label: weighted_iou(pred, gt, d, label) for label in range(label_count)}
    return _summarize_ious(per_label, config)


def iou_accuracy(
    ious: Sequence[Optional[float]], thresholds: Sequence[float] = DEFAULT_EVAL.iou_buckets
) -> Dict[str, Optional[float]]:
    """Fraction of defined IoUs strictly above each threshold."""
    defined = [iou for iou in ious if iou is not None]
    result = {}
    for tau in thresholds:
        key = f"iou>{tau:.2f}"
        result[key] = float(np.mean([iou > tau for iou in defined])) if defined else None
    return result


def significance_ablation(scene: Scene, fraction: float, side: str = "top") -> np.ndarray:
    """
    Indices left after removing the ``fraction`` most (``top``) or least
    (``bottom``) significant Gaussians.
    """
    if not 0.0 <= fraction <= 1.0:
        raise InvalidArgumentError(f"fraction must be in [0, 1], got {fraction}")
    if side not in ("top", "bottom"):
        raise InvalidArgumentError(f"side must be 'top' or 'bottom', got {side!r}")

    order = np.argsort(significant_scores(scene), kind="stable")
    n_drop = int(round(fraction * len(scene)))
    kept = order[: len(order) - n_drop] if side == "top" else order[n_drop:]
    return np.sort(kept)


def ablation_miou(
    pred: np.ndarray,
    gt: np.ndarray,
    scene: Scene,
    fraction: float,
    label_count: int,
    config: EvalConfig = DEFAULT_EVAL,
) -> Dict[str, Dict[str, Optional[float]]]:
    """
    Weighted and unweighted mIoU after removing the ``fraction`` most and least
    significant Gaussians from a prediction.

    Removed Gaussians are predicted as no label. Both sides remove the same
    number of Gaussians, so a count-based IoU sees the same misses either way
    while the weighted IoU follows how much volume was removed.

    Args:
        pred: Predicted label per Gaussian
        gt: Ground-truth label per Gaussian
        scene: Scene supplying the significant scores
        fraction: Share of Gaussians to remove, in [0, 1]
        label_count: Number of labels

    Returns:
        ``{"top": ..., "bottom": ...}``, each with ``removed``,
        ``removed_significance`` (share of total score), ``miou`` and ``unweighted_miou``
    """
    pred = np.asarray(pred, dtype=np.int64)
    if len(pred) != len(scene):
        raise InvalidArgumentError(
            f"Prediction has {len(pred)} labels, scene has {len(scene)} Gaussians"
        )

    d = significant_scores(scene)
    total = float(d.sum())
    result = {}
    for side in ("top", "bottom"):
        kept = significance_ablation(scene, fraction, side)
        removed = np.ones(len(scene), dtype=bool)
        removed[kept] = False
        ablated = np.where(removed, -1, pred)

        weighted = mean_weighted_iou(ablated, gt, d, label_count, config)
        unweighted = mean_weighted_iou(ablated, gt, np.ones_like(d), label_count, config)
        result[side] = {
            "removed": int(removed.sum()),
            "removed_significance": float(d[removed].sum()) / total if total > 0 else None,
            "miou": weighted["miou"],
            "unweighted_miou": unweighted["miou"],
        }
        logger.debug(f"Removed {side} {fraction:.0%}: weighted mIoU {weighted['miou']}")
    return result


def _require_labels(scene: Scene, label_count: int) -> None:
    if len(scene) == 0:
        raise InvalidArgumentError("Scene has no Gaussians")
    if scene.labels.min() < 0 or scene.labels.max() >= label_count:
        raise InvalidArgumentError(f"Every Gaussian needs a label in [0, {label_count})")


def _densities(
    points: np.ndarray,
    center: np.ndarray,
    rot: np.ndarray,
    inv_var: np.ndarray,
    cutoff_sq: float,
) -> np.ndarray:
    d = _mahalanobis_many(points, center, rot, inv_var)
    norm = _GAUSS_NORM * math.sqrt(float(np.prod(1.0 / inv_var)))
    return np.where(d > cutoff_sq, 0.0, np.exp(-0.5 * d) / norm)


def voxel_label_scores(
    v: Sequence[float],
    scene: Scene,
    label_count: int,
    config: EvalConfig = DEFAULT_EVAL,
) -> np.ndarray:
    """
    Opacity-weighted Gaussian density per label at point ``v``.

    Example:
        >>> s = Scene([[0, 0, 0]], [[1, 1, 1]], [[1, 0, 0, 0]], [1.0], labels=[0])
        >>> round(float(voxel_label_scores([0, 0, 0], s, 2)[0]), 5)
        0.06349
    """
    _require_labels(scene, label_count)
    v = np.asarray(v, dtype=float)[None, :]
    rots = quaternion_to_rotation(scene.rotations)
    inv_vars = _inverse_variances(scene.scales, config.covariance_eps)

    per_gaussian = np.array([
        scene.opacities[i] * _densities(v, scene.centers[i], rots[i], inv_vars[i], config.cutoff_sigma ** 2)[0]
        for i in range(len(scene))
    ])
    return np.bincount(scene.labels, weights=per_gaussian, minlength=label_count)


def _grid_geometry(
    scene: Scene,
    bounds: Optional[Tuple[np.ndarray, np.ndarray]],
    spacing: Optional[float],
    config: EvalConfig,
) -> Tuple[np.ndarray, float, Tuple[int, int, int]]:
    lo, hi = bounds if bounds is not None else scene.bounds(config.cutoff_sigma)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if spacing is None:
        spacing = float(np.linalg.norm(hi - lo)) / config.voxel_divisions
    if spacing <= 0:
        raise InvalidArgumentError(f"Voxel spacing must be positive, got {spacing}")

    dims = tuple(int(max(1, math.ceil((h - l) / spacing))) for l, h in zip(lo, hi))
    cells = int(np.prod(dims, dtype=np.int64))
    if cells > config.max_cells:
        raise ResourceLimitError(f"Voxel grid of {dims} ({cells} cells) exceeds budget {config.max_cells}")
    return lo, float(spacing), dims


def voxelize_scene(
    scene: Scene,
    label_count: int,
    bounds: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    spacing: Optional[float] = None,
    density_threshold: Optional[float] = None,
    config: EvalConfig = DEFAULT_EVAL,
) -> VoxelGrid:
    """
    Label a voxel grid from the scene's labeled Gaussians.

    Each Gaussian only touches the voxels inside its cutoff box, and the
    Gaussians are added in index order, so the grid is deterministic.

    Args:
        scene: Scene whose Gaussians all carry labels
        label_count: Number of labels
        bounds: (lo, hi) corners; defaults to the scene's 3-sigma box
        spacing: Voxel edge; defaults to the box diagonal / voxel_divisions
        density_threshold: Absolute density below which a voxel is empty;
            defaults to relative_density_threshold * max density
        config: Evaluation constants

    Returns:
        VoxelGrid
    """
    _require_labels(scene, label_count)
    origin, spacing, dims = _grid_geometry(scene, bounds, spacing, config)
    dims_arr = np.array(dims)
    cells = int(np.prod(dims))
    scores = np.zeros((cells, label_count))

    rots = quaternion_to_rotation(scene.rotations)
    inv_vars = _inverse_variances(scene.scales, config.covariance_eps)
    cutoff_sq = config.cutoff_sigma ** 2

    for i in range(len(scene)):
        reach = config.cutoff_sigma * math.sqrt(float(np.max(1.0 / inv_vars[i])))
        lo_idx = np.floor((scene.centers[i] - reach - origin) / spacing - 0.5).astype(int)
        hi_idx = np.ceil((scene.centers[i] + reach - origin) / spacing - 0.5).astype(int)
        lo_idx = np.clip(lo_idx, 0, dims_arr - 1)
        hi_idx = np.clip(hi_idx, 0, dims_arr - 1)
        if np.any(hi_idx < lo_idx):
            continue

        axes = [np.arange(lo_idx[a], hi_idx[a] + 1) for a in range(3)]
        ix, iy, iz = np.meshgrid(*axes, indexing="ij")
        ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()
        centers = origin + (np.column_stack([ix, iy, iz]) + 0.5) * spacing

        dens = _densities(centers, scene.centers[i], rots[i], inv_vars[i], cutoff_sq)
        hit = dens > 0
        if not np.any(hit):
            continue
        flat = np.ravel_multi_index((ix[hit], iy[hit], iz[hit]), dims)
        scores[flat, scene.labels[i]] += scene.opacities[i] * dens[hit]

    density = scores.sum(axis=1)
    if density_threshold is None:
        density_threshold = config.relative_density_threshold * float(density.max(initial=0.0))

    empty = (density < density_threshold) | (density <= 0)
    labels = np.where(empty, -1, scores.argmax(axis=1))

    logger.debug(
        f"Voxelized {len(scene)} Gaussians into {dims} grid: {int((~empty).sum())} non-empty voxels"
    )
    return VoxelGrid(
        origin=origin,
        spacing=spacing,
        dims=dims,
        scores=scores,
        density=density,
        labels=labels,
        threshold=float(density_threshold),
    )


def voxel_iou(grid_gt: VoxelGrid, grid_pred: VoxelGrid, label: int) -> Optional[float]:
    """
    Count IoU of one label over voxels that are non-empty in either grid.

    Returns None when neither grid holds the label.
    """
    if not grid_gt.same_geometry(grid_pred):
        raise InvalidArgumentError("Voxel grids have different geometry")
    gt = grid_gt.labels == label
    pred = grid_pred.labels == label
    union = int(np.count_nonzero(gt | pred))
    if union == 0:
        return None
    return int(np.count_nonzero(gt & pred)) / union


def voxel_mean_iou(
    grid_gt: VoxelGrid,
    grid_pred: VoxelGrid,
    label_count: int,
    config: EvalConfig = DEFAULT_EVAL,
) -> Dict[str, object]:
    per_label = {label: voxel_iou(grid_gt, grid_pred, label) for label in range(label_count)}
    return _summarize_ious(per_label, config)


def pearson(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """Pearson correlation, or None when either series has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    return float(stats.pearsonr(x, y)[0])


def metric_correlation(
    scenes: Sequence[SceneEvaluation], config: EvalConfig = DEFAULT_EVAL
) -> Dict[str, object]:
    """
    Correlate the Gaussian-level weighted mIoU with the voxel mIoU across scenes.

    The unweighted control series uses d_i = 1 for every Gaussian.

    Returns:
        Dictionary with the three mIoU series and both correlations
    """
    if len(scenes) < 3:
        raise InvalidArgumentError(f"Need at least 3 scenes, got {len(scenes)}")

    weighted, unweighted, voxel, included = [], [], [], []
    skipped = 0
    for index, ev in enumerate(scenes):
        w = mean_weighted_iou(ev.pred, ev.gt, ev.significance, ev.label_count, config)["miou"]
        u = mean_weighted_iou(ev.pred, ev.gt, np.ones_like(ev.significance), ev.label_count, config)["miou"]
        v = voxel_mean_iou(ev.grid_gt, ev.grid_pred, ev.label_count, config)["miou"]
        if w is None or u is None or v is None:
            skipped += 1
            continue
        weighted.append(w)
        unweighted.append(u)
        voxel.append(v)
        included.append(index)

    if skipped:
        logger.warning(f"Skipped {skipped} scenes with undefined mIoU")

    return {
        "scenes": len(weighted),
        "included": included,
        "weighted_miou": weighted,
        "unweighted_miou": unweighted,
        "voxel_miou": voxel,
        "r_weighted": pearson(weighted, voxel),
        "r_unweighted": pearson(unweighted, voxel),
    }
