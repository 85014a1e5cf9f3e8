"""Synthetic scenes, masks and embeddings with exact ground truth.

Label embeddings are random unit vectors kept at least 60 degrees apart, so
every downstream metric has a known answer: registering noisy per-mask copies
of the label embeddings and segmenting by argmax should give back the labels
the generator assigned.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .errors import SceneSpecError
from .evaluate import (
    DEFAULT_EVAL,
    EvalConfig,
    LabeledPointCloud,
    SceneEvaluation,
    mean_weighted_iou,
    metric_correlation,
    significant_scores,
    voxelize_scene,
)
from .gaussians import (
    DEFAULT_RASTER,
    Camera,
    RasterConfig,
    Scene,
    composite_pixels,
    project_scene,
    quaternion_to_rotation,
)
from .parallel import ordered_map, resolve_threads
from .pq import MAX_CENTROIDS, PQCodebook, train_codebook
from .query import segment_argmax
from .registration import MaskDataset, MaskView, register_scene

logger = logging.getLogger(__name__)

MAX_EMBEDDING_RESAMPLES = 1000
MAX_LABEL_COSINE = 0.5   # cos 60 degrees
MIN_SIGNIFICANCE = 1e-12


def _f32(a: np.ndarray) -> np.ndarray:
    """Round through float32 so in-memory values equal their on-disk form."""
    return np.asarray(a, dtype=np.float32).astype(float)


def _normalize_rows(a: np.ndarray) -> np.ndarray:
    return a / np.linalg.norm(a, axis=-1, keepdims=True)


@dataclass
class CameraRig:
    """Ring of cameras around ``look_at`` at a fixed radius and height."""

    views: int = 8
    radius: float = 6.0
    elevation: float = 2.0
    look_at: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    width: int = 96
    height: int = 96
    focal: float = 100.0

    def __post_init__(self):
        self.look_at = tuple(float(v) for v in self.look_at)
        if self.views < 1:
            raise SceneSpecError(f"Rig needs at least one view, got {self.views}")
        if self.radius <= 0 or self.focal <= 0 or self.width < 1 or self.height < 1:
            raise SceneSpecError("Rig radius, focal length and resolution must be positive")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CameraRig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            logger.warning(f"Ignoring unknown rig fields: {sorted(unknown)}")
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class SceneSpec:
    """
    Parameters of a synthetic labeled scene.

    Gaussians are split round-robin over ``label_count`` clusters placed on a
    circle of ``cluster_radius`` (or at ``cluster_centers`` when given).
    """

    seed: int = 0
    gaussian_count: int = 200
    label_count: int = 4
    dim: int = 512
    sigma: float = 0.05
    cluster_radius: float = 1.5
    spread: float = 0.3
    cluster_centers: Optional[List[List[float]]] = None
    scale_range: Tuple[float, float] = (0.03, 0.12)
    opacity_range: Tuple[float, float] = (0.2, 0.8)
    points_per_gaussian: int = 20
    rig: CameraRig = field(default_factory=CameraRig)

    def __post_init__(self):
        self.scale_range = tuple(float(v) for v in self.scale_range)
        self.opacity_range = tuple(float(v) for v in self.opacity_range)

        if self.gaussian_count < 1 or self.label_count < 1:
            raise SceneSpecError("gaussian_count and label_count must be >= 1")
        if self.label_count > self.gaussian_count:
            raise SceneSpecError(
                f"label_count={self.label_count} exceeds gaussian_count={self.gaussian_count}"
            )
        if self.sigma < 0:
            raise SceneSpecError(f"sigma must be >= 0, got {self.sigma}")
        if self.dim < 1:
            raise SceneSpecError(f"dim must be >= 1, got {self.dim}")
        if not 0 < self.scale_range[0] <= self.scale_range[1]:
            raise SceneSpecError(f"Invalid scale_range {self.scale_range}")
        if not 0 <= self.opacity_range[0] <= self.opacity_range[1] <= 1:
            raise SceneSpecError(f"Invalid opacity_range {self.opacity_range}")
        if self.cluster_centers is not None and len(self.cluster_centers) != self.label_count:
            raise SceneSpecError("cluster_centers needs one entry per label")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SceneSpec":
        """Build a spec from a (possibly partial) dictionary, filling defaults."""
        data = dict(data)
        rig = data.pop("rig", None)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            logger.warning(f"Ignoring unknown scene spec fields: {sorted(unknown)}")
        kwargs = {k: v for k, v in data.items() if k in known}
        if rig is not None:
            kwargs["rig"] = rig if isinstance(rig, CameraRig) else CameraRig.from_dict(rig)
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise SceneSpecError(f"Invalid scene spec: {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def layout(self) -> np.ndarray:
        """Cluster center of every label, shape (label_count, 3)."""
        if self.cluster_centers is not None:
            return np.asarray(self.cluster_centers, dtype=float).reshape(self.label_count, 3)
        if self.label_count == 1:
            return np.zeros((1, 3))
        angles = 2.0 * math.pi * np.arange(self.label_count) / self.label_count
        return np.column_stack([
            self.cluster_radius * np.cos(angles),
            self.cluster_radius * np.sin(angles),
            np.zeros(self.label_count),
        ])


def ring_cameras(rig: CameraRig) -> List[Camera]:
    """
    Cameras evenly spaced on a horizontal circle, each looking at ``rig.look_at``.

    Camera axes follow OpenCV: x right, y down, z forward.
    """
    target = np.asarray(rig.look_at, dtype=float)
    world_up = np.array([0.0, 0.0, 1.0])
    cameras = []

    for v in range(rig.views):
        theta = 2.0 * math.pi * v / rig.views
        eye = target + np.array([rig.radius * math.cos(theta), rig.radius * math.sin(theta), rig.elevation])

        forward = target - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, world_up)
        if np.linalg.norm(right) < 1e-9:
            raise SceneSpecError("Camera looks straight along the up axis")
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)

        rot = _f32(np.stack([right, down, forward]))
        w2c = np.eye(4)
        w2c[:3, :3] = rot
        w2c[:3, 3] = _f32(-rot @ eye)

        cameras.append(Camera(
            fx=float(np.float32(rig.focal)),
            fy=float(np.float32(rig.focal)),
            cx=float(np.float32(rig.width / 2.0)),
            cy=float(np.float32(rig.height / 2.0)),
            width=rig.width,
            height=rig.height,
            world_to_camera=w2c,
        ))
    return cameras


def sample_label_embeddings(label_count: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """
    Random unit embeddings with pairwise cosine <= 0.5.

    Raises:
        SceneSpecError: if no valid draw is found within the resample budget
    """
    for attempt in range(MAX_EMBEDDING_RESAMPLES):
        emb = _normalize_rows(rng.standard_normal((label_count, dim)))
        gram = emb @ emb.T
        np.fill_diagonal(gram, -1.0)
        if label_count == 1 or gram.max() <= MAX_LABEL_COSINE:
            if attempt:
                logger.debug(f"Label embeddings accepted after {attempt + 1} draws")
            return _f32(emb)
    raise SceneSpecError(
        f"Could not place {label_count} embeddings 60 degrees apart in {dim} dimensions "
        f"after {MAX_EMBEDDING_RESAMPLES} draws"
    )


def gen_scene(spec: SceneSpec) -> Tuple[Scene, np.ndarray, LabeledPointCloud]:
    """
    Generate a labeled scene, its label embeddings and a labeled point cloud.

    Args:
        spec: Scene parameters

    Returns:
        Tuple of (scene with ground-truth labels, label embeddings (labels, D),
        point cloud sampled from every Gaussian)
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.gaussian_count

    embeddings = sample_label_embeddings(spec.label_count, spec.dim, rng)

    labels = np.arange(n) % spec.label_count
    centers = spec.layout()[labels] + rng.normal(0.0, spec.spread, (n, 3))
    log_lo, log_hi = np.log(spec.scale_range)
    scales = np.exp(rng.uniform(log_lo, log_hi, (n, 3)))
    rotations = _normalize_rows(rng.standard_normal((n, 4)))
    opacities = rng.uniform(spec.opacity_range[0], spec.opacity_range[1], n)
    colors = rng.uniform(0.0, 1.0, (n, 3))

    scene = Scene(
        centers=_f32(centers),
        scales=_f32(scales),
        rotations=_f32(rotations),
        opacities=_f32(opacities),
        colors=_f32(colors),
        labels=labels,
    )

    per = spec.points_per_gaussian
    local = rng.standard_normal((n, per, 3)) * scene.scales[:, None, :]
    rots = quaternion_to_rotation(scene.rotations)
    points = scene.centers[:, None, :] + np.einsum("nij,npj->npi", rots, local)
    pc = LabeledPointCloud(
        points=_f32(points.reshape(-1, 3)),
        labels=np.repeat(labels, per),
        label_count=spec.label_count,
    )

    logger.info(
        f"Generated scene: {n} Gaussians, {spec.label_count} labels, D={spec.dim}, "
        f"{len(pc)} points (seed={spec.seed})"
    )
    return scene, embeddings, pc


def _label_map(
    scene: Scene, cam: Camera, config: RasterConfig
) -> np.ndarray:
    """Per-pixel label of the highest-weight Gaussian, -1 where nothing contributes."""
    proj = project_scene(scene, cam, config)
    out = np.full((cam.height, cam.width), -1, dtype=np.int64)
    xs = np.arange(cam.width, dtype=float) + 0.5

    for y in range(cam.height):
        pixels = np.column_stack([xs, np.full(cam.width, y + 0.5)])
        weights, _ = composite_pixels(proj, pixels, config)
        if weights.shape[1] == 0:
            continue
        best = weights.argmax(axis=1)
        covered = weights[np.arange(cam.width), best] > 0
        out[y, covered] = scene.labels[best[covered]]
    return out


def render_masks(
    scene: Scene,
    label_embeddings: np.ndarray,
    rig: CameraRig,
    sigma: float,
    seed: int = 0,
    config: RasterConfig = DEFAULT_RASTER,
    threads: Optional[int] = None,
    show_progress: bool = False,
) -> MaskDataset:
    """
    Render one mask per (view, label) from the scene's ground-truth labels.

    A pixel belongs to the mask of the label of its highest-weight Gaussian.
    Each mask's embedding is its label embedding plus Gaussian noise of
    standard deviation ``sigma``, renormalized.

    Args:
        scene: Scene whose Gaussians carry labels
        label_embeddings: Unit label embeddings, one row per label
        rig: Camera rig
        sigma: Embedding noise
        seed: Seed for the embedding noise
        config: Rasterizer constants
        threads: Worker threads over views
        show_progress: Show a tqdm bar over views

    Returns:
        MaskDataset with global masks numbered in (view, label) order
    """
    if sigma < 0:
        raise SceneSpecError(f"sigma must be >= 0, got {sigma}")
    if not scene.has_labels:
        raise SceneSpecError("render_masks needs a labeled scene")

    label_embeddings = np.asarray(label_embeddings, dtype=float)
    cameras = ring_cameras(rig)
    progress = tqdm(total=len(cameras), desc="Rendering masks", disable=not show_progress)

    def work(cam: Camera) -> np.ndarray:
        result = _label_map(scene, cam, config)
        progress.update(1)
        return result

    label_maps = ordered_map(work, cameras, resolve_threads(threads))
    progress.close()

    rng = np.random.default_rng(seed)
    views, embeddings = [], []
    for cam, labels in zip(cameras, label_maps):
        present = np.unique(labels[labels >= 0])
        table = {}
        for label in present:
            base = label_embeddings[label]
            if sigma > 0:
                base = base + sigma * rng.standard_normal(base.shape)
                base = base / np.linalg.norm(base)
            table[int(label) + 1] = len(embeddings)
            embeddings.append(base)

        mask_map = np.where(labels >= 0, labels + 1, 0).astype(np.uint32)
        views.append(MaskView(camera=cam, mask_map=mask_map, mask_table=table))

    dim = label_embeddings.shape[1]
    matrix = _f32(np.stack(embeddings)) if embeddings else np.zeros((0, dim))
    logger.info(f"Rendered {len(views)} views with {len(embeddings)} masks (sigma={sigma})")
    return MaskDataset(views=views, embeddings=matrix)


def training_database(
    label_embeddings: np.ndarray,
    n: int,
    sigma: float,
    rng: np.random.Generator,
    random_fraction: float = 0.25,
) -> np.ndarray:
    """
    Codebook training vectors: noisy label embeddings mixed with random unit vectors.

    Returns:
        Unit vectors of shape (n, D)
    """
    label_embeddings = np.asarray(label_embeddings, dtype=float)
    n_random = int(round(n * random_fraction))
    n_labeled = n - n_random
    dim = label_embeddings.shape[1]

    picks = rng.integers(0, len(label_embeddings), n_labeled)
    noisy = label_embeddings[picks] + sigma * rng.standard_normal((n_labeled, dim))
    random = rng.standard_normal((n_random, dim))
    return _f32(_normalize_rows(np.vstack([noisy, random])))


def corrupt_predictions(
    labels: np.ndarray,
    d: np.ndarray,
    fraction: float,
    bias: float,
    label_count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Relabel a fraction of Gaussians, picked with probability proportional to d^bias.

    Positive ``bias`` corrupts large, opaque Gaussians first; negative ``bias``
    prefers small ones. A corrupted Gaussian always gets a different label.
    """
    labels = np.asarray(labels, dtype=np.int64).copy()
    n_corrupt = int(round(fraction * len(labels)))
    if n_corrupt == 0 or label_count < 2:
        return labels

    # Log space keeps d=0 with a negative bias finite
    log_w = bias * np.log(np.maximum(np.asarray(d, dtype=float), MIN_SIGNIFICANCE))
    weights = np.exp(log_w - log_w.max())
    chosen = rng.choice(len(labels), size=n_corrupt, replace=False, p=weights / weights.sum())
    shift = rng.integers(1, label_count, n_corrupt)
    labels[chosen] = (labels[chosen] + shift) % label_count
    return labels


def pipeline_codebook(
    spec: SceneSpec,
    label_embeddings: np.ndarray,
    subvectors: int,
    centroids: int = MAX_CENTROIDS,
    database_size: int = 2048,
    threads: Optional[int] = None,
) -> PQCodebook:
    """Train a codebook on a synthetic database drawn around the scene's label embeddings."""
    rng = np.random.default_rng([spec.seed, 1])
    db = training_database(label_embeddings, database_size, spec.sigma, rng)
    return train_codebook(db, subvectors, centroids, seed=spec.seed, threads=threads)


def run_pipeline(
    spec: SceneSpec,
    k: int = 20,
    subvectors: Optional[int] = None,
    centroids: int = MAX_CENTROIDS,
    threads: Optional[int] = None,
    config: RasterConfig = DEFAULT_RASTER,
) -> Dict[str, Any]:
    """
    Generate, render, register and segment one synthetic scene.

    Args:
        spec: Scene parameters
        k: Top-k Gaussians per ray during registration
        subvectors: PQ sub-vectors L; full-precision features when None
        centroids: PQ centroids per sub-space
        threads: Worker threads
        config: Rasterizer constants

    Returns:
        Dictionary with recovery rates and weighted mIoU over every generated
        Gaussian (pruned ones count as misses), survivor count and the
        predicted and true label of every Gaussian
    """
    scene, embeddings, _ = gen_scene(spec)
    ds = render_masks(scene, embeddings, spec.rig, spec.sigma, seed=spec.seed, config=config, threads=threads)

    codebook = None
    if subvectors is not None:
        codebook = pipeline_codebook(spec, embeddings, subvectors, centroids, threads=threads)

    rs = register_scene(scene, ds, k, codebook=codebook, config=config, threads=threads)

    # Pruned Gaussians keep -1, which never matches a ground-truth label.
    pred = np.full(len(scene), -1, dtype=np.int64)
    pred[rs.kept_indices] = segment_argmax(rs, codebook, list(embeddings))
    truth = scene.labels
    d = significant_scores(scene)

    correct = pred == truth
    miou = mean_weighted_iou(pred, truth, d, spec.label_count)
    return {
        "k": k,
        "mode": rs.mode,
        "survivors": len(rs),
        "pruned": len(scene) - len(rs),
        "recovery": float(correct.mean()),
        "weighted_recovery": float(d[correct].sum() / d.sum()),
        "weighted_miou": miou["miou"],
        "per_label_iou": miou["per_label"],
        "pred": pred,
        "truth": truth,
    }


def correlation_experiment(
    n_scenes: int = 20,
    seed: int = 0,
    base: Optional[SceneSpec] = None,
    config: EvalConfig = DEFAULT_EVAL,
    show_progress: bool = False,
) -> Dict[str, Any]:
    """
    Compare significance-weighted and unweighted mIoU against the voxel oracle.

    Every scene gets a random corruption fraction and a random volume bias, so
    count-based IoU and volume-based IoU disagree in a way only the weighted
    metric can follow.

    Args:
        n_scenes: Number of random scenes
        seed: Experiment seed
        base: Scene parameters shared by all scenes (seed is overridden)
        config: Evaluation constants for the voxel grids
        show_progress: Show a tqdm bar over scenes

    Returns:
        ``metric_correlation`` output plus the per-scene corruption settings
    """
    base = base or SceneSpec(cluster_radius=3.0, spread=0.6, scale_range=(0.02, 0.2))
    rng = np.random.default_rng(seed)
    evaluations, settings = [], []

    for s in tqdm(range(n_scenes), desc="Correlation scenes", disable=not show_progress):
        spec = replace(base, seed=int(rng.integers(0, 2**31 - 1)))
        scene, _, _ = gen_scene(spec)
        d = significant_scores(scene)

        fraction = float(rng.uniform(0.05, 0.5))
        bias = float(rng.uniform(-1.0, 1.0))
        pred = corrupt_predictions(scene.labels, d, fraction, bias, spec.label_count, rng)

        grid_gt = voxelize_scene(scene, spec.label_count, config=config)
        lo, hi = scene.bounds(config.cutoff_sigma)
        grid_pred = voxelize_scene(
            scene.with_labels(pred),
            spec.label_count,
            bounds=(lo, hi),
            spacing=grid_gt.spacing,
            config=config,
        )

        evaluations.append(SceneEvaluation(
            pred=pred,
            gt=scene.labels,
            significance=d,
            grid_gt=grid_gt,
            grid_pred=grid_pred,
            label_count=spec.label_count,
        ))
        settings.append({"scene": s, "seed": spec.seed, "fraction": fraction, "bias": bias})

    result = metric_correlation(evaluations, config)
    result["settings"] = settings
    logger.info(
        f"Correlation over {result['scenes']} scenes: "
        f"weighted r={result['r_weighted']}, unweighted r={result['r_unweighted']}"
    )
    return result
