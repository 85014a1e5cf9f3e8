"""Feature registration by inverse rendering.

Every masked pixel of every view is composited through the scene; the Top-k
heaviest Gaussians on that ray receive the pixel's compositing weight for the
pixel's mask. Per-Gaussian features are then the weight-normalized average of
the mask embeddings they collected, and Gaussians that collected nothing are
pruned.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from tqdm import tqdm

from .errors import EmptySceneError, InvalidArgumentError
from .gaussians import (
    DEFAULT_RASTER,
    Camera,
    RasterConfig,
    Scene,
    composite_pixels,
    project_scene,
    topk_weights,
)
from .parallel import ordered_map, resolve_threads
from .pq import PQCodebook, code_norms, decode_batch, encode_batch

logger = logging.getLogger(__name__)

UNIT_NORM_TOLERANCE = 1e-5


@dataclass
class MaskView:
    """One training view: camera, per-pixel mask ids and local-id -> global-embedding table."""

    camera: Camera
    mask_map: np.ndarray                 # (H, W) uint32, 0 = unmasked
    mask_table: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        self.mask_map = np.asarray(self.mask_map, dtype=np.uint32)
        expected = (self.camera.height, self.camera.width)
        if self.mask_map.shape != expected:
            raise InvalidArgumentError(
                f"Mask map shape {self.mask_map.shape} does not match camera resolution {expected}"
            )


@dataclass
class MaskDataset:
    """Views with disjoint per-view masks and a global table of unit embeddings."""

    views: List[MaskView]
    embeddings: np.ndarray               # (M, D)

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=float)
        if self.embeddings.ndim != 2:
            raise InvalidArgumentError("Embeddings must be an (M, D) matrix")

        norms = np.linalg.norm(self.embeddings, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOLERANCE):
            raise InvalidArgumentError("Mask embeddings must be unit-norm")

        m = len(self.embeddings)
        for v, view in enumerate(self.views):
            ids = np.unique(view.mask_map)
            missing = [int(i) for i in ids if i != 0 and int(i) not in view.mask_table]
            if missing:
                raise InvalidArgumentError(f"View {v} has unresolved mask ids {missing}")
            bad = [g for g in view.mask_table.values() if not 0 <= g < m]
            if bad:
                raise InvalidArgumentError(f"View {v} maps to missing embeddings {bad}")

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def mask_count(self) -> int:
        return len(self.embeddings)


@dataclass
class WeightMatrix:
    """Sparse N x M matrix of accumulated weights between Gaussians and masks."""

    matrix: sparse.csr_matrix

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def entry(self, gaussian: int, mask: int) -> float:
        return float(self.matrix[gaussian, mask])


@dataclass
class AggregatedFeatures:
    """Unit features per Gaussian; rows where ``assigned`` is False are zero."""

    features: np.ndarray                 # (N, D)
    assigned: np.ndarray                 # (N,) bool


@dataclass
class RegisteredScene:
    """
    Scene restricted to surviving Gaussians with their registered features.

    Exactly one of ``features`` (full precision) or ``codes`` (PQ) is set.
    """

    scene: Scene
    kept_indices: np.ndarray             # original index of each survivor, ascending
    features: Optional[np.ndarray] = None
    codes: Optional[np.ndarray] = None
    _norm_cache: Dict[str, Tuple[PQCodebook, np.ndarray]] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    @property
    def mode(self) -> str:
        return "pq" if self.codes is not None else "full"

    @property
    def survivor_map(self) -> Dict[int, int]:
        """Original Gaussian index -> index in this scene."""
        return {int(orig): new for new, orig in enumerate(self.kept_indices)}

    def __len__(self) -> int:
        return len(self.scene)

    def feature_vectors(self, codebook: Optional[PQCodebook] = None) -> np.ndarray:
        """Full-precision features, decoding PQ codes with ``codebook`` when needed."""
        if self.codes is None:
            return self.features
        if codebook is None:
            raise InvalidArgumentError("A codebook is required to decode PQ features")
        return decode_batch(self.codes, codebook)

    def code_norms(self, codebook: PQCodebook, normalization: str = "paper") -> np.ndarray:
        """ADC normalizers of the stored codes, computed once per codebook and normalization."""
        if self.codes is None:
            raise InvalidArgumentError("Only PQ-coded scenes have code norms")
        cached = self._norm_cache.get(normalization)
        if cached is None or cached[0] is not codebook:
            cached = (codebook, code_norms(self.codes, codebook, normalization))
            self._norm_cache[normalization] = cached
        return cached[1]

    def compression_bytes(self) -> int:
        """Bytes used to store the per-Gaussian features."""
        if self.codes is not None:
            return int(self.codes.size * self.codes.itemsize)
        return int(self.features.shape[0] * self.features.shape[1] * 4)


def pixel_embedding(ds: MaskDataset, view: int, pixel: Sequence[int]) -> Optional[np.ndarray]:
    """
    Embedding of the mask covering ``pixel`` in ``view``.

    Args:
        ds: Mask dataset
        view: View index
        pixel: Integer pixel coordinates (x, y)

    Returns:
        The mask's unit embedding, or None if the pixel is unmasked
    """
    if not 0 <= view < len(ds.views):
        raise InvalidArgumentError(f"View {view} out of range [0, {len(ds.views)})")

    mv = ds.views[view]
    x, y = int(pixel[0]), int(pixel[1])
    height, width = mv.mask_map.shape
    if not (0 <= x < width and 0 <= y < height):
        raise InvalidArgumentError(f"Pixel ({x}, {y}) outside {width}x{height}")

    mask_id = int(mv.mask_map[y, x])
    if mask_id == 0:
        return None
    return ds.embeddings[mv.mask_table[mask_id]]


def _view_triplets(
    scene: Scene,
    mv: MaskView,
    k: int,
    config: RasterConfig,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(gaussian, mask, weight) triplets of one view in row-major pixel order."""
    proj = project_scene(scene, mv.camera, config)
    lookup = np.zeros(int(mv.mask_map.max()) + 1, dtype=np.int64)
    for local, global_idx in mv.mask_table.items():
        if local < len(lookup):
            lookup[local] = global_idx

    gauss_parts, mask_parts, weight_parts = [], [], []
    height, width = mv.mask_map.shape
    xs = np.arange(width, dtype=float) + 0.5

    for y in range(height):
        row = mv.mask_map[y]
        cols = np.flatnonzero(row)
        if cols.size == 0:
            continue

        pixels = np.column_stack([xs[cols], np.full(cols.size, y + 0.5)])
        weights, _ = composite_pixels(proj, pixels, config)
        idx, vals = topk_weights(weights, k)

        keep = vals > 0
        masks = np.broadcast_to(lookup[row[cols]][:, None], idx.shape)
        gauss_parts.append(idx[keep])
        mask_parts.append(masks[keep])
        weight_parts.append(vals[keep])

    if not gauss_parts:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    return np.concatenate(gauss_parts), np.concatenate(mask_parts), np.concatenate(weight_parts)


def accumulate_weights(
    scene: Scene,
    ds: MaskDataset,
    k: int,
    config: RasterConfig = DEFAULT_RASTER,
    threads: Optional[int] = None,
    show_progress: bool = False,
) -> WeightMatrix:
    """
    Accumulate Top-k compositing weights of every masked pixel onto (Gaussian, mask).

    Views are processed independently and their partial triplets are merged in
    view order, so the result does not depend on the thread count.

    Args:
        scene: Scene to register onto
        ds: Mask dataset
        k: Number of Gaussians per ray that receive weight
        config: Rasterizer constants
        threads: Worker threads (defaults to DRSPLAT_THREADS)
        show_progress: Show a tqdm bar over views

    Returns:
        Sparse N x M weight matrix
    """
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    if len(scene) == 0:
        raise EmptySceneError("Cannot register features onto an empty scene")

    n_threads = resolve_threads(threads)
    progress = tqdm(total=len(ds.views), desc="Accumulating weights", disable=not show_progress)

    def work(mv: MaskView) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        result = _view_triplets(scene, mv, k, config)
        progress.update(1)
        return result

    partials = ordered_map(work, ds.views, n_threads)
    progress.close()

    gauss = np.concatenate([p[0] for p in partials]) if partials else np.zeros(0, dtype=np.int64)
    masks = np.concatenate([p[1] for p in partials]) if partials else np.zeros(0, dtype=np.int64)
    vals = np.concatenate([p[2] for p in partials]) if partials else np.zeros(0)

    matrix = sparse.coo_matrix(
        (vals, (gauss, masks)), shape=(len(scene), ds.mask_count)
    ).tocsr()
    matrix.sum_duplicates()

    logger.debug(f"Accumulated {len(vals)} ray contributions over {len(ds.views)} views (k={k})")
    return WeightMatrix(matrix=matrix)


def aggregate_features(w: WeightMatrix, embeddings: np.ndarray) -> AggregatedFeatures:
    """
    Weight-normalized mean of mask embeddings per Gaussian, renormalized to unit length.

    Gaussians with no weight, or whose mean cancels to the zero vector, are
    left unassigned.
    """
    embeddings = np.asarray(embeddings, dtype=float)
    row_sums = w.row_sums()
    covered = row_sums > 0

    safe = np.where(covered, row_sums, 1.0)
    normalized = sparse.diags(1.0 / safe) @ w.matrix
    mean = np.asarray(normalized @ embeddings)

    norms = np.linalg.norm(mean, axis=1)
    cancelled = covered & (norms == 0)
    if np.any(cancelled):
        logger.warning(
            f"{int(cancelled.sum())} Gaussians aggregated to a zero vector and are left unassigned"
        )

    assigned = covered & ~cancelled
    features = np.zeros_like(mean)
    features[assigned] = mean[assigned] / norms[assigned, None]
    return AggregatedFeatures(features=features, assigned=assigned)


def prune_unassigned(scene: Scene, aggregated: AggregatedFeatures) -> RegisteredScene:
    """
    Drop Gaussians without a registered feature, preserving order.

    Raises:
        EmptySceneError: if nothing survives
    """
    kept = np.flatnonzero(aggregated.assigned)
    if kept.size == 0:
        raise EmptySceneError("Every Gaussian was pruned; no Gaussian received any weight")

    pruned = len(scene) - kept.size
    if pruned:
        logger.info(f"Pruned {pruned} of {len(scene)} Gaussians without registered features")

    return RegisteredScene(
        scene=scene.subset(kept),
        kept_indices=kept,
        features=aggregated.features[kept],
    )


def register_scene(
    scene: Scene,
    ds: MaskDataset,
    k: int,
    codebook: Optional[PQCodebook] = None,
    config: RasterConfig = DEFAULT_RASTER,
    threads: Optional[int] = None,
    show_progress: bool = False,
) -> RegisteredScene:
    """
    Full registration: accumulate, aggregate, prune and optionally PQ-encode.

    Args:
        scene: Scene to register onto
        ds: Mask dataset
        k: Top-k Gaussians per ray
        codebook: When given, features are stored as PQ codes
        config: Rasterizer constants
        threads: Worker threads
        show_progress: Show progress over views

    Returns:
        RegisteredScene
    """
    weights = accumulate_weights(scene, ds, k, config, threads, show_progress)
    aggregated = aggregate_features(weights, ds.embeddings)
    registered = prune_unassigned(scene, aggregated)

    if codebook is not None:
        registered.codes = encode_batch(registered.features, codebook, threads=threads)
        registered.features = None

    logger.info(
        f"Registered {len(registered)} Gaussians ({registered.mode} features, "
        f"{registered.compression_bytes()} bytes)"
    )
    return registered
