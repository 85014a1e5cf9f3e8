"""Gaussian scene model, camera projection and per-pixel alpha compositing.

Scenes are stored as parallel numpy arrays. Projection follows EWA splatting:
the 3D covariance is rotated into the camera frame and pushed through the
perspective Jacobian evaluated at the Gaussian center. Compositing walks the
Gaussians front-to-back by center depth, exactly once per pixel.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    EmptySceneError,
    InvalidArgumentError,
    InvalidParameterError,
    NumericalDegeneracyError,
)

logger = logging.getLogger(__name__)

QUATERNION_TOLERANCE = 1e-6
ORTHONORMAL_TOLERANCE = 1e-6


@dataclass(frozen=True)
class RasterConfig:
    """Rasterizer constants shared by projection, compositing and voxel scoring."""

    low_pass: float = 0.3               # px^2 added to both diagonal entries of cov2d
    alpha_max: float = 0.99             # clamp for effective alpha
    alpha_min: float = 1.0 / 255.0      # effective alpha below this is skipped
    cutoff_sigma: float = 3.0           # Mahalanobis cutoff (in sigmas)
    near_plane: float = 0.01            # world units
    min_transmittance: float = 1e-4     # early stop along a ray

    @property
    def cutoff_sq(self) -> float:
        return self.cutoff_sigma ** 2


DEFAULT_RASTER = RasterConfig()


@dataclass(frozen=True)
class Gaussian3D:
    """One splat: center, scale, unit quaternion (w, x, y, z), opacity, color, optional label."""

    center: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray
    opacity: float
    color: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float).reshape(3))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(4))
        object.__setattr__(self, "color", np.asarray(self.color, dtype=float).reshape(3))
        object.__setattr__(self, "opacity", float(self.opacity))
        _validate_parameters(
            self.scale[None, :], self.rotation[None, :], np.array([self.opacity])
        )


@dataclass(frozen=True)
class Camera:
    """Pinhole camera with a rigid 4x4 world-to-camera transform (OpenCV axes)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: np.ndarray

    def __post_init__(self):
        w2c = np.asarray(self.world_to_camera, dtype=float).reshape(4, 4)
        object.__setattr__(self, "world_to_camera", w2c)

        if self.fx <= 0 or self.fy <= 0:
            raise InvalidParameterError(f"Focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise InvalidParameterError(f"Resolution must be positive, got {self.width}x{self.height}")

        rot = w2c[:3, :3]
        if not np.allclose(rot @ rot.T, np.eye(3), rtol=0.0, atol=ORTHONORMAL_TOLERANCE):
            raise InvalidParameterError("world_to_camera rotation block is not orthonormal")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]


@dataclass(frozen=True)
class Projected2D:
    """Screen-space footprint of one Gaussian."""

    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float


@dataclass(frozen=True)
class RayContribution:
    """Compositing weight w_i = T_i * alpha_i of one Gaussian on one ray."""

    gaussian_index: int
    weight: float


class Scene:
    """
    Ordered collection of Gaussians stored as parallel arrays.

    Labels use -1 for "no label".
    """

    def __init__(
        self,
        centers: np.ndarray,
        scales: np.ndarray,
        rotations: np.ndarray,
        opacities: np.ndarray,
        colors: Optional[np.ndarray] = None,
        labels: Optional[np.ndarray] = None,
    ):
        self.centers = np.asarray(centers, dtype=float).reshape(-1, 3)
        n = len(self.centers)
        self.scales = np.asarray(scales, dtype=float).reshape(n, 3)
        self.rotations = np.asarray(rotations, dtype=float).reshape(n, 4)
        self.opacities = np.asarray(opacities, dtype=float).reshape(n)
        if colors is None:
            colors = np.full((n, 3), 0.5)
        self.colors = np.asarray(colors, dtype=float).reshape(n, 3)
        if labels is None:
            labels = np.full(n, -1)
        self.labels = np.asarray(labels, dtype=np.int64).reshape(n)

        _validate_parameters(self.scales, self.rotations, self.opacities)

    @classmethod
    def from_gaussians(cls, gaussians: Iterable[Gaussian3D]) -> "Scene":
        gaussians = list(gaussians)
        if not gaussians:
            return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0))
        return cls(
            centers=np.stack([g.center for g in gaussians]),
            scales=np.stack([g.scale for g in gaussians]),
            rotations=np.stack([g.rotation for g in gaussians]),
            opacities=np.array([g.opacity for g in gaussians]),
            colors=np.stack([g.color for g in gaussians]),
            labels=np.array([-1 if g.label is None else g.label for g in gaussians]),
        )

    def __len__(self) -> int:
        return len(self.centers)

    def __getitem__(self, index: int) -> Gaussian3D:
        label = int(self.labels[index])
        return Gaussian3D(
            center=self.centers[index],
            scale=self.scales[index],
            rotation=self.rotations[index],
            opacity=self.opacities[index],
            color=self.colors[index],
            label=None if label < 0 else label,
        )

    @property
    def has_labels(self) -> bool:
        return len(self) > 0 and bool(np.all(self.labels >= 0))

    def subset(self, indices: Sequence[int]) -> "Scene":
        """Return a new scene holding ``indices`` in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        return Scene(
            self.centers[idx],
            self.scales[idx],
            self.rotations[idx],
            self.opacities[idx],
            self.colors[idx],
            self.labels[idx],
        )

    def with_labels(self, labels: Sequence[int]) -> "Scene":
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (len(self),):
            raise InvalidArgumentError(f"Expected {len(self)} labels, got shape {labels.shape}")
        return Scene(self.centers, self.scales, self.rotations, self.opacities, self.colors, labels)

    def bounds(self, sigmas: float = 3.0) -> Tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box enclosing every Gaussian out to ``sigmas`` of its largest axis."""
        if len(self) == 0:
            raise EmptySceneError("Scene has no Gaussians")
        reach = sigmas * self.scales.max(axis=1, keepdims=True)
        return (self.centers - reach).min(axis=0), (self.centers + reach).max(axis=0)

    def covariances(self) -> np.ndarray:
        """All 3D covariances, shape (N, 3, 3)."""
        return covariances(self.scales, self.rotations)


@dataclass(frozen=True)
class ProjectedScene:
    """Batched projection of a scene into one camera."""

    means2d: np.ndarray     # (N, 2)
    cov2d: np.ndarray       # (N, 2, 2)
    conics: np.ndarray      # (N, 3) inverse cov2d as (a, b, c)
    depths: np.ndarray      # (N,)
    opacities: np.ndarray   # (N,)
    visible: np.ndarray     # (N,) bool
    order: np.ndarray       # visible indices, front-to-back, ties by index

    @property
    def count(self) -> int:
        return len(self.depths)


def _validate_parameters(scales: np.ndarray, rotations: np.ndarray, opacities: np.ndarray) -> None:
    if np.any(~np.isfinite(scales)) or np.any(scales <= 0):
        raise InvalidParameterError("Gaussian scales must be finite and strictly positive")
    norms = np.linalg.norm(rotations, axis=1)
    if np.any(np.abs(norms - 1.0) > QUATERNION_TOLERANCE):
        raise InvalidParameterError("Gaussian rotations must be unit quaternions")
    if np.any(opacities < 0.0) or np.any(opacities > 1.0):
        raise InvalidParameterError("Gaussian opacities must lie in [0, 1]")


def quaternion_to_rotation(quaternions: np.ndarray) -> np.ndarray:
    """
    Convert unit quaternions (w, x, y, z) to rotation matrices.

    Args:
        quaternions: Array of shape (4,) or (N, 4)

    Returns:
        Array of shape (3, 3) or (N, 3, 3)
    """
    q = np.asarray(quaternions, dtype=float)
    single = q.ndim == 1
    q = q.reshape(-1, 4)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]

    rot = np.empty((len(q), 3, 3))
    rot[:, 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    rot[:, 0, 1] = 2.0 * (x * y - w * z)
    rot[:, 0, 2] = 2.0 * (x * z + w * y)
    rot[:, 1, 0] = 2.0 * (x * y + w * z)
    rot[:, 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    rot[:, 1, 2] = 2.0 * (y * z - w * x)
    rot[:, 2, 0] = 2.0 * (x * z - w * y)
    rot[:, 2, 1] = 2.0 * (y * z + w * x)
    rot[:, 2, 2] = 1.0 - 2.0 * (x * x + y * y)

    return rot[0] if single else rot


def covariances(scales: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    """Batched R S S^T R^T, shape (N, 3, 3)."""
    rot = quaternion_to_rotation(np.asarray(rotations, dtype=float).reshape(-1, 4))
    m = rot * np.asarray(scales, dtype=float).reshape(-1, 1, 3)
    return np.einsum("nij,nkj->nik", m, m)


def build_covariance(scale: Sequence[float], rotation: Sequence[float]) -> np.ndarray:
    """
    Build the 3D covariance of a Gaussian from its scale and rotation.

    Args:
        scale: Three positive half-axis lengths
        rotation: Unit quaternion (w, x, y, z)

    Returns:
        Symmetric positive-definite 3x3 matrix R S S^T R^T

    Example:
        >>> build_covariance([2, 1, 1], [1, 0, 0, 0])[0, 0]
        4.0
    """
    scale = np.asarray(scale, dtype=float).reshape(3)
    if np.any(scale <= 0):
        raise InvalidParameterError(f"Scale must be strictly positive, got {scale.tolist()}")
    return covariances(scale[None, :], np.asarray(rotation, dtype=float)[None, :])[0]


def _conics(cov2d: np.ndarray) -> np.ndarray:
    a = cov2d[..., 0, 0]
    b = cov2d[..., 0, 1]
    c = cov2d[..., 1, 1]
    det = a * c - b * b
    if np.any(det <= 0) or np.any(~np.isfinite(det)):
        raise NumericalDegeneracyError("2D covariance is singular or not positive-definite")
    return np.stack([c / det, -b / det, a / det], axis=-1)


def _project_arrays(
    centers: np.ndarray,
    scales: np.ndarray,
    rotations: np.ndarray,
    cam: Camera,
    config: RasterConfig,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    w_rot = cam.rotation
    t = centers @ w_rot.T + cam.translation
    x, y, z = t[:, 0], t[:, 1], t[:, 2]
    visible = z > config.near_plane

    # Culled Gaussians get a dummy depth so the Jacobian stays finite; they are masked out.
    zs = np.where(visible, z, 1.0)
    n = len(t)
    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = cam.fx / zs
    jac[:, 0, 2] = -cam.fx * x / (zs * zs)
    jac[:, 1, 1] = cam.fy / zs
    jac[:, 1, 2] = -cam.fy * y / (zs * zs)

    tw = jac @ w_rot
    cov3d = covariances(scales, rotations)
    cov2d = np.einsum("nij,njk,nlk->nil", tw, cov3d, tw)
    cov2d[:, 0, 0] += config.low_pass
    cov2d[:, 1, 1] += config.low_pass

    means2d = np.stack([cam.fx * x / zs + cam.cx, cam.fy * y / zs + cam.cy], axis=1)
    return means2d, cov2d, z, visible


def project_gaussian(
    g: Gaussian3D, cam: Camera, config: RasterConfig = DEFAULT_RASTER
) -> Optional[Projected2D]:
    """
    Project one Gaussian into ``cam``.

    Returns:
        Projected2D, or None when the center is not in front of the near plane
    """
    means2d, cov2d, depths, visible = _project_arrays(
        g.center[None, :], g.scale[None, :], g.rotation[None, :], cam, config
    )
    if not visible[0]:
        return None
    return Projected2D(mean2d=means2d[0], cov2d=cov2d[0], depth=float(depths[0]))


def project_scene(
    scene: Scene, cam: Camera, config: RasterConfig = DEFAULT_RASTER
) -> ProjectedScene:
    """
    Project every Gaussian of ``scene`` into ``cam`` and fix the traversal order.

    Args:
        scene: Scene to project
        cam: Target camera
        config: Rasterizer constants

    Returns:
        ProjectedScene with front-to-back order over visible Gaussians
    """
    means2d, cov2d, depths, visible = _project_arrays(
        scene.centers, scene.scales, scene.rotations, cam, config
    )
    conics = np.zeros((len(scene), 3))
    if np.any(visible):
        conics[visible] = _conics(cov2d[visible])

    visible_idx = np.flatnonzero(visible)
    # Stable sort on depth keeps ascending index among equal depths.
    order = visible_idx[np.argsort(depths[visible_idx], kind="stable")]

    return ProjectedScene(
        means2d=means2d,
        cov2d=cov2d,
        conics=conics,
        depths=depths,
        opacities=scene.opacities,
        visible=visible,
        order=order,
    )


def _alpha_from_power(power: np.ndarray, opacity: np.ndarray, config: RasterConfig) -> np.ndarray:
    alpha = np.minimum(opacity * np.exp(-0.5 * power), config.alpha_max)
    return np.where((alpha < config.alpha_min) | (power > config.cutoff_sq), 0.0, alpha)


def effective_alpha(
    p: Projected2D,
    opacity: float,
    pixel: Sequence[float],
    config: RasterConfig = DEFAULT_RASTER,
) -> float:
    """
    Opacity of a projected Gaussian at ``pixel`` after its 2D falloff.

    Example:
        >>> p = Projected2D(np.zeros(2), np.eye(2), 1.0)
        >>> round(effective_alpha(p, 0.5, [1.0, 1.0]), 5)
        0.18394
    """
    conic = _conics(np.asarray(p.cov2d, dtype=float))
    d = np.asarray(pixel, dtype=float) - np.asarray(p.mean2d, dtype=float)
    power = conic[0] * d[0] * d[0] + 2.0 * conic[1] * d[0] * d[1] + conic[2] * d[1] * d[1]
    return float(_alpha_from_power(np.asarray(power), np.asarray(opacity, dtype=float), config))


def composite_pixels(
    proj: ProjectedScene,
    pixels: np.ndarray,
    config: RasterConfig = DEFAULT_RASTER,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Front-to-back compositing weights for a batch of pixels.

    Gaussian j on a ray is visited only while the transmittance in front of
    it is still >= ``min_transmittance``, which is the same stopping rule as
    breaking out of a sequential loop once T drops below the floor.

    Args:
        proj: Projected scene
        pixels: Array of shape (P, 2) in pixel coordinates
        config: Rasterizer constants

    Returns:
        Tuple of (weights of shape (P, N) indexed by Gaussian, final transmittance (P,))
    """
    pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
    n_pix = len(pixels)
    weights = np.zeros((n_pix, proj.count))
    order = proj.order
    if n_pix == 0 or order.size == 0:
        return weights, np.ones(n_pix)

    mean = proj.means2d[order]
    conic = proj.conics[order]
    dx = pixels[:, 0:1] - mean[None, :, 0]
    dy = pixels[:, 1:2] - mean[None, :, 1]
    power = conic[:, 0] * dx * dx + 2.0 * conic[:, 1] * dx * dy + conic[:, 2] * dy * dy
    alpha = _alpha_from_power(power, proj.opacities[order], config)

    t_after = np.cumprod(1.0 - alpha, axis=1)
    t_before = np.empty_like(t_after)
    t_before[:, 0] = 1.0
    t_before[:, 1:] = t_after[:, :-1]

    active = t_before >= config.min_transmittance
    weights[:, order] = np.where(active, t_before * alpha, 0.0)

    # active is a prefix of the traversal and always holds the first Gaussian
    n_active = active.sum(axis=1)
    final_t = t_after[np.arange(n_pix), n_active - 1]
    return weights, final_t


def composite_pixel(
    scene: Scene,
    cam: Camera,
    pixel: Sequence[float],
    config: RasterConfig = DEFAULT_RASTER,
    projection: Optional[ProjectedScene] = None,
) -> Tuple[List[RayContribution], float]:
    """
    Composite one pixel ray through ``scene``.

    Args:
        scene: Non-empty scene
        cam: Camera the pixel belongs to
        pixel: Pixel coordinates (x, y)
        config: Rasterizer constants
        projection: Reuse an existing projection of ``scene`` into ``cam``

    Returns:
        Tuple of (contributions in front-to-back order, final transmittance)
    """
    if len(scene) == 0:
        raise EmptySceneError("Cannot composite an empty scene")

    proj = projection if projection is not None else project_scene(scene, cam, config)
    weights, final_t = composite_pixels(proj, np.asarray(pixel, dtype=float)[None, :], config)

    contributions = [
        RayContribution(gaussian_index=int(i), weight=float(weights[0, i]))
        for i in proj.order
        if weights[0, i] > 0
    ]
    return contributions, float(final_t[0])


def topk_select(contribs: Sequence[RayContribution], k: int) -> List[RayContribution]:
    """
    Keep the ``k`` heaviest contributions, heaviest first, ties by ascending index.

    Example:
        >>> c = [RayContribution(0, 0.2), RayContribution(1, 0.2)]
        >>> topk_select(c, 1)[0].gaussian_index
        0
    """
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    ranked = sorted(contribs, key=lambda c: (-c.weight, c.gaussian_index))
    return ranked[:k]


def topk_weights(weights: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Batched Top-k over rows of a (P, N) weight matrix.

    Columns are Gaussian indices, so a stable sort on negated weights breaks
    ties by ascending index exactly like ``topk_select``.

    Returns:
        Tuple of (indices (P, k'), weights (P, k')) with k' = min(k, N)
    """
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    k = min(k, weights.shape[1])
    idx = np.argsort(-weights, axis=1, kind="stable")[:, :k]
    return idx, np.take_along_axis(weights, idx, axis=1)
