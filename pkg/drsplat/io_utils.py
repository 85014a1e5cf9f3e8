"""Binary file formats and JSON inputs.

All binary formats are little-endian, start with a 4-byte magic and a u32
version, and are read with ``struct`` headers plus numpy structured payloads:

    DRSG  scene:            N records of center, scale, quaternion, opacity, color, label
    DRSF  feature sidecar:  N x D f32 (full) or N x L u8 (PQ codes)
    DRMD  mask dataset:     M x D embeddings, then per view camera, id table and mask map
    DRPQ  PQ codebook:      L x K x D/L f32 centroids
    DRPC  point cloud:      Q records of f32 x 3 position and i32 label
"""

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .errors import FormatError, InvalidArgumentError
from .evaluate import LabeledPointCloud
from .gaussians import Camera, Scene
from .pq import PQCodebook
from .query import DEFAULT_LOCALIZATION_THRESHOLD, QuerySpec
from .registration import MaskDataset, MaskView
from .synthetic import CameraRig, SceneSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FORMAT_VERSION = 1

MODE_FULL = 0
MODE_PQ = 1

_SCENE_HEADER = struct.Struct("<4sII")
_FEATURE_HEADER = struct.Struct("<4sIIIB")
_MASK_HEADER = struct.Struct("<4sIIII")
_CAMERA_RECORD = struct.Struct("<4f2I16f")
_CODEBOOK_HEADER = struct.Struct("<4sIIIIQ")
_POINTS_HEADER = struct.Struct("<4sIII")

GAUSSIAN_DTYPE = np.dtype([
    ("center", "<f4", (3,)),
    ("scale", "<f4", (3,)),
    ("rotation", "<f4", (4,)),
    ("opacity", "<f4"),
    ("color", "<f4", (3,)),
    ("label", "<i4"),
])

POINT_DTYPE = np.dtype([
    ("position", "<f4", (3,)),
    ("label", "<i4"),
])


@dataclass
class FeatureFile:
    """Contents of a DRSF sidecar: full f32 features or PQ codes."""

    mode: int
    dim: int
    features: Optional[np.ndarray] = None
    codes: Optional[np.ndarray] = None

    def __len__(self) -> int:
        data = self.features if self.features is not None else self.codes
        return len(data)


class _Reader:
    """Sequential reader over a byte buffer that fails with FormatError on truncation."""

    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.path = path
        self.offset = 0

    def unpack(self, fmt: struct.Struct) -> Tuple:
        if self.offset + fmt.size > len(self.data):
            raise FormatError(f"{self.path}: truncated header or record")
        values = fmt.unpack_from(self.data, self.offset)
        self.offset += fmt.size
        return values

    def array(self, dtype: Union[str, np.dtype], count: int) -> np.ndarray:
        dtype = np.dtype(dtype)
        nbytes = dtype.itemsize * count
        if self.offset + nbytes > len(self.data):
            raise FormatError(
                f"{self.path}: truncated payload (need {nbytes} bytes at offset {self.offset}, "
                f"have {len(self.data) - self.offset})"
            )
        if count == 0:
            return np.zeros(0, dtype=dtype)
        arr = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.offset)
        self.offset += nbytes
        return arr.copy()

    def finish(self) -> None:
        if self.offset != len(self.data):
            raise FormatError(f"{self.path}: {len(self.data) - self.offset} trailing bytes")


def _open(path: PathLike, header: struct.Struct, magic: bytes) -> Tuple[_Reader, Tuple]:
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    values = reader.unpack(header)
    if values[0] != magic:
        raise FormatError(f"{path}: bad magic {values[0]!r}, expected {magic!r}")
    if values[1] != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {values[1]}")
    return reader, values[2:]


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_scene(path: PathLike, scene: Scene) -> None:
    """Write a scene as DRSG."""
    path = _prepare(path)
    records = np.zeros(len(scene), dtype=GAUSSIAN_DTYPE)
    records["center"] = scene.centers
    records["scale"] = scene.scales
    records["rotation"] = scene.rotations
    records["opacity"] = scene.opacities
    records["color"] = scene.colors
    records["label"] = scene.labels

    with open(path, "wb") as f:
        f.write(_SCENE_HEADER.pack(b"DRSG", FORMAT_VERSION, len(scene)))
        f.write(records.tobytes())
    logger.info(f"Wrote scene with {len(scene)} Gaussians: {path}")


def read_scene(path: PathLike) -> Scene:
    """Read a DRSG scene."""
    reader, (count,) = _open(path, _SCENE_HEADER, b"DRSG")
    records = reader.array(GAUSSIAN_DTYPE, count)
    reader.finish()
    logger.debug(f"Read {count} Gaussians from {path}")
    return Scene(
        centers=records["center"].astype(float),
        scales=records["scale"].astype(float),
        rotations=records["rotation"].astype(float),
        opacities=records["opacity"].astype(float),
        colors=records["color"].astype(float),
        labels=records["label"].astype(np.int64),
    )


def write_features(
    path: PathLike,
    features: Optional[np.ndarray] = None,
    codes: Optional[np.ndarray] = None,
    dim: Optional[int] = None,
) -> None:
    """
    Write a DRSF sidecar.

    Args:
        path: Output path
        features: Full-precision (N, D) features, or
        codes: PQ codes (N, L) uint8
        dim: Embedding dimension D, required with ``codes``
    """
    if (features is None) == (codes is None):
        raise InvalidArgumentError("Pass exactly one of features or codes")

    path = _prepare(path)
    if features is not None:
        payload = np.ascontiguousarray(features, dtype="<f4")
        n, d, mode = payload.shape[0], payload.shape[1], MODE_FULL
    else:
        if dim is None:
            raise InvalidArgumentError("dim is required when writing PQ codes")
        payload = np.ascontiguousarray(codes, dtype=np.uint8)
        n, d, mode = payload.shape[0], int(dim), MODE_PQ

    with open(path, "wb") as f:
        f.write(_FEATURE_HEADER.pack(b"DRSF", FORMAT_VERSION, n, d, mode))
        f.write(payload.tobytes())
    logger.info(f"Wrote {'full' if mode == MODE_FULL else 'PQ'} features for {n} Gaussians: {path}")


def read_features(path: PathLike, codebook: Optional[PQCodebook] = None) -> FeatureFile:
    """
    Read a DRSF sidecar.

    The number of sub-vectors of a PQ payload comes from ``codebook`` when given,
    otherwise from the payload size.
    """
    reader, (n, d, mode) = _open(path, _FEATURE_HEADER, b"DRSF")

    if mode == MODE_FULL:
        features = reader.array("<f4", n * d).reshape(n, d).astype(float)
        reader.finish()
        return FeatureFile(mode=mode, dim=d, features=features)

    if mode != MODE_PQ:
        raise FormatError(f"{path}: unknown feature mode {mode}")

    if codebook is not None:
        if codebook.D != d:
            raise FormatError(f"{path}: feature dimension {d} does not match codebook D={codebook.D}")
        sub_vectors = codebook.L
    else:
        remaining = len(reader.data) - reader.offset
        if n == 0 or remaining % n:
            raise FormatError(f"{path}: cannot infer code length from {remaining} bytes")
        sub_vectors = remaining // n

    codes = reader.array(np.uint8, n * sub_vectors).reshape(n, sub_vectors)
    reader.finish()
    return FeatureFile(mode=mode, dim=d, codes=codes)


def write_matrix(path: PathLike, matrix: np.ndarray) -> None:
    """Write an f32 matrix (label embeddings, PQ training data) as a full-mode DRSF."""
    write_features(path, features=np.asarray(matrix))


def read_matrix(path: PathLike) -> np.ndarray:
    """Read an f32 matrix stored as a full-mode DRSF."""
    ff = read_features(path)
    if ff.mode != MODE_FULL:
        raise FormatError(f"{path}: expected a full-precision matrix, found PQ codes")
    return ff.features


def _pack_camera(cam: Camera) -> bytes:
    return _CAMERA_RECORD.pack(
        cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height,
        *cam.world_to_camera.reshape(16).tolist(),
    )


def _unpack_camera(values: Tuple) -> Camera:
    fx, fy, cx, cy, width, height = values[:6]
    return Camera(
        fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height,
        world_to_camera=np.array(values[6:], dtype=float).reshape(4, 4),
    )


def write_mask_dataset(path: PathLike, ds: MaskDataset) -> None:
    """Write a mask dataset as DRMD."""
    path = _prepare(path)
    with open(path, "wb") as f:
        f.write(_MASK_HEADER.pack(b"DRMD", FORMAT_VERSION, len(ds.views), ds.mask_count, ds.dim))
        f.write(np.ascontiguousarray(ds.embeddings, dtype="<f4").tobytes())
        for view in ds.views:
            f.write(_pack_camera(view.camera))
            pairs = sorted(view.mask_table.items())
            f.write(struct.pack("<I", len(pairs)))
            f.write(np.asarray(pairs, dtype="<u4").reshape(-1).tobytes())
            f.write(np.ascontiguousarray(view.mask_map, dtype="<u4").tobytes())
    logger.info(f"Wrote {len(ds.views)} mask views and {ds.mask_count} embeddings: {path}")


def read_mask_dataset(path: PathLike) -> MaskDataset:
    """Read a DRMD mask dataset."""
    reader, (view_count, m, d) = _open(path, _MASK_HEADER, b"DRMD")
    embeddings = reader.array("<f4", m * d).reshape(m, d).astype(float)

    views = []
    for _ in range(view_count):
        camera = _unpack_camera(reader.unpack(_CAMERA_RECORD))
        (pair_count,) = reader.unpack(struct.Struct("<I"))
        pairs = reader.array("<u4", 2 * pair_count).reshape(pair_count, 2)
        mask_map = reader.array("<u4", camera.width * camera.height).reshape(camera.height, camera.width)
        views.append(MaskView(
            camera=camera,
            mask_map=mask_map.astype(np.uint32),
            mask_table={int(local): int(g) for local, g in pairs},
        ))

    reader.finish()
    return MaskDataset(views=views, embeddings=embeddings)


def write_codebook(path: PathLike, cb: PQCodebook) -> None:
    """Write a PQ codebook as DRPQ."""
    path = _prepare(path)
    with open(path, "wb") as f:
        f.write(_CODEBOOK_HEADER.pack(b"DRPQ", FORMAT_VERSION, cb.D, cb.L, cb.K, cb.seed))
        f.write(np.ascontiguousarray(cb.centroids, dtype="<f4").tobytes())
    logger.info(f"Wrote PQ codebook (L={cb.L}, K={cb.K}, D={cb.D}): {path}")


def read_codebook(path: PathLike) -> PQCodebook:
    """Read a DRPQ codebook."""
    reader, (D, L, K, seed) = _open(path, _CODEBOOK_HEADER, b"DRPQ")
    if L == 0 or D % L:
        raise FormatError(f"{path}: D={D} is not divisible by L={L}")
    sub_dim = D // L
    centroids = reader.array("<f4", L * K * sub_dim).reshape(L, K, sub_dim).astype(float)
    reader.finish()
    return PQCodebook(centroids=centroids, seed=int(seed))


def write_point_cloud(path: PathLike, pc: LabeledPointCloud) -> None:
    """Write a labeled point cloud as DRPC."""
    path = _prepare(path)
    records = np.zeros(len(pc), dtype=POINT_DTYPE)
    records["position"] = pc.points
    records["label"] = pc.labels
    with open(path, "wb") as f:
        f.write(_POINTS_HEADER.pack(b"DRPC", FORMAT_VERSION, len(pc), pc.label_count))
        f.write(records.tobytes())
    logger.info(f"Wrote {len(pc)} labeled points: {path}")


def read_point_cloud(path: PathLike) -> LabeledPointCloud:
    """Read a DRPC point cloud."""
    reader, (count, label_count) = _open(path, _POINTS_HEADER, b"DRPC")
    records = reader.array(POINT_DTYPE, count)
    reader.finish()
    return LabeledPointCloud(
        points=records["position"].astype(float),
        labels=records["label"].astype(np.int64),
        label_count=int(label_count),
    )


def load_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from e


def load_scene_spec(path: PathLike) -> SceneSpec:
    return SceneSpec.from_dict(load_json(path))


def load_rig(path: PathLike) -> CameraRig:
    """Load a camera rig; a scene spec file works too, through its ``rig`` key."""
    data = load_json(path)
    return CameraRig.from_dict(data.get("rig", data))


def load_query(path: PathLike) -> QuerySpec:
    """
    Load a query JSON: ``{"embedding": [...], "canonicals": [[...], ...],
    "threshold": 0.562, "label": 0}``; only ``embedding`` is required.
    """
    data = load_json(path)
    if "embedding" not in data:
        raise FormatError(f"{path}: query needs an 'embedding' field")
    return QuerySpec(
        embedding=np.asarray(data["embedding"], dtype=float),
        canonicals=[np.asarray(c, dtype=float) for c in data.get("canonicals", [])],
        threshold=float(data.get("threshold", DEFAULT_LOCALIZATION_THRESHOLD)),
        label=data.get("label"),
    )


def register_output_paths(out: PathLike) -> Dict[str, Path]:
    """Scene, feature sidecar and survivor-map paths written by ``register``."""
    out = Path(out)
    stem = out.with_suffix("") if out.suffix in (".drsg", ".drsf") else out
    return {
        "scene": stem.with_name(stem.name + ".drsg"),
        "features": stem.with_name(stem.name + ".drsf"),
        "survivors": stem.with_name(stem.name + ".survivors.json"),
    }


def list_views(ds: MaskDataset) -> List[Dict[str, Any]]:
    """Per-view summary rows (resolution, masked pixels, mask count) for logging and reports."""
    rows = []
    for v, view in enumerate(ds.views):
        rows.append({
            "view": v,
            "width": view.camera.width,
            "height": view.camera.height,
            "masked_pixels": int(np.count_nonzero(view.mask_map)),
            "masks": len(view.mask_table),
        })
    return rows
