"""Pytest configuration and fixtures."""

import numpy as np
import pytest

from drsplat.gaussians import Camera, Scene
from drsplat.pq import PQCodebook
from drsplat.synthetic import CameraRig, SceneSpec, gen_scene, render_masks


@pytest.fixture
def tmp_output_dir(tmp_path):
    """Create a temporary output directory."""
    output_dir = tmp_path / "output"
    output_dir.mkdir()
    return output_dir


@pytest.fixture
def make_camera():
    """Factory for pinhole cameras; identity pose unless a transform is given."""

    def _make(width=8, height=8, focal=100.0, cx=None, cy=None, world_to_camera=None):
        return Camera(
            fx=focal,
            fy=focal,
            cx=width / 2.0 if cx is None else cx,
            cy=height / 2.0 if cy is None else cy,
            width=width,
            height=height,
            world_to_camera=np.eye(4) if world_to_camera is None else world_to_camera,
        )

    return _make


@pytest.fixture
def make_scene():
    """Factory for axis-aligned scenes from centers and optional per-Gaussian values."""

    def _make(centers, scales=0.1, opacities=0.5, labels=None):
        centers = np.asarray(centers, dtype=float).reshape(-1, 3)
        n = len(centers)
        scales = np.asarray(scales, dtype=float)
        if scales.ndim < 2:
            scales = np.broadcast_to(scales, (n, 3)).copy()
        opacities = np.broadcast_to(np.asarray(opacities, dtype=float), (n,)).copy()
        rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
        return Scene(centers, scales, rotations, opacities, labels=labels)

    return _make


@pytest.fixture(scope="module")
def small_spec():
    """Small synthetic scene that renders quickly."""
    return SceneSpec(
        seed=3,
        gaussian_count=60,
        label_count=3,
        dim=32,
        rig=CameraRig(views=4, width=48, height=48, focal=50.0),
    )


@pytest.fixture(scope="module")
def synthetic(small_spec):
    """(scene, label embeddings, point cloud) of ``small_spec``."""
    return gen_scene(small_spec)


@pytest.fixture(scope="module")
def mask_dataset(small_spec, synthetic):
    """Masks rendered from ``synthetic`` with the spec's noise level."""
    scene, embeddings, _ = synthetic
    return render_masks(scene, embeddings, small_spec.rig, small_spec.sigma, seed=small_spec.seed)


@pytest.fixture
def random_codebook():
    """Random codebook with L=4, K=16 and three dimensions per sub-space."""
    rng = np.random.default_rng(7)
    return PQCodebook(centroids=rng.standard_normal((4, 16, 3)), seed=7)
