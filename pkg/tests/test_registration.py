"""Tests for feature registration by inverse rendering."""

import logging

import numpy as np
import pytest
from scipy import sparse

from drsplat.errors import EmptySceneError, InvalidArgumentError
from drsplat.pq import train_codebook
from drsplat.registration import (
    AggregatedFeatures,
    MaskDataset,
    MaskView,
    WeightMatrix,
    accumulate_weights,
    aggregate_features,
    pixel_embedding,
    prune_unassigned,
    register_scene,
)
from drsplat.synthetic import render_masks

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])


@pytest.fixture
def centered_camera(make_camera):
    """8x8 camera whose principal point is the center of pixel (3, 3)."""
    return make_camera(width=8, height=8, focal=100.0, cx=3.5, cy=3.5)


def _single_pixel_view(camera, mask_id=1, global_index=0, pixel=(3, 3)):
    mask_map = np.zeros((camera.height, camera.width), dtype=np.uint32)
    mask_map[pixel[1], pixel[0]] = mask_id
    return MaskView(camera=camera, mask_map=mask_map, mask_table={mask_id: global_index})


def _weights(dense):
    return WeightMatrix(matrix=sparse.csr_matrix(np.asarray(dense, dtype=float)))


class TestMaskDataset:
    """Tests for mask dataset validation."""

    def test_unresolved_mask_id(self, centered_camera):
        """Every nonzero id in a mask map must resolve through the view's table."""
        mask_map = np.zeros((8, 8), dtype=np.uint32)
        mask_map[0, 0] = 5
        with pytest.raises(InvalidArgumentError):
            MaskDataset(views=[MaskView(centered_camera, mask_map, {})], embeddings=[E1])

    def test_non_unit_embedding(self, centered_camera):
        """Embeddings must be unit-norm."""
        with pytest.raises(InvalidArgumentError):
            MaskDataset(views=[_single_pixel_view(centered_camera)], embeddings=[[2.0, 0.0, 0.0]])

    def test_mask_map_shape(self, centered_camera):
        """Mask maps must match the camera resolution."""
        with pytest.raises(InvalidArgumentError):
            MaskView(centered_camera, np.zeros((4, 4), dtype=np.uint32), {})


class TestPixelEmbedding:
    """Tests for per-pixel embedding lookup."""

    def test_masked_pixel(self, centered_camera):
        """A pixel inside a mask returns that mask's embedding."""
        view = _single_pixel_view(centered_camera, mask_id=3, global_index=1)
        ds = MaskDataset(views=[view], embeddings=[E1, E2])
        np.testing.assert_array_equal(pixel_embedding(ds, 0, (3, 3)), E2)

    def test_unmasked_pixel(self, centered_camera):
        """A pixel with id 0 has no embedding."""
        ds = MaskDataset(views=[_single_pixel_view(centered_camera)], embeddings=[E1])
        assert pixel_embedding(ds, 0, (0, 0)) is None

    def test_constant_map(self, centered_camera):
        """Every pixel of a one-mask image gives the same embedding."""
        view = MaskView(centered_camera, np.ones((8, 8), dtype=np.uint32), {1: 0})
        ds = MaskDataset(views=[view], embeddings=[E3])
        for x in range(8):
            for y in range(8):
                np.testing.assert_array_equal(pixel_embedding(ds, 0, (x, y)), E3)

    def test_out_of_bounds(self, centered_camera):
        """Pixels outside the resolution are rejected."""
        ds = MaskDataset(views=[_single_pixel_view(centered_camera)], embeddings=[E1])
        with pytest.raises(InvalidArgumentError):
            pixel_embedding(ds, 0, (8, 0))
        with pytest.raises(InvalidArgumentError):
            pixel_embedding(ds, 1, (0, 0))


class TestAccumulateWeights:
    """Tests for Top-k weight accumulation."""

    def test_single_gaussian_single_pixel(self, make_scene, centered_camera):
        """One Gaussian centered on the only masked pixel accumulates its alpha."""
        scene = make_scene([[0, 0, 1]], opacities=0.7)
        ds = MaskDataset(views=[_single_pixel_view(centered_camera)], embeddings=[E1])
        w = accumulate_weights(scene, ds, k=1)
        assert w.shape == (1, 1)
        assert w.entry(0, 0) == pytest.approx(0.7)

    def test_top1_keeps_front(self, make_scene, centered_camera):
        """With k=1 only the heavier front Gaussian receives weight."""
        scene = make_scene([[0, 0, 1], [0, 0, 2]], opacities=[0.8, 0.5])
        ds = MaskDataset(views=[_single_pixel_view(centered_camera)], embeddings=[E1])
        w = accumulate_weights(scene, ds, k=1)
        assert w.entry(0, 0) == pytest.approx(0.8)
        assert w.entry(1, 0) == 0.0

        w2 = accumulate_weights(scene, ds, k=2)
        assert w2.entry(1, 0) == pytest.approx(0.2 * 0.5)

    def test_two_views_sum(self, make_scene, centered_camera):
        """Two views of the same Gaussian and mask add their weights."""
        scene = make_scene([[0, 0, 1]], opacities=0.7)
        views = [_single_pixel_view(centered_camera, 1, 0), _single_pixel_view(centered_camera, 1, 0)]
        ds = MaskDataset(views=views, embeddings=[E1])
        assert accumulate_weights(scene, ds, k=1).entry(0, 0) == pytest.approx(1.4)

    def test_invalid_k(self, make_scene, centered_camera):
        """k must be at least one."""
        scene = make_scene([[0, 0, 1]])
        ds = MaskDataset(views=[_single_pixel_view(centered_camera)], embeddings=[E1])
        with pytest.raises(InvalidArgumentError):
            accumulate_weights(scene, ds, k=0)

    def test_nonnegative(self, synthetic, mask_dataset):
        """Every accumulated weight is finite and non-negative."""
        scene, _, _ = synthetic
        w = accumulate_weights(scene, mask_dataset, k=5)
        assert np.all(w.matrix.data >= 0)
        assert np.all(np.isfinite(w.matrix.data))

    def test_thread_count_does_not_matter(self, synthetic, mask_dataset):
        """Multi-threaded accumulation equals the single-threaded result."""
        scene, _, _ = synthetic
        single = accumulate_weights(scene, mask_dataset, k=5, threads=1).matrix.toarray()
        multi = accumulate_weights(scene, mask_dataset, k=5, threads=4).matrix.toarray()
        np.testing.assert_allclose(multi, single, atol=1e-5)

    def test_single_thread_deterministic(self, synthetic, mask_dataset):
        """Two single-threaded runs are bitwise identical."""
        scene, _, _ = synthetic
        a = accumulate_weights(scene, mask_dataset, k=5, threads=1).matrix.toarray()
        b = accumulate_weights(scene, mask_dataset, k=5, threads=1).matrix.toarray()
        assert np.array_equal(a, b)

    def test_view_order_independent(self, synthetic, mask_dataset):
        """Reversing the views changes entries by at most rounding."""
        scene, _, _ = synthetic
        reversed_ds = MaskDataset(views=mask_dataset.views[::-1], embeddings=mask_dataset.embeddings)
        a = accumulate_weights(scene, mask_dataset, k=5).matrix.toarray()
        b = accumulate_weights(scene, reversed_ds, k=5).matrix.toarray()
        np.testing.assert_allclose(a, b, atol=1e-5)


class TestAggregateFeatures:
    """Tests for weighted feature aggregation."""

    def test_single_mask(self):
        """One mask with weight one gives back its embedding."""
        agg = aggregate_features(_weights([[1.0, 0.0]]), np.stack([E1, E2]))
        np.testing.assert_allclose(agg.features[0], E1)
        assert agg.assigned.tolist() == [True]

    def test_orthogonal_equal_weights(self):
        """Equal weights on orthogonal embeddings give (e1 + e2) / sqrt(2)."""
        agg = aggregate_features(_weights([[0.5, 0.5]]), np.stack([E1, E2]))
        np.testing.assert_allclose(agg.features[0], (E1 + E2) / np.sqrt(2.0))

    def test_three_to_one(self):
        """Weights (3, 1) give normalize(0.75 a + 0.25 b)."""
        a = np.array([0.6, 0.8, 0.0])
        b = np.array([0.0, 0.6, 0.8])
        agg = aggregate_features(_weights([[3.0, 1.0]]), np.stack([a, b]))
        mean = 0.75 * a + 0.25 * b
        np.testing.assert_allclose(agg.features[0], mean / np.linalg.norm(mean))

    def test_uncovered_unassigned(self):
        """Rows without weight are left unassigned and zero."""
        agg = aggregate_features(_weights([[1.0, 0.0], [0.0, 0.0]]), np.stack([E1, E2]))
        assert agg.assigned.tolist() == [True, False]
        np.testing.assert_array_equal(agg.features[1], 0.0)

    def test_exact_cancellation(self, caplog):
        """Opposite embeddings with equal weight cancel and are left unassigned with a warning."""
        with caplog.at_level(logging.WARNING):
            agg = aggregate_features(_weights([[1.0, 1.0]]), np.stack([E1, -E1]))
        assert agg.assigned.tolist() == [False]
        assert "zero vector" in caplog.text

    def test_convex_combination(self):
        """Aggregated features are closer to every contributor than contributors are to each other."""
        rng = np.random.default_rng(2)
        emb = rng.standard_normal((4, 16))
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
        emb[:, 0] = np.abs(emb[:, 0]) + 1.0
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
        dense = rng.uniform(0.0, 1.0, (10, 4))
        agg = aggregate_features(_weights(dense), emb)
        min_pairwise = (emb @ emb.T).min()
        cosines = agg.features @ emb.T
        assert np.all(cosines >= min_pairwise - 1e-12)
        np.testing.assert_allclose(np.linalg.norm(agg.features, axis=1), 1.0)


class TestPruneUnassigned:
    """Tests for pruning Gaussians without features."""

    def test_all_covered(self, make_scene):
        """Full coverage keeps every Gaussian with an identity survivor map."""
        scene = make_scene([[0, 0, 1], [0, 0, 2]])
        agg = AggregatedFeatures(features=np.stack([E1, E2]), assigned=np.array([True, True]))
        rs = prune_unassigned(scene, agg)
        assert rs.survivor_map == {0: 0, 1: 1}

    def test_mixed(self, make_scene):
        """Two uncovered Gaussians out of five are dropped in order."""
        scene = make_scene([[0, 0, z] for z in range(1, 6)])
        assigned = np.array([True, False, True, False, True])
        features = np.zeros((5, 3))
        features[assigned] = E1
        rs = prune_unassigned(scene, AggregatedFeatures(features=features, assigned=assigned))
        assert len(rs) == 3
        assert rs.kept_indices.tolist() == [0, 2, 4]
        assert rs.survivor_map == {0: 0, 2: 1, 4: 2}
        np.testing.assert_array_equal(rs.scene.centers[:, 2], [1, 3, 5])

    def test_everything_pruned(self, make_scene):
        """Pruning every Gaussian raises."""
        scene = make_scene([[0, 0, 1]])
        agg = AggregatedFeatures(features=np.zeros((1, 3)), assigned=np.array([False]))
        with pytest.raises(EmptySceneError):
            prune_unassigned(scene, agg)


class TestRegisterScene:
    """Tests for the full registration flow."""

    def test_identical_embeddings_registered_exactly(self, synthetic, small_spec):
        """Noise-free masks of one label register that label's embedding."""
        scene, embeddings, _ = synthetic
        one_label = scene.with_labels(np.zeros(len(scene), dtype=np.int64))
        ds = render_masks(one_label, embeddings[:1], small_spec.rig, sigma=0.0)
        rs = register_scene(one_label, ds, k=10)
        np.testing.assert_allclose(rs.features, np.broadcast_to(embeddings[0], rs.features.shape), atol=1e-6)

    def test_coverage_monotone_in_k(self, synthetic, mask_dataset):
        """Raising k never loses survivors."""
        scene, _, _ = synthetic
        counts = [len(register_scene(scene, mask_dataset, k=k)) for k in (1, 3, 10, 20)]
        assert counts == sorted(counts)

    def test_unit_features(self, synthetic, mask_dataset):
        """Stored full-precision features are unit-norm."""
        scene, _, _ = synthetic
        rs = register_scene(scene, mask_dataset, k=10)
        assert rs.mode == "full"
        np.testing.assert_allclose(np.linalg.norm(rs.features, axis=1), 1.0, atol=1e-5)
        assert rs.compression_bytes() == len(rs) * mask_dataset.dim * 4

    def test_pq_mode(self, synthetic, mask_dataset):
        """Registering with a codebook stores L-byte codes."""
        scene, embeddings, _ = synthetic
        rng = np.random.default_rng(0)
        db = embeddings[rng.integers(0, len(embeddings), 300)] + 0.05 * rng.standard_normal((300, embeddings.shape[1]))
        cb = train_codebook(db, L=8, K=16)
        rs = register_scene(scene, mask_dataset, k=10, codebook=cb)
        assert rs.mode == "pq"
        assert rs.codes.shape == (len(rs), 8)
        assert rs.compression_bytes() == len(rs) * 8
        assert rs.feature_vectors(cb).shape == (len(rs), embeddings.shape[1])
