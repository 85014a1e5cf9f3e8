"""Tests for scoring, relevancy, thresholding and segmentation."""

import math

import numpy as np
import pytest

from drsplat.errors import InvalidArgumentError
from drsplat.pq import PQCodebook, decode_batch, encode_batch
from drsplat.query import (
    QuerySpec,
    best_threshold,
    label_counts,
    relevancy_score,
    relevancy_scores,
    score_scene,
    segment_argmax,
    select_threshold,
    threshold_sweep,
    top_matches,
)
from drsplat.registration import RegisteredScene, register_scene
from drsplat.synthetic import CameraRig, SceneSpec, gen_scene, pipeline_codebook, render_masks


def _registered(make_scene, features):
    features = np.asarray(features, dtype=float)
    scene = make_scene([[0, 0, z + 1] for z in range(len(features))])
    return RegisteredScene(scene=scene, kept_indices=np.arange(len(features)), features=features)


class TestScoreScene:
    """Tests for per-Gaussian similarity."""

    def test_identical_and_orthogonal(self, make_scene):
        """Full features score 1 against themselves and 0 when orthogonal."""
        rs = _registered(make_scene, [[1, 0, 0], [0, 1, 0]])
        np.testing.assert_allclose(score_scene(rs, None, np.array([1.0, 0.0, 0.0])), [1.0, 0.0])

    def test_pq_matches_decode_oracle(self, make_scene):
        """PQ scores equal decode-then-score with sum-of-norms normalization."""
        rng = np.random.default_rng(1)
        cb = PQCodebook(centroids=rng.standard_normal((4, 16, 2)))
        codes = rng.integers(0, 16, (20, 4)).astype(np.uint8)
        scene = make_scene([[0, 0, 1 + i] for i in range(20)])
        rs = RegisteredScene(scene=scene, kept_indices=np.arange(20), codes=codes)

        q = rng.standard_normal(8)
        q /= np.linalg.norm(q)
        decoded = decode_batch(codes, cb)
        oracle = decoded @ q / np.linalg.norm(decoded.reshape(20, 4, 2), axis=2).sum(axis=1)
        np.testing.assert_allclose(score_scene(rs, cb, q), oracle, atol=1e-6)

    def test_pq_needs_codebook(self, make_scene):
        """Scoring codes without a codebook is an error."""
        scene = make_scene([[0, 0, 1]])
        rs = RegisteredScene(scene=scene, kept_indices=np.arange(1), codes=np.zeros((1, 4), dtype=np.uint8))
        with pytest.raises(InvalidArgumentError):
            score_scene(rs, None, np.ones(8) / math.sqrt(8))

    def test_dimension_mismatch(self, make_scene):
        """Query and features must share a dimension."""
        rs = _registered(make_scene, [[1, 0, 0]])
        with pytest.raises(InvalidArgumentError):
            score_scene(rs, None, np.array([1.0, 0.0]))


class TestRelevancy:
    """Tests for canonical re-ranking."""

    def test_symmetric(self):
        """Equal query and canonical dots give 0.5."""
        assert float(relevancy_score(0.3, [0.3, 0.3])) == pytest.approx(0.5)

    def test_single_canonical(self):
        """f.q = 1 against one canonical at 0 gives e / (e + 1)."""
        assert float(relevancy_score(1.0, [0.0])) == pytest.approx(math.e / (math.e + 1), abs=1e-12)
        assert round(float(relevancy_score(1.0, [0.0])), 4) == 0.7311

    def test_minimum_over_canonicals(self):
        """Two canonicals take the smaller pairwise softmax."""
        expected = math.e / (math.e + math.exp(0.9))
        assert float(relevancy_score(1.0, [0.0, 0.9])) == pytest.approx(expected, abs=1e-12)
        assert round(expected, 4) == 0.5250

    def test_vectorized(self):
        """Per-Gaussian dots are scored column-wise."""
        scores = relevancy_score(np.array([1.0, 0.0]), np.array([[0.0, 0.0], [0.9, 1.0]]))
        assert scores.shape == (2,)
        assert scores[0] == pytest.approx(math.e / (math.e + math.exp(0.9)))
        assert scores[1] == pytest.approx(1.0 / (1.0 + math.e))

    def test_in_open_interval(self):
        """Relevancy stays strictly inside (0, 1)."""
        rng = np.random.default_rng(2)
        scores = relevancy_score(rng.uniform(-1, 1, 100), rng.uniform(-1, 1, (4, 100)))
        assert np.all((scores > 0) & (scores < 1))

    def test_needs_canonicals(self, make_scene):
        """Relevancy mode without canonicals is rejected."""
        rs = _registered(make_scene, [[1, 0, 0]])
        with pytest.raises(InvalidArgumentError):
            relevancy_scores(rs, None, np.array([1.0, 0.0, 0.0]), [])

    def test_scene_relevancy(self, make_scene):
        """Scene relevancy combines query and canonical cosines."""
        rs = _registered(make_scene, [[1, 0, 0], [0, 1, 0]])
        scores = relevancy_scores(rs, None, np.array([1.0, 0.0, 0.0]), [np.array([0.0, 1.0, 0.0])])
        np.testing.assert_allclose(scores, [math.e / (math.e + 1), 1 / (1 + math.e)])


class TestQuerySpec:
    """Tests for query validation."""

    def test_non_unit(self):
        """Query embeddings must be unit-norm."""
        with pytest.raises(InvalidArgumentError):
            QuerySpec(embedding=np.array([1.0, 1.0]))


class TestSelection:
    """Tests for thresholding and ranking."""

    def test_everything(self):
        """A threshold below every cosine selects all."""
        assert select_threshold(np.array([0.2, -0.9, 0.5]), -2.0).tolist() == [0, 1, 2]

    def test_nothing(self):
        """A threshold above every cosine selects none."""
        assert select_threshold(np.array([0.2, 0.7, 0.5]), 1.1).tolist() == []

    def test_inclusive(self):
        """The boundary score is selected."""
        assert select_threshold(np.array([0.2, 0.7, 0.5]), 0.5).tolist() == [1, 2]

    def test_monotone(self):
        """A higher threshold never selects more."""
        scores = np.random.default_rng(3).uniform(-1, 1, 200)
        sizes = [len(select_threshold(scores, t)) for t in np.linspace(-1, 1, 21)]
        assert sizes == sorted(sizes, reverse=True)

    def test_top_matches_ties(self):
        """Top matches break ties by index."""
        assert top_matches(np.array([0.5, 0.9, 0.9, 0.1]), 2).tolist() == [1, 2]


class TestSegmentArgmax:
    """Tests for label assignment by highest score."""

    def test_single_label(self, make_scene):
        """One label query labels everything 0."""
        rs = _registered(make_scene, [[1, 0, 0], [0, 1, 0], [0, 0, 1]])
        assert segment_argmax(rs, None, [np.array([1.0, 0.0, 0.0])]).tolist() == [0, 0, 0]

    def test_recovers_labels(self, make_scene):
        """Features equal to label queries get their own label."""
        queries = [np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])]
        rs = _registered(make_scene, [queries[2], queries[0], queries[1]])
        assert segment_argmax(rs, None, queries).tolist() == [2, 0, 1]

    def test_tie_goes_to_lowest_label(self, make_scene):
        """A feature equidistant from two queries takes the lower label."""
        f = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
        rs = _registered(make_scene, [f])
        queries = [np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0])]
        assert segment_argmax(rs, None, queries).tolist() == [0]

    def test_invariant_to_monotone_transform(self, make_scene):
        """Argmax labels match the argmax of any increasing transform of the scores."""
        rng = np.random.default_rng(4)
        features = rng.standard_normal((30, 6))
        features /= np.linalg.norm(features, axis=1, keepdims=True)
        queries = [q / np.linalg.norm(q) for q in rng.standard_normal((4, 6))]
        rs = _registered(make_scene, features)
        scores = np.stack([score_scene(rs, None, q) for q in queries])
        labels = segment_argmax(rs, None, queries)
        assert np.array_equal(labels, np.argmax(np.exp(3.0 * scores) + 2.0, axis=0))

    def test_needs_a_query(self, make_scene):
        """Segmentation needs at least one label query."""
        with pytest.raises(InvalidArgumentError):
            segment_argmax(_registered(make_scene, [[1, 0, 0]]), None, [])

    def test_pq_agrees_with_full(self):
        """With 128 sub-vectors PQ-coded segmentation agrees with full precision."""
        spec = SceneSpec(
            seed=3,
            gaussian_count=60,
            label_count=3,
            dim=512,
            rig=CameraRig(views=4, width=48, height=48, focal=50.0),
        )
        scene, embeddings, _ = gen_scene(spec)
        masks = render_masks(scene, embeddings, spec.rig, spec.sigma, seed=spec.seed)
        full = register_scene(scene, masks, k=10)
        cb = pipeline_codebook(spec, embeddings, subvectors=128)
        assert cb.L == 128
        coded = RegisteredScene(
            scene=full.scene,
            kept_indices=full.kept_indices,
            codes=encode_batch(full.features, cb),
        )
        a = segment_argmax(full, None, list(embeddings))
        b = segment_argmax(coded, cb, list(embeddings))
        assert np.mean(a == b) >= 0.95

    def test_code_norms_reused(self, make_scene, random_codebook):
        """A PQ-coded scene computes its code norms once per codebook."""
        rng = np.random.default_rng(5)
        codes = rng.integers(0, random_codebook.K, (6, random_codebook.L)).astype(np.uint8)
        scene = make_scene([[0, 0, z + 1] for z in range(6)])
        rs = RegisteredScene(scene=scene, kept_indices=np.arange(6), codes=codes)

        first = rs.code_norms(random_codebook)
        assert rs.code_norms(random_codebook) is first
        doubled = PQCodebook(centroids=random_codebook.centroids * 2.0)
        np.testing.assert_allclose(rs.code_norms(doubled), 2.0 * first)

    def test_label_counts(self):
        """Counts cover every label, including empty ones."""
        assert label_counts(np.array([0, 2, 2]), 4) == {0: 1, 1: 0, 2: 2, 3: 0}


class TestThresholdSweep:
    """Tests for the score-vs-IoU threshold sweep."""

    def test_rows(self):
        """Each row reports weighted and count IoU for its selection."""
        scores = np.array([0.9, 0.6, 0.3])
        gt = np.array([True, True, False])
        d = np.array([1.0, 3.0, 4.0])
        rows = threshold_sweep(scores, gt, d, [0.0, 0.5, 0.8, 1.0])

        assert [r["selected"] for r in rows] == [3, 2, 1, 0]
        assert rows[0]["weighted_iou"] == pytest.approx(4 / 8)
        assert rows[1]["weighted_iou"] == pytest.approx(1.0)
        assert rows[2]["weighted_iou"] == pytest.approx(1 / 4)
        assert rows[2]["count_iou"] == pytest.approx(1 / 2)
        assert rows[3]["weighted_iou"] == 0.0

    def test_best_threshold(self):
        """The best row has the highest weighted IoU, lowest threshold on ties."""
        rows = [
            {"threshold": 0.2, "weighted_iou": 0.5},
            {"threshold": 0.4, "weighted_iou": 0.8},
            {"threshold": 0.6, "weighted_iou": 0.8},
            {"threshold": 0.8, "weighted_iou": None},
        ]
        assert best_threshold(rows)["threshold"] == 0.4

    def test_best_threshold_undefined(self):
        """No defined IoU gives no best row."""
        assert best_threshold([{"threshold": 0.5, "weighted_iou": None}]) is None
