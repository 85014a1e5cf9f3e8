"""Text-query style inference over a registered scene.

A query is a unit embedding. Gaussians are scored by cosine similarity (ADC
over PQ codes, or exact over full features), optionally re-ranked against
canonical embeddings, then selected by threshold or segmented by argmax.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import InvalidArgumentError
from .evaluate import binary_weighted_iou
from .pq import PQCodebook, adc_scores, build_query_lut
from .registration import RegisteredScene

logger = logging.getLogger(__name__)

UNIT_NORM_TOLERANCE = 1e-5
DEFAULT_LOCALIZATION_THRESHOLD = 0.562

# One float score per Gaussian, in scene order.
ScoreVector = np.ndarray


@dataclass
class QuerySpec:
    """Query embedding, canonical embeddings for re-ranking and a selection threshold."""

    embedding: np.ndarray
    canonicals: List[np.ndarray] = field(default_factory=list)
    threshold: float = DEFAULT_LOCALIZATION_THRESHOLD
    label: Optional[int] = None

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=float)
        if abs(np.linalg.norm(self.embedding) - 1.0) > UNIT_NORM_TOLERANCE:
            raise InvalidArgumentError("Query embedding must be unit-norm")
        self.canonicals = [np.asarray(c, dtype=float) for c in self.canonicals]


def score_scene(
    rs: RegisteredScene,
    cb: Optional[PQCodebook],
    q: np.ndarray,
    normalization: str = "paper",
) -> ScoreVector:
    """
    Cosine-style similarity of ``q`` to every registered Gaussian.

    PQ-coded scenes are scored with one lookup table and ADC; full-precision
    scenes get the exact cosine.

    Args:
        rs: Registered scene
        cb: Codebook (required for PQ-coded scenes)
        q: Unit query of shape (D,)
        normalization: ADC normalization, ``paper`` or ``exact``

    Returns:
        Scores aligned with the registered scene order
    """
    q = np.asarray(q, dtype=float)

    if rs.codes is not None:
        if cb is None:
            raise InvalidArgumentError("PQ-coded scene needs a codebook to score")
        if q.shape != (cb.D,):
            raise InvalidArgumentError(f"Query dimension {q.shape} does not match codebook D={cb.D}")
        lut = build_query_lut(q, cb)
        return adc_scores(rs.codes, lut, normalization, norms=rs.code_norms(cb, normalization))

    features = rs.features
    if q.shape != (features.shape[1],):
        raise InvalidArgumentError(
            f"Query dimension {q.shape} does not match feature dimension {features.shape[1]}"
        )
    norms = np.linalg.norm(features, axis=1) * np.linalg.norm(q)
    return (features @ q) / norms


def relevancy_score(dot_query: np.ndarray, dot_canonicals: np.ndarray) -> np.ndarray:
    """
    Minimum over canonicals of exp(f.q) / (exp(f.q) + exp(f.c_i)).

    Args:
        dot_query: f.q, scalar or shape (N,)
        dot_canonicals: f.c_i, shape (C,) or (C, N)

    Returns:
        Relevancy in (0, 1), same shape as ``dot_query``

    Example:
        >>> round(float(relevancy_score(1.0, [0.0])), 4)
        0.7311
    """
    dot_query = np.asarray(dot_query, dtype=float)
    dot_canonicals = np.asarray(dot_canonicals, dtype=float)
    if dot_canonicals.shape[0] == 0:
        raise InvalidArgumentError("Relevancy needs at least one canonical embedding")
    # exp(a) / (exp(a) + exp(b)) == sigmoid(a - b)
    return expit(dot_query - dot_canonicals).min(axis=0)


def relevancy_scores(
    rs: RegisteredScene,
    cb: Optional[PQCodebook],
    q: np.ndarray,
    canonicals: Sequence[np.ndarray],
    normalization: str = "paper",
) -> ScoreVector:
    """Relevancy of every Gaussian, using the same similarity path as ``score_scene``."""
    if len(canonicals) == 0:
        raise InvalidArgumentError("Relevancy mode needs canonical embeddings")
    dot_q = score_scene(rs, cb, q, normalization)
    dot_c = np.stack([score_scene(rs, cb, c, normalization) for c in canonicals])
    return relevancy_score(dot_q, dot_c)


def select_threshold(scores: ScoreVector, tau: float) -> np.ndarray:
    """Ascending indices with score >= tau."""
    return np.flatnonzero(np.asarray(scores) >= tau)


def top_matches(scores: ScoreVector, n: int) -> np.ndarray:
    """Indices of the ``n`` highest scores, ties by ascending index."""
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    return order[:n]


def segment_argmax(
    rs: RegisteredScene,
    cb: Optional[PQCodebook],
    label_queries: Sequence[np.ndarray],
    normalization: str = "paper",
) -> np.ndarray:
    """
    Label each Gaussian with the query of highest score (ties to the lowest label).

    Args:
        rs: Registered scene
        cb: Codebook for PQ-coded scenes
        label_queries: One unit embedding per label

    Returns:
        Integer labels aligned with the registered scene
    """
    if len(label_queries) == 0:
        raise InvalidArgumentError("Segmentation needs at least one label query")
    scores = np.stack([score_scene(rs, cb, q, normalization) for q in label_queries])
    return scores.argmax(axis=0)


def label_counts(labels: np.ndarray, label_count: int) -> Dict[int, int]:
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=label_count)
    return {int(i): int(c) for i, c in enumerate(counts)}


def threshold_sweep(
    scores: np.ndarray,
    gt_mask: np.ndarray,
    significance: np.ndarray,
    thresholds: Sequence[float],
) -> List[Dict[str, Optional[float]]]:
    """
    Score-vs-IoU curve for picking a selection threshold.

    Args:
        scores: Per-Gaussian scores
        gt_mask: Boolean ground-truth selection
        significance: Per-Gaussian significant scores
        thresholds: Thresholds to evaluate

    Returns:
        One row per threshold with weighted IoU, count IoU and selection size
    """
    scores = np.asarray(scores, dtype=float)
    gt_mask = np.asarray(gt_mask, dtype=bool)
    ones = np.ones_like(scores)

    rows = []
    for tau in thresholds:
        selected = scores >= tau
        rows.append({
            "threshold": float(tau),
            "weighted_iou": binary_weighted_iou(selected, gt_mask, significance),
            "count_iou": binary_weighted_iou(selected, gt_mask, ones),
            "selected": int(selected.sum()),
        })
    return rows


def best_threshold(rows: List[Dict[str, Optional[float]]]) -> Optional[Dict[str, Optional[float]]]:
    """Row with the highest weighted IoU; the lowest threshold wins ties."""
    defined = [r for r in rows if r["weighted_iou"] is not None]
    if not defined:
        return None
    return max(defined, key=lambda r: (r["weighted_iou"], -r["threshold"]))
