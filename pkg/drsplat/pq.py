"""Product quantization of embeddings.

A D-dim vector is split into L sub-vectors of D/L dims; each sub-vector is
replaced by the index of its nearest centroid in a per-sub-space codebook of
K <= 256 centroids, so a code costs L bytes. Queries are scored against codes
with a per-query lookup table of partial inner products (asymmetric distance
computation), so scoring never decodes a vector.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from numba import njit
from scipy import sparse
from scipy.cluster.vq import vq
from tqdm import tqdm

from .errors import (
    CorruptCodeError,
    DegenerateCodeError,
    InsufficientDataError,
    InvalidArgumentError,
    InvalidParameterError,
)
from .parallel import ordered_map, resolve_threads

logger = logging.getLogger(__name__)

MAX_CENTROIDS = 256
NORMALIZATIONS = ("paper", "exact")

# A PQ code is a uint8 array of L centroid indices.
PQCode = np.ndarray


@dataclass(frozen=True)
class KMeansConfig:
    """Lloyd iteration limits for codebook training."""

    max_iter: int = 25
    tol: float = 1e-4               # relative inertia change that counts as converged


@dataclass
class PQCodebook:
    """L sub-space codebooks of K centroids each, shape (L, K, D/L)."""

    centroids: np.ndarray
    seed: int = 0
    iterations: int = KMeansConfig.max_iter

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=float)
        if self.centroids.ndim != 3:
            raise InvalidParameterError("Centroids must have shape (L, K, D/L)")
        if self.K > MAX_CENTROIDS:
            raise InvalidParameterError(f"K={self.K} exceeds {MAX_CENTROIDS} (8-bit codes)")
        if not np.all(np.isfinite(self.centroids)):
            raise InvalidParameterError("Centroids must be finite")

    @property
    def L(self) -> int:
        return self.centroids.shape[0]

    @property
    def K(self) -> int:
        return self.centroids.shape[1]

    @property
    def sub_dim(self) -> int:
        return self.centroids.shape[2]

    @property
    def D(self) -> int:
        return self.L * self.sub_dim

    @cached_property
    def sq_norm_table(self) -> np.ndarray:
        """||c_lj||^2 per centroid, shape (L, K)."""
        return np.einsum("lkd,lkd->lk", self.centroids, self.centroids)

    @cached_property
    def norm_table(self) -> np.ndarray:
        """||c_lj|| per centroid, shape (L, K)."""
        return np.sqrt(self.sq_norm_table)


@dataclass(frozen=True)
class QueryLUT:
    """
    Per-query table of partial inner products q_l . c_lj, float32 of shape (L, K).

    The norm tables are the codebook's own; they do not depend on the query.
    """

    table: np.ndarray
    norm_table: np.ndarray
    sq_norm_table: np.ndarray


def _squared_distances(x: np.ndarray, c: np.ndarray, chunk_elems: int = 4_000_000) -> np.ndarray:
    """Exact squared Euclidean distances (n, k), computed from differences in row chunks."""
    n, d = x.shape
    k = len(c)
    out = np.empty((n, k))
    step = max(1, chunk_elems // max(1, k * d))
    for start in range(0, n, step):
        diff = x[start:start + step, None, :] - c[None, :, :]
        out[start:start + step] = np.einsum("nkd,nkd->nk", diff, diff)
    return out


def kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """
    k-means++ seeding: first center uniform, the rest sampled proportional to D^2.

    Args:
        x: Points of shape (n, d)
        k: Number of centers
        rng: Random generator

    Returns:
        Initial centers of shape (k, d)
    """
    n = len(x)
    chosen = [int(rng.integers(n))]
    closest = np.sum((x - x[chosen[0]]) ** 2, axis=1)

    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            cumulative = np.cumsum(closest)
            idx = int(np.searchsorted(cumulative, rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        chosen.append(idx)
        closest = np.minimum(closest, np.sum((x - x[idx]) ** 2, axis=1))

    return x[chosen].copy()


def _assign(x: np.ndarray, centroids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    dist = _squared_distances(x, centroids)
    labels = dist.argmin(axis=1)
    return labels, dist[np.arange(len(x)), labels]


def kmeans(
    x: np.ndarray,
    k: int,
    rng: np.random.Generator,
    config: KMeansConfig = KMeansConfig(),
) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Lloyd's k-means from k-means++ seeds with farthest-point reseeding of empty clusters.

    Args:
        x: Points of shape (n, d)
        k: Number of clusters
        rng: Random generator used for seeding
        config: Iteration limits

    Returns:
        Tuple of (centroids (k, d), labels (n,), inertia)
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    centroids = kmeans_plusplus(x, k, rng)
    labels, point_d = _assign(x, centroids)
    inertia = float(point_d.sum())

    for _ in range(config.max_iter):
        if inertia == 0.0:
            break

        onehot = sparse.csr_matrix((np.ones(n), (labels, np.arange(n))), shape=(k, n))
        counts = np.bincount(labels, minlength=k)
        sums = onehot @ x

        updated = centroids.copy()
        filled = counts > 0
        updated[filled] = sums[filled] / counts[filled, None]

        empty = np.flatnonzero(~filled)
        if empty.size:
            farthest = np.argsort(-point_d, kind="stable")[: empty.size]
            updated[empty] = x[farthest]
            logger.debug(f"Reseeded {empty.size} empty clusters from farthest points")

        centroids = updated
        labels, point_d = _assign(x, centroids)
        new_inertia = float(point_d.sum())
        change = abs(inertia - new_inertia) / inertia
        inertia = new_inertia
        if change < config.tol:
            break

    return centroids, labels, inertia


def train_codebook(
    database: np.ndarray,
    L: int,
    K: int = MAX_CENTROIDS,
    seed: int = 0,
    config: KMeansConfig = KMeansConfig(),
    threads: Optional[int] = None,
    show_progress: bool = False,
) -> PQCodebook:
    """
    Train one k-means codebook per sub-space.

    Each sub-space draws from its own generator seeded by (seed, l), so the
    result is identical for any thread count.

    Args:
        database: Training vectors of shape (n, D)
        L: Number of sub-vectors (must divide D)
        K: Centroids per sub-space (<= 256)
        seed: Seed for k-means++ initialization
        config: Lloyd iteration limits
        threads: Worker threads
        show_progress: Show a tqdm bar over sub-spaces

    Returns:
        Trained PQCodebook
    """
    database = np.asarray(database, dtype=float)
    n, dim = database.shape
    if K < 1 or K > MAX_CENTROIDS:
        raise InvalidParameterError(f"K must be in [1, {MAX_CENTROIDS}], got {K}")
    if L < 1 or dim % L != 0:
        raise InvalidArgumentError(f"D={dim} is not divisible by L={L}")
    if n < K:
        raise InsufficientDataError(f"Need at least K={K} training vectors, got {n}")

    sub_dim = dim // L
    progress = tqdm(total=L, desc="Training PQ sub-spaces", disable=not show_progress)

    def train_subspace(l: int) -> np.ndarray:
        rng = np.random.default_rng([seed, l])
        sub = database[:, l * sub_dim:(l + 1) * sub_dim]
        centroids, _, inertia = kmeans(sub, K, rng, config)
        logger.debug(f"Sub-space {l}: inertia {inertia:.6g}")
        progress.update(1)
        return centroids

    parts = ordered_map(train_subspace, range(L), resolve_threads(threads))
    progress.close()

    # Round through float32 so the in-memory codebook equals its on-disk form.
    centroids = np.stack(parts).astype(np.float32).astype(float)
    logger.info(f"Trained PQ codebook: D={dim}, L={L}, K={K}, seed={seed}")
    return PQCodebook(centroids=centroids, seed=seed, iterations=config.max_iter)


def _check_dim(vectors: np.ndarray, cb: PQCodebook) -> None:
    if vectors.shape[-1] != cb.D:
        raise InvalidArgumentError(f"Expected dimension {cb.D}, got {vectors.shape[-1]}")


def _check_codes(codes: np.ndarray, cb: PQCodebook) -> None:
    if codes.shape[-1] != cb.L:
        raise InvalidArgumentError(f"Expected {cb.L} indices per code, got {codes.shape[-1]}")
    if codes.size and int(codes.max()) >= cb.K:
        raise CorruptCodeError(f"Code index {int(codes.max())} >= K={cb.K}")


def encode_batch(
    vectors: np.ndarray, cb: PQCodebook, threads: Optional[int] = None
) -> np.ndarray:
    """
    Encode vectors of shape (n, D) into uint8 codes of shape (n, L).

    Ties between equidistant centroids go to the lowest index.
    """
    vectors = np.asarray(vectors, dtype=float)
    _check_dim(vectors, cb)
    ds = cb.sub_dim

    def nearest(l: int) -> np.ndarray:
        sub = vectors[:, l * ds:(l + 1) * ds]
        return vq(np.ascontiguousarray(sub), cb.centroids[l], check_finite=False)[0]

    columns = ordered_map(nearest, range(cb.L), resolve_threads(threads))
    codes = np.empty((len(vectors), cb.L), dtype=np.uint8)
    for l, col in enumerate(columns):
        codes[:, l] = col
    return codes


def encode(v: np.ndarray, cb: PQCodebook) -> PQCode:
    """
    Encode one D-vector as L centroid indices.

    Raises:
        InvalidArgumentError: on dimension mismatch
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise InvalidArgumentError("encode expects a single vector")
    return encode_batch(v[None, :], cb, threads=1)[0]


def decode_batch(codes: np.ndarray, cb: PQCodebook) -> np.ndarray:
    """Concatenate the selected centroids for each code; returns shape (n, D)."""
    codes = np.asarray(codes)
    _check_codes(codes, cb)
    gathered = cb.centroids[np.arange(cb.L)[None, :], codes.astype(np.int64)]
    return gathered.reshape(len(codes), cb.D)


def decode(code: PQCode, cb: PQCodebook) -> np.ndarray:
    """
    Reconstruct the quantized vector of one code.

    Raises:
        CorruptCodeError: if an index is >= K
    """
    return decode_batch(np.asarray(code)[None, :], cb)[0]


def build_query_lut(q: np.ndarray, cb: PQCodebook) -> QueryLUT:
    """
    Lookup tables of one query against every centroid.

    Args:
        q: Query vector of shape (D,)
        cb: Codebook

    Returns:
        QueryLUT with table[l, j] = q_l . c_lj
    """
    q = np.asarray(q, dtype=float)
    _check_dim(q, cb)
    q_sub = q.reshape(cb.L, cb.sub_dim)
    table = np.einsum("lkd,ld->lk", cb.centroids, q_sub).astype(np.float32)
    return QueryLUT(table=table, norm_table=cb.norm_table, sq_norm_table=cb.sq_norm_table)


@njit(cache=True)
def _lut_sum(codes, table, out):
    n, n_sub = codes.shape
    for i in range(n):
        acc = 0.0
        for l in range(n_sub):
            acc += table[l, codes[i, l]]
        out[i] = acc


def _check_lut_codes(codes: np.ndarray, table: np.ndarray) -> np.ndarray:
    codes = np.ascontiguousarray(codes, dtype=np.uint8)
    if codes.ndim != 2 or codes.shape[1] != table.shape[0]:
        raise InvalidArgumentError(f"Codes must have shape (n, {table.shape[0]})")
    # uint8 indices cannot reach K=256
    if table.shape[1] < MAX_CENTROIDS and codes.size and int(codes.max()) >= table.shape[1]:
        raise CorruptCodeError(f"Code index {int(codes.max())} >= K={table.shape[1]}")
    return codes


def _summed_norms(
    codes: np.ndarray, norm_table: np.ndarray, sq_norm_table: np.ndarray, normalization: str
) -> np.ndarray:
    if normalization not in NORMALIZATIONS:
        raise InvalidArgumentError(f"Unknown normalization {normalization!r}")
    table = norm_table if normalization == "paper" else sq_norm_table
    codes = _check_lut_codes(codes, table)
    norms = np.empty(len(codes))
    _lut_sum(codes, np.ascontiguousarray(table), norms)
    if normalization == "exact":
        norms = np.sqrt(norms)
    if np.any(norms == 0):
        raise DegenerateCodeError("A code decodes to a zero-norm vector")
    return norms


def code_norms(codes: np.ndarray, cb: PQCodebook, normalization: str = "paper") -> np.ndarray:
    """
    Per-code normalizers of ADC scores; they do not depend on the query.

    ``paper`` gives the sum of sub-vector norms; ``exact`` the true norm of
    the decoded vector. Compute once per code set and pass to ``adc_scores``.

    Raises:
        DegenerateCodeError: if a code decodes to all-zero centroids
    """
    return _summed_norms(codes, cb.norm_table, cb.sq_norm_table, normalization)


def adc_raw(codes: np.ndarray, lut: QueryLUT) -> np.ndarray:
    """Summed per-query LUT entries per code: approximate inner products q . decode(code)."""
    codes = _check_lut_codes(codes, lut.table)
    raw = np.empty(len(codes))
    _lut_sum(codes, np.ascontiguousarray(lut.table), raw)
    return raw


def adc_scores(
    codes: np.ndarray,
    lut: QueryLUT,
    normalization: str = "paper",
    norms: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Approximate cosine of the query against every code.

    Args:
        codes: uint8 codes of shape (n, L)
        lut: Query lookup table
        normalization: ``paper`` or ``exact``
        norms: Precomputed ``code_norms`` for the same codes and normalization

    Raises:
        DegenerateCodeError: if a code decodes to all-zero centroids
    """
    if normalization not in NORMALIZATIONS:
        raise InvalidArgumentError(f"Unknown normalization {normalization!r}")
    if norms is None:
        norms = _summed_norms(codes, lut.norm_table, lut.sq_norm_table, normalization)
    elif len(norms) != len(codes):
        raise InvalidArgumentError(f"Got {len(norms)} norms for {len(codes)} codes")
    return adc_raw(codes, lut) / norms


def adc_score(code: PQCode, lut: QueryLUT, normalization: str = "paper") -> float:
    """Score of one code; same arithmetic as ``adc_scores``."""
    return float(adc_scores(np.asarray(code)[None, :], lut, normalization)[0])


def build_pairwise_lut(cb: PQCodebook) -> np.ndarray:
    """Symmetric per-sub-space distances ||c_li - c_lj||^2, shape (L, K, K)."""
    return np.stack([_squared_distances(c, c) for c in cb.centroids])


def sdc_distance(code_a: PQCode, code_b: PQCode, pairwise: np.ndarray) -> float:
    """Code-vs-code squared distance as a sum of pairwise table entries."""
    a = np.asarray(code_a, dtype=np.int64)
    b = np.asarray(code_b, dtype=np.int64)
    return float(pairwise[np.arange(len(a)), a, b].sum())


def compression_ratio(D: int, L: int, K: int = MAX_CENTROIDS) -> float:
    """
    Stored bits of an L-index code over the bits of a float32 D-vector.

    Example:
        >>> compression_ratio(512, 128)
        0.0625
    """
    bits_per_index = max(1, math.ceil(math.log2(K)))
    return (L * bits_per_index) / (32 * D)


def quantization_error(data: np.ndarray, cb: PQCodebook) -> float:
    """Mean squared reconstruction error of ``data`` under ``cb``."""
    data = np.asarray(data, dtype=float)
    recon = decode_batch(encode_batch(data, cb), cb)
    return float(np.mean(np.sum((data - recon) ** 2, axis=1)))
