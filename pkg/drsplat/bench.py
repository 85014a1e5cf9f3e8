"""Timing of full-precision cosine scoring against ADC over PQ codes."""

import logging
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List

import numpy as np

from .errors import InvalidArgumentError
from .pq import MAX_CENTROIDS, PQCodebook, adc_scores, build_query_lut, code_norms, decode_batch

logger = logging.getLogger(__name__)

MIN_REPETITIONS = 10
MIN_MEANINGFUL_N = 10_000
_DECODE_CHUNK = 16_384
_AGREEMENT_SAMPLE = 10_000


@dataclass
class BenchReport:
    """Wall-time statistics of one scoring operation over N items."""

    operation: str
    n: int
    d: int
    l: int
    repetitions: int
    median_s: float
    p95_s: float
    throughput: float       # items scored per second at the median time

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def percentile(values: List[float], p: float) -> float:
    """Nearest-rank percentile of ``values`` (p in [0, 1])."""
    ordered = sorted(values)
    rank = max(1, min(len(ordered), int(round(p * len(ordered)))))
    return ordered[rank - 1]


def time_operation(fn: Callable[[], Any], repetitions: int) -> List[float]:
    """Run ``fn`` once to warm up, then time ``repetitions`` calls with perf_counter."""
    fn()
    times = []
    for _ in range(repetitions):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return times


def _report(operation: str, times: List[float], n: int, d: int, l: int) -> BenchReport:
    median = statistics.median(times)
    return BenchReport(
        operation=operation,
        n=n,
        d=d,
        l=l,
        repetitions=len(times),
        median_s=median,
        p95_s=percentile(times, 0.95),
        throughput=n / median if median > 0 else float("inf"),
    )


def _unit_decoded(codes: np.ndarray, cb: PQCodebook) -> np.ndarray:
    """Decoded, unit-normalized float32 vectors, built in chunks."""
    full = np.empty((len(codes), cb.D), dtype=np.float32)
    for start in range(0, len(codes), _DECODE_CHUNK):
        block = decode_batch(codes[start:start + _DECODE_CHUNK], cb)
        full[start:start + len(block)] = block / np.linalg.norm(block, axis=1, keepdims=True)
    return full


def bench_lut(
    n: int,
    d: int,
    l: int,
    repetitions: int = MIN_REPETITIONS,
    seed: int = 0,
    centroids: int = MAX_CENTROIDS,
) -> Dict[str, Any]:
    """
    Time N full-precision cosines against N ADC scores for one query.

    Codes and codebook are random; the full-precision vectors are the decoded
    codes, so both paths score the same vectors and must agree on the best match.
    Each timed ADC call builds the query table and scores every code; the
    per-code norms are computed once beforehand, as a registered scene stores them.

    Args:
        n: Number of stored vectors
        d: Embedding dimension
        l: PQ sub-vectors (must divide d)
        repetitions: Timed repetitions per operation (>= 10)
        seed: Seed for the codebook, codes and query
        centroids: Centroids per sub-space

    Returns:
        Dictionary with ``full`` and ``adc`` reports, ``speedup`` and ``top1_agree``
    """
    if repetitions < MIN_REPETITIONS:
        raise InvalidArgumentError(f"Need at least {MIN_REPETITIONS} repetitions, got {repetitions}")
    if n < 1 or d < 1 or l < 1 or d % l:
        raise InvalidArgumentError(f"Invalid sizes n={n}, d={d}, l={l} (l must divide d)")
    if n < MIN_MEANINGFUL_N:
        logger.warning(f"n={n} is below {MIN_MEANINGFUL_N}; timings will be noisy")

    rng = np.random.default_rng(seed)
    cb = PQCodebook(
        centroids=rng.standard_normal((l, centroids, d // l)).astype(np.float32).astype(float),
        seed=seed,
    )
    codes = rng.integers(0, centroids, (n, l), dtype=np.uint8)
    query = rng.standard_normal(d)
    query /= np.linalg.norm(query)

    logger.info(f"Preparing {n} x {d} full-precision vectors")
    full = _unit_decoded(codes, cb)
    query32 = query.astype(np.float32)
    # Code norms belong to the stored codes, not the query
    norms = code_norms(codes, cb)

    def score_full():
        return full @ query32

    def score_adc():
        return adc_scores(codes, build_query_lut(query, cb), norms=norms)

    full_report = _report("full_cosine", time_operation(score_full, repetitions), n, d, l)
    adc_report = _report("adc", time_operation(score_adc, repetitions), n, d, l)

    # Decoded vectors scored exactly must pick the same best match as ADC
    sample = codes[:_AGREEMENT_SAMPLE]
    decoded = decode_batch(sample, cb)
    exact = (decoded @ query) / np.linalg.norm(decoded, axis=1)
    adc_exact = adc_scores(sample, build_query_lut(query, cb), normalization="exact")
    top1_agree = int(np.argmax(exact)) == int(np.argmax(adc_exact))

    speedup = full_report.median_s / adc_report.median_s
    logger.info(
        f"bench-lut n={n} d={d} l={l}: full median {full_report.median_s * 1e3:.2f} ms, "
        f"ADC median {adc_report.median_s * 1e3:.2f} ms, speedup {speedup:.2f}x"
    )
    return {
        "full": full_report.to_dict(),
        "adc": adc_report.to_dict(),
        "speedup": speedup,
        "top1_agree": top1_agree,
    }
