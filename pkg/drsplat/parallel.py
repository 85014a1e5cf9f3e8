"""Thread-count resolution and order-preserving parallel map."""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

logger = logging.getLogger(__name__)

THREADS_ENV = "DRSPLAT_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def _env_threads() -> Optional[int]:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning(f"Ignoring non-integer {THREADS_ENV}={raw!r}")
        return None


def resolve_threads(threads: Optional[int] = None) -> int:
    """
    Decide how many worker threads to use.

    ``DRSPLAT_THREADS`` caps parallelism: an explicit count is clamped to it,
    and without one it is the count. Without either, work runs on the
    calling thread.

    Args:
        threads: Explicit thread count, or None

    Returns:
        Thread count >= 1
    """
    cap = _env_threads()
    if threads is None:
        return cap or 1
    requested = max(1, int(threads))
    return min(requested, cap) if cap else requested


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """
    Apply ``fn`` to every item and return results in input order.

    Results are merged in input order whatever the thread count, so callers
    that reduce them sequentially get the same answer single- or multi-threaded.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
