"""
Data-parallel helpers for independent runs and post-processing
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from config.settings import COHEVO_THREADS

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def worker_count(n_tasks: int, cap: Optional[int] = None) -> int:
    """
    Number of workers for ``n_tasks`` independent tasks

    Args:
        n_tasks: Number of tasks
        cap: Worker cap (defaults to COHEVO_THREADS; 0 means one per CPU)

    Returns:
        int: Between 1 and n_tasks
    """
    cap = COHEVO_THREADS if cap is None else cap
    if cap <= 0:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_tasks))


def parallel_map(func: Callable[[T], R], items: Iterable[T], cap: Optional[int] = None) -> List[R]:
    """
    Apply ``func`` to every item, results in input order

    The first exception raised by a task propagates to the caller.
    """
    items = list(items)
    if not items:
        return []
    workers = worker_count(len(items), cap)
    if workers == 1:
        return [func(item) for item in items]
    logger.debug("mapping %d tasks over %d threads", len(items), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
