"""
Parallel map service with deterministic per-item seeding
"""
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np

from levilab.config import settings
from levilab.utils.logging import logger

T = TypeVar("T")
R = TypeVar("R")

# Thread count used when a caller does not pass one; the CLI sets it from --threads
_default_threads: Optional[int] = None


def set_default_threads(threads: Optional[int]):
    """Set the process-wide default thread count (None = settings / available cores)"""
    global _default_threads
    _default_threads = threads


def resolve_threads(threads: Optional[int] = None) -> int:
    if threads is None:
        threads = _default_threads if _default_threads is not None else settings.THREADS
    if threads is None:
        threads = os.cpu_count() or 1
    return max(1, int(threads))


def derive_seeds(seed: int, count: int) -> List[int]:
    """
    Independent per-item seeds derived from one base seed.

    Args:
        seed (int): Base seed
        count (int): Number of items

    Returns:
        list[int]: One 32-bit seed per item, identical for every thread count
    """
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]


def parallel_map(
    fn: Callable[[T, int], R],
    items: Sequence[T],
    seed: int = None,
    threads: Optional[int] = None,
) -> List[R]:
    """
    Apply fn(item, item_seed) to every item, preserving order.

    Results do not depend on the thread count: each item receives a seed
    derived from (seed, position) only.

    Args:
        fn (callable): Worker taking (item, seed)
        items (Sequence): Work items
        seed (int, optional): Base seed. Defaults to settings.DEFAULT_SEED.
        threads (int, optional): Worker threads. Defaults to the configured value.

    Returns:
        list: Results in item order
    """
    seed = settings.DEFAULT_SEED if seed is None else seed
    items = list(items)
    seeds = derive_seeds(seed, len(items))
    workers = min(resolve_threads(threads), max(1, len(items)))
    logger.debug("Starting parallel map", items=len(items), threads=workers)
    if workers == 1:
        return [fn(item, s) for item, s in zip(items, seeds)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, seeds))
