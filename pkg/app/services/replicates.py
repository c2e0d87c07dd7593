"""
Replicate batching over a process pool.

Replicates are cut into fixed batches that depend only on the replicate
count, so every batch sees the same keyed streams however many workers run
them; results come back in batch order.
"""

from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Callable, Optional, TypeVar

from app.config import settings
from app.logging_config import configure_worker_logging, get_logger

logger = get_logger(__name__)

T = TypeVar("T")

DEFAULT_BATCH = 256


def batch_bounds(total: int, batch_size: int = DEFAULT_BATCH) -> list[tuple[int, int]]:
    return [(start, min(start + batch_size, total)) for start in range(0, total, batch_size)]


def _call(task: Callable[..., T], bounds: tuple[int, int]) -> T:
    return task(*bounds)


def run_batches(
    task: Callable[[int, int], T],
    total: int,
    workers: Optional[int] = None,
    batch_size: int = DEFAULT_BATCH,
) -> list[T]:
    """
    Run task(start, stop) over consecutive replicate ranges.

    Args:
        task: Picklable callable (module-level function or functools.partial)
        total: Number of replicates
        workers: Process count (None -> settings.WORKERS, 1 -> in-process)
        batch_size: Replicates per batch

    Returns:
        Per-batch results in replicate order
    """
    workers = settings.WORKERS if workers is None else max(1, int(workers))
    bounds = batch_bounds(total, batch_size)
    if workers == 1 or len(bounds) <= 1:
        return [task(start, stop) for start, stop in bounds]
    logger.debug(f"Running {len(bounds)} batches on {workers} workers")
    with ProcessPoolExecutor(max_workers=workers, initializer=configure_worker_logging) as pool:
        return list(pool.map(partial(_call, task), bounds))
