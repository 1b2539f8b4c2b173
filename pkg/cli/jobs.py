"""Independent jobs run inline or on a process pool, results kept in submission order."""

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

from settings import get_logger

logger = get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def run_jobs(fn: Callable[[T], R], tasks: Sequence[T], jobs: int = 1) -> list[R | Exception]:
    """
    Apply `fn` to every task.

    A task that raises yields its exception in place of a result, so the
    output always has one entry per task. `fn` must be a module-level function
    when jobs > 1.
    """
    results: list[R | Exception] = []
    if jobs <= 1 or len(tasks) <= 1:
        for task in tasks:
            try:
                results.append(fn(task))
            except Exception as e:
                logger.debug(f"Job failed: {e!r}")
                results.append(e)
        return results

    logger.info(f"Running {len(tasks)} job(s) on {jobs} worker(s)")
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, task) for task in tasks]
        for future in futures:
            try:
                results.append(future.result())
            except Exception as e:
                logger.debug(f"Job failed: {e!r}")
                results.append(e)
    return results
