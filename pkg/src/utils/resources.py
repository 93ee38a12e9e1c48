"""
Host resource queries
Sizes the forecast worker pool and reports memory use for diagnostics
"""
import logging

import psutil

logger = logging.getLogger(__name__)


def default_workers() -> int:
    """Number of physical cores, falling back to logical cores"""
    count = psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True) or 1
    return max(1, int(count))


def resolve_workers(n_jobs: int) -> int:
    """
    Translate a configured worker count

    Args:
        n_jobs: 0 for one worker per physical core, otherwise the worker count

    Returns:
        Positive number of workers
    """
    if n_jobs < 0:
        raise ValueError(f"n_jobs must be >= 0, got {n_jobs}")
    return default_workers() if n_jobs == 0 else n_jobs


def memory_usage_mb() -> float:
    """Resident set size of this process in MiB"""
    try:
        return psutil.Process().memory_info().rss / 2 ** 20
    except (psutil.NoSuchProcess, psutil.AccessDenied) as e:
        logger.debug("memory query failed: %s", e)
        return float("nan")
