"""Replica fan-out over worker processes."""

from __future__ import annotations

import logging
import os
from collections.abc import Callable, Iterable
from multiprocessing import Pool
from typing import TypeVar

from sphere_waves.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def default_jobs() -> int:
    return max(1, os.cpu_count() or 1)


def fan_out(fn: Callable[[T], R], items: Iterable[T], jobs: int | None = None) -> list[R]:
    """Map fn over items, in order, with up to `jobs` worker processes.

    fn and items must be picklable when jobs > 1. jobs=1 runs inline, which keeps tracebacks and
    warnings in the calling process.
    """
    tasks = list(items)
    workers = default_jobs() if jobs is None else jobs
    if workers < 1:
        raise InvalidArgumentError(f"jobs must be >= 1, got {workers}")
    workers = min(workers, len(tasks)) if tasks else 1
    if workers == 1:
        return [fn(task) for task in tasks]
    logger.debug("dispatching %d tasks to %d workers", len(tasks), workers)
    with Pool(processes=workers) as pool:
        return pool.map(fn, tasks)
