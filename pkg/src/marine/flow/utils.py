import asyncio
import functools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Awaitable, Callable, Iterable, List, Optional, TypeVar

import numpy as np

_LOGGER = logging.getLogger(__name__)
_T = TypeVar("_T")
_R = TypeVar("_R")


def _log_exception(msg, *args):
    """Log an error and turn on traceback if debug is on."""
    _LOGGER.error(msg, *args, exc_info=_LOGGER.getEffectiveLevel() == logging.DEBUG)


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def to_local(vectors: np.ndarray, heading: float) -> np.ndarray:
    """Rotate global-frame vectors (..., 2) into a frame with the given heading."""
    return np.asarray(vectors, dtype=np.float64) @ rotation(heading)


def to_global(vectors: np.ndarray, heading: float) -> np.ndarray:
    return np.asarray(vectors, dtype=np.float64) @ rotation(heading).T


def clamp(value: float, low: float, high: float) -> float:
    return min(max(value, low), high)


def normalized(vector: np.ndarray) -> np.ndarray:
    norm = float(np.hypot(vector[0], vector[1]))
    if norm == 0.0:
        return np.zeros(2)
    return np.asarray(vector, dtype=np.float64) / norm


class WorkerPool:
    """Run blocking callables on worker threads, bounded by a semaphore."""

    def __init__(self, workers: int) -> None:
        if workers < 1:
            raise ValueError("Worker count must be positive, got {}".format(workers))
        self._workers = workers
        self._executor: Optional[ThreadPoolExecutor] = None
        self._semaphore: Optional[asyncio.Semaphore] = None

    @property
    def workers(self) -> int:
        return self._workers

    async def __aenter__(self) -> "WorkerPool":
        self._executor = ThreadPoolExecutor(max_workers=self._workers)
        self._semaphore = asyncio.Semaphore(self._workers)
        return self

    async def __aexit__(self, exc_type, exc_val, exc_tb):
        if self._executor:
            self._executor.shutdown(wait=True)
            self._executor = None
        self._semaphore = None

    async def run(self, func: Callable[..., _R], *args, **kwargs) -> _R:
        if not self._executor or not self._semaphore:
            raise RuntimeError("Worker pool not started")
        loop = asyncio.get_running_loop()
        async with self._semaphore:
            return await loop.run_in_executor(
                self._executor, functools.partial(func, *args, **kwargs)
            )

    async def map(self, func: Callable[[_T], _R], items: Iterable[_T]) -> List[_R]:
        """Results come back in input order regardless of completion order."""
        tasks: List[Awaitable[_R]] = [self.run(func, item) for item in items]
        return list(await asyncio.gather(*tasks))
