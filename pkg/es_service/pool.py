import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class EvalPool:
    """
    Thread pool for independent objective evaluations.

    map() always returns results in input order, so reductions over them are
    identical at any thread count.
    """
    _instance = None

    def __init__(self, threads=None):
        # Load from environment if not provided
        self.threads = int(threads or os.getenv("THREADS", os.cpu_count() or 1))
        if self.threads < 1:
            raise ValueError(f"THREADS must be >= 1, got {self.threads}")
        self._executor = None

    @classmethod
    def get_instance(cls, threads=None):
        """
        Shared pool for the whole process.
        The thread count can be overridden on the first call only.
        """
        if cls._instance is None:
            cls._instance = cls(threads)
            logger.info(f"Evaluation pool using {cls._instance.threads} thread(s)")
        return cls._instance

    @classmethod
    def reset(cls):
        if cls._instance is not None:
            cls._instance.shutdown()
        cls._instance = None

    def map(self, fn: Callable[[T], R], items: Sequence[T]) -> List[R]:
        if self.threads == 1 or len(items) < 2:
            return [fn(item) for item in items]
        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=self.threads, thread_name_prefix="eval")
        return list(self._executor.map(fn, items))

    def shutdown(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
