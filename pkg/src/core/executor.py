"""
Study executor running independent refinement levels.

Levels run sequentially by default so that reports are bit-reproducible;
with parallel=True they are dispatched to worker threads.
"""
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, Hashable, List, Optional, Sequence, Tuple

from .errors import CapfemError

# Set up logging for executor operations
logger = logging.getLogger(__name__)


class LevelStatus(Enum):
    """Level status enumeration."""
    PENDING = "pending"
    RUNNING = "running"
    SUCCESS = "success"
    ERROR = "error"


@dataclass
class LevelOutcome:
    key: Hashable
    status: LevelStatus
    value: Any = None
    error: Optional[str] = None
    elapsed: float = 0.0


class StudyExecutor:
    """Executes study levels, optionally in worker threads."""

    def __init__(
        self,
        jobs: Sequence[Tuple[Hashable, Callable[[], Any]]],
        parallel: bool = False,
        progress_callback: Optional[Callable[[LevelOutcome], None]] = None,
    ):
        """
        Initialize study executor.

        Args:
            jobs: (key, callable) pairs; each callable runs one level
            parallel: dispatch levels to a thread pool, one worker per level
            progress_callback: called with each finished LevelOutcome
        """
        self.jobs = list(jobs)
        self.parallel = parallel
        self.progress_callback = progress_callback

        self.outcomes: Dict[Hashable, LevelOutcome] = {
            key: LevelOutcome(key, LevelStatus.PENDING) for key, _ in self.jobs
        }
        self.start_time = None
        self.end_time = None
        self._lock = threading.Lock()

    def run(self) -> List[LevelOutcome]:
        """Run every level and block until all have finished."""
        self.start_time = time.time()
        self.end_time = None
        if self.parallel and len(self.jobs) > 1:
            with ThreadPoolExecutor(max_workers=len(self.jobs)) as pool:
                list(pool.map(lambda job: self._run_level(*job), self.jobs))
        else:
            for key, job in self.jobs:
                self._run_level(key, job)
        self.end_time = time.time()
        return [self.outcomes[key] for key, _ in self.jobs]

    def get_elapsed_time(self):
        """
        Get elapsed time in seconds.

        Returns:
            float: Elapsed time or None if not started
        """
        if self.start_time is None:
            return None
        if self.end_time is not None:
            return self.end_time - self.start_time
        return time.time() - self.start_time

    def _finish(self, outcome: LevelOutcome):
        with self._lock:
            self.outcomes[outcome.key] = outcome
        if self.progress_callback:
            self.progress_callback(outcome)

    def _run_level(self, key, job):
        with self._lock:
            self.outcomes[key] = LevelOutcome(key, LevelStatus.RUNNING)
        started = time.time()
        try:
            value = job()
            outcome = LevelOutcome(key, LevelStatus.SUCCESS, value=value)
        except CapfemError as e:
            logger.error(f"Level {key} failed: {e}")
            outcome = LevelOutcome(key, LevelStatus.ERROR, error=str(e))
        except (ValueError, ArithmeticError) as e:
            logger.error(f"Level {key} failed with invalid input: {e}")
            outcome = LevelOutcome(key, LevelStatus.ERROR, error=str(e))
        except Exception as e:
            logger.error(f"Unexpected error in level {key}: {e}")
            outcome = LevelOutcome(key, LevelStatus.ERROR, error=f"Unexpected error: {e}")
        outcome.elapsed = time.time() - started
        self._finish(outcome)
