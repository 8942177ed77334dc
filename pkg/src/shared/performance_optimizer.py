"""
Performance utilities for the simulation lab

Runs independent replications concurrently and merges their results in
replication order, and keeps simple wall-clock metrics for run reports.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional

logger = logging.getLogger(__name__)


@dataclass
class PerformanceMetrics:
    """Wall-clock timing of a run."""
    started_at: float = field(default_factory=time.time)
    finished_at: Optional[float] = None
    task_durations: Dict[int, float] = field(default_factory=dict)

    def record(self, index: int, duration: float) -> None:
        self.task_durations[index] = duration

    def finish(self) -> None:
        self.finished_at = time.time()

    @property
    def wall_time(self) -> float:
        end = self.finished_at if self.finished_at is not None else time.time()
        return end - self.started_at

    def to_dict(self) -> Dict[str, Any]:
        durations = list(self.task_durations.values())
        return {
            'wall_time_s': round(self.wall_time, 3),
            'tasks': len(durations),
            'mean_task_s': round(sum(durations) / len(durations), 3) if durations else None,
            'max_task_s': round(max(durations), 3) if durations else None,
        }


def _timed(func: Callable, item: Any):
    start = time.time()
    result = func(item)
    return result, time.time() - start


class ReplicationPool:
    """
    Maps a picklable function over items, serially or in worker processes.

    Results come back in input order whatever the completion order.
    """

    def __init__(self, workers: int = 1, metrics: Optional[PerformanceMetrics] = None):
        self.workers = max(1, int(workers))
        self.metrics = metrics or PerformanceMetrics()

    def map(self, func: Callable, items: Iterable[Any]) -> List[Any]:
        items = list(items)
        results: List[Any] = [None] * len(items)

        if self.workers == 1 or len(items) <= 1:
            for index, item in enumerate(items):
                results[index], duration = _timed(func, item)
                self.metrics.record(index, duration)
            return results

        with ProcessPoolExecutor(max_workers=min(self.workers, len(items))) as executor:
            futures = {executor.submit(_timed, func, item): index for index, item in enumerate(items)}
            for future in as_completed(futures):
                index = futures[future]
                results[index], duration = future.result()
                self.metrics.record(index, duration)
                logger.debug(f"Task {index} finished in {duration:.2f}s")
        return results
