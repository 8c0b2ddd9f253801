"""
Worker pools and resource monitoring for long numerical runs.
"""

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

from tqdm import tqdm

from .logger import get_logger

try:
    import psutil
    PSUTIL_AVAILABLE = True
except ImportError:
    PSUTIL_AVAILABLE = False

T = TypeVar('T')
R = TypeVar('R')


@dataclass
class RunStats:
    """Resource usage of one run."""
    start_time: float
    end_time: float
    memory_start: float
    memory_peak: float
    memory_end: float
    cpu_usage: float
    workers: int = 1

    @property
    def elapsed(self) -> float:
        return self.end_time - self.start_time

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['elapsed'] = self.elapsed
        return data


class ParallelProcessor:
    """Ordered map over a thread pool.

    Results come back in input order regardless of completion order, so
    reductions over them are deterministic for any worker count.
    """

    def __init__(self, max_workers: Optional[int] = None,
                 logger: Optional[logging.Logger] = None):
        """
        Args:
            max_workers: Worker thread count (default: available cores)
            logger: Logger instance
        """
        self.max_workers = max(1, max_workers or os.cpu_count() or 1)
        self.logger = logger or get_logger('performance')

    def map_ordered(self, func: Callable[[T], R], items: Sequence[T],
                    show_progress: bool = False, description: str = 'chunks') -> List[R]:
        """
        Apply ``func`` to every item and return results in input order.

        Exceptions raised by ``func`` propagate to the caller.

        Args:
            func: Function applied to each item
            items: Work items
            show_progress: Show a tqdm bar
            description: Progress bar label

        Returns:
            List of results aligned with ``items``
        """
        items = list(items)
        if self.max_workers == 1 or len(items) <= 1:
            return [func(item) for item in tqdm(items, desc=description, disable=not show_progress, leave=False)]

        results: List[Optional[R]] = [None] * len(items)
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            futures = [executor.submit(func, item) for item in items]
            for index, future in enumerate(tqdm(futures, desc=description,
                                                disable=not show_progress, leave=False)):
                results[index] = future.result()
        self.logger.debug(f"Processed {len(items)} {description} on {self.max_workers} threads")
        return results


class PerformanceMonitor:
    """Wall time, resident memory and CPU of one service call (psutil when installed)."""

    def __init__(self, logger: Optional[logging.Logger] = None):
        self.logger = logger or get_logger('performance')
        self.available = PSUTIL_AVAILABLE

    def start_monitoring(self) -> Dict[str, Any]:
        start_info = {
            'start_time': time.time(),
            'available': self.available
        }

        if self.available:
            try:
                process = psutil.Process()
                start_info.update({
                    'memory_start_mb': process.memory_info().rss / (1024 * 1024),
                    'cpu_count': psutil.cpu_count(),
                })
                process.cpu_percent()
            except psutil.Error as e:
                self.logger.warning(f"Could not start performance monitoring: {e}")
                start_info['available'] = False

        return start_info

    def end_monitoring(self, start_info: Dict[str, Any], workers: int = 1) -> RunStats:
        end_time = time.time()
        memory_start = start_info.get('memory_start_mb', 0.0)
        stats = RunStats(
            start_time=start_info['start_time'],
            end_time=end_time,
            memory_start=memory_start,
            memory_peak=memory_start,
            memory_end=memory_start,
            cpu_usage=0.0,
            workers=workers,
        )

        if start_info.get('available') and self.available:
            try:
                process = psutil.Process()
                memory_end = process.memory_info().rss / (1024 * 1024)
                stats.memory_end = memory_end
                stats.memory_peak = max(memory_start, memory_end)
                stats.cpu_usage = process.cpu_percent()
            except psutil.Error as e:
                self.logger.warning(f"Could not end performance monitoring: {e}")

        return stats

    def format_performance_report(self, stats: RunStats) -> str:
        lines = [f"⏱️  Wall time {stats.elapsed:.2f}s on {stats.workers} threads"]
        if stats.memory_start > 0:
            lines.append(f"💾 RSS {stats.memory_start:.1f} → {stats.memory_end:.1f} MB (peak {stats.memory_peak:.1f} MB)")
        if stats.cpu_usage > 0:
            lines.append(f"🖥️  CPU {stats.cpu_usage:.0f}%")
        return "\n".join(lines)
