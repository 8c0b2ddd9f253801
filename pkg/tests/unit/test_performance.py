"""Tests for the ordered worker pool and resource monitor."""

import threading
import time

import pytest

from stefan_lab.utils.performance import ParallelProcessor, PerformanceMonitor, RunStats


@pytest.mark.parametrize('workers', [1, 4])
def test_map_ordered_keeps_input_order(workers):
    def slow_square(x):
        time.sleep(0.001 * (10 - x))
        return x * x

    pool = ParallelProcessor(max_workers=workers)
    assert pool.map_ordered(slow_square, range(10)) == [x * x for x in range(10)]


def test_map_ordered_uses_threads():
    seen = set()

    def record(_):
        seen.add(threading.get_ident())
        time.sleep(0.01)
        return 0

    ParallelProcessor(max_workers=4).map_ordered(record, range(8))
    assert len(seen) > 1


def test_map_ordered_propagates_errors():
    def boom(x):
        if x == 3:
            raise ValueError("chunk 3 failed")
        return x

    with pytest.raises(ValueError, match="chunk 3"):
        ParallelProcessor(max_workers=2).map_ordered(boom, range(6))


def test_performance_monitor_report():
    monitor = PerformanceMonitor()
    start = monitor.start_monitoring()
    stats = monitor.end_monitoring(start, workers=3)
    assert isinstance(stats, RunStats)
    assert stats.elapsed >= 0.0
    assert stats.workers == 3
    report = monitor.format_performance_report(stats)
    assert "Wall time" in report
    assert "on 3 threads" in report
    assert stats.to_dict()['workers'] == 3
