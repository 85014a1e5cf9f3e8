"""Tests for the scoring benchmark."""

import logging

import pytest

from drsplat.bench import bench_lut, percentile, time_operation
from drsplat.errors import InvalidArgumentError


class TestBenchLut:
    """Tests for full-precision vs ADC timing."""

    def test_small_run(self, caplog):
        """A small run reports both timings and agrees on the best match."""
        with caplog.at_level(logging.WARNING):
            result = bench_lut(n=2000, d=32, l=8, repetitions=10, seed=1)
        assert "timings will be noisy" in caplog.text

        for key in ("full", "adc"):
            report = result[key]
            assert report["n"] == 2000
            assert report["repetitions"] == 10
            assert report["median_s"] > 0
            assert report["p95_s"] >= report["median_s"]
        assert result["speedup"] > 0
        assert result["top1_agree"] is True

    @pytest.mark.parametrize("l", [32, 64, 128])
    def test_adc_beats_full_precision(self, l):
        """Lookup-table scoring of 512-d codes is faster than full-precision cosine."""
        result = bench_lut(n=50_000, d=512, l=l, repetitions=10, seed=0)
        assert result["speedup"] > 1.0, result
        assert result["top1_agree"] is True

    def test_too_few_repetitions(self):
        """Fewer than ten repetitions is refused."""
        with pytest.raises(InvalidArgumentError):
            bench_lut(n=100, d=8, l=2, repetitions=5)

    def test_indivisible(self):
        """Sub-vector count must divide the dimension."""
        with pytest.raises(InvalidArgumentError):
            bench_lut(n=100, d=10, l=3)


class TestTiming:
    """Tests for timing helpers."""

    def test_percentile_nearest_rank(self):
        """Nearest-rank percentiles of a small sample."""
        values = [5.0, 1.0, 3.0, 2.0, 4.0]
        assert percentile(values, 0.6) == 3.0
        assert percentile(values, 0.95) == 5.0
        assert percentile(values, 0.0) == 1.0

    def test_time_operation_counts_calls(self):
        """One warm-up call plus one call per repetition."""
        calls = []
        times = time_operation(lambda: calls.append(1), 10)
        assert len(times) == 10
        assert len(calls) == 11
        assert all(t >= 0 for t in times)
