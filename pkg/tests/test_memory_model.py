import numpy
from numpy.testing import assert_almost_equal
import pytest

from accelperf.memory_model import (
    GatherWorkload,
    access_efficiency,
    gather_scatter_utilization,
    littles_law_bandwidth,
)

SMALL = (16, 32, 64, 128)
LARGE = (256, 512, 1024, 2048)


def _mean_utilization(spec, sizes, direction="gather"):
    return numpy.mean([
        gather_scatter_utilization(GatherWorkload(vector_bytes=s, direction=direction), spec).utilization
        for s in sizes])


class TestAccessEfficiency:

    @staticmethod
    @pytest.mark.parametrize("size,granularity,expected", [
        (256, 256, 1.0),
        (64, 256, 0.25),
        (300, 256, 300 / 512.0),
        (16, 32, 0.5),
        (2048, 32, 1.0),
    ])
    def test_values(size, granularity, expected):
        assert_almost_equal(access_efficiency(size, granularity), expected)

    @staticmethod
    def test_invalid():
        with pytest.raises(ValueError, match="size must be positive"):
            access_efficiency(0, 256)
        with pytest.raises(ValueError, match="size must be an integer, but got 256.5"):
            access_efficiency(256.5, 256)

    @staticmethod
    def test_at_most_one():
        for size in range(1, 1025):
            assert 0 < access_efficiency(size, 256) <= 1


class TestGatherScatter:

    @staticmethod
    def test_gaudi2_small(gaudi2):
        assert_almost_equal(_mean_utilization(gaudi2, SMALL), 0.15, decimal=3)

    @staticmethod
    def test_gaudi2_large(gaudi2):
        assert_almost_equal(_mean_utilization(gaudi2, LARGE), 0.64)

    @staticmethod
    def test_a100_small(a100):
        assert_almost_equal(_mean_utilization(a100, SMALL), 0.361, decimal=3)

    @staticmethod
    def test_small_vector_ratio(gaudi2, a100):
        ratio = _mean_utilization(gaudi2, SMALL) / _mean_utilization(a100, SMALL)
        assert ratio == pytest.approx(0.4155, abs=0.002)

    @staticmethod
    def test_monotone(gaudi2, a100):
        sizes = [2 ** i for i in range(4, 12)]
        for spec in (gaudi2, a100):
            values = [gather_scatter_utilization(GatherWorkload(vector_bytes=s), spec).utilization
                      for s in sizes]
            assert numpy.all(numpy.diff(values) >= 0)
            assert max(values) <= spec.memory.random_access_beta

    @staticmethod
    def test_fetched(gaudi2):
        result = gather_scatter_utilization(GatherWorkload(vector_bytes=64), gaudi2)
        assert_almost_equal(result.fetched_bytes_per_sec / result.useful_bytes_per_sec, 4.0)
        assert_almost_equal(result.useful_bytes_per_sec / 1e12, 0.64 * 0.25 * 2.46)

    @staticmethod
    def test_bytes_and_time(a100):
        workload = GatherWorkload(vector_bytes=512, num_vectors=1000, fraction_accessed=0.5)
        result = gather_scatter_utilization(workload, a100)
        assert result.bytes_moved == 256000
        assert_almost_equal(result.time, 256000 / result.useful_bytes_per_sec)

    @staticmethod
    def test_fraction_does_not_change_utilization(gaudi2):
        full = gather_scatter_utilization(GatherWorkload(vector_bytes=128), gaudi2)
        part = gather_scatter_utilization(GatherWorkload(vector_bytes=128, fraction_accessed=0.1), gaudi2)
        assert full.utilization == part.utilization

    @staticmethod
    def test_scatter_shares_beta(gaudi2):
        gather = gather_scatter_utilization(GatherWorkload(vector_bytes=512), gaudi2)
        scatter = gather_scatter_utilization(GatherWorkload(vector_bytes=512, direction="scatter"), gaudi2)
        assert gather.utilization == scatter.utilization

    @staticmethod
    def test_scatter_beta(gaudi2, make_spec):
        spec = make_spec(gaudi2, memory={"scatter_beta": 0.5})
        assert_almost_equal(_mean_utilization(spec, LARGE, direction="scatter"), 0.5)
        assert_almost_equal(_mean_utilization(spec, LARGE, direction="gather"), 0.64)

    @staticmethod
    def test_streaming(gaudi2):
        result = gather_scatter_utilization(GatherWorkload(vector_bytes=128, pattern="streaming"), gaudi2)
        assert_almost_equal(result.utilization, 0.8 * 0.5)

    @staticmethod
    @pytest.mark.parametrize("kwargs,match", [
        ({"vector_bytes": 0}, "vector_bytes must be positive"),
        ({"vector_bytes": 1}, r"vector_bytes must be at least element_bytes \(2\)"),
        ({"vector_bytes": 64, "fraction_accessed": 1.5}, "fraction_accessed must be at most 1"),
        ({"vector_bytes": 64, "fraction_accessed": 0}, "fraction_accessed must be positive"),
        ({"vector_bytes": 64, "direction": "broadcast"}, "direction must be one of gather, scatter"),
        ({"vector_bytes": 64, "pattern": "strided"}, "pattern must be one of random, streaming"),
    ])
    def test_invalid(kwargs, match):
        with pytest.raises(ValueError, match=match):
            GatherWorkload(**kwargs)


class TestLittlesLaw:

    @staticmethod
    def test_single_request(gaudi2, make_spec):
        spec = make_spec(gaudi2, memory={"mean_latency": 1e-6})
        assert_almost_equal(littles_law_bandwidth(1, 256, spec) / 1e6, 256.0)

    @staticmethod
    def test_many_requests(gaudi2, make_spec):
        spec = make_spec(gaudi2, memory={"mean_latency": 0.8e-6})
        assert_almost_equal(littles_law_bandwidth(96, 512, spec) / 1e9, 61.44)

    @staticmethod
    def test_rounds_to_granularity(gaudi2):
        assert littles_law_bandwidth(4, 64, gaudi2) == littles_law_bandwidth(4, 256, gaudi2)

    @staticmethod
    def test_capped_at_peak(a100):
        assert littles_law_bandwidth(1e9, 2048, a100) == a100.memory.peak_bandwidth

    @staticmethod
    def test_invalid(gaudi2):
        with pytest.raises(ValueError, match="outstanding must be at least 1"):
            littles_law_bandwidth(0, 256, gaudi2)
