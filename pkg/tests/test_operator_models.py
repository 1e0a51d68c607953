import numpy
from numpy.testing import assert_almost_equal
import pytest
from scipy.stats import gmean
from sklearn.utils import check_random_state

from accelperf.calibration import paged_attention_grid
from accelperf.operator_models import (
    EmbeddingConfig,
    PagedAttentionConfig,
    embedding_lookup,
    paged_attention,
    paged_attention_cross_device,
    softmax_time,
)


def _speedup(cfg, spec):
    return (paged_attention("block_table", cfg, spec).time
            / paged_attention("block_list", cfg, spec).time)


class TestEmbeddingConfig:

    @staticmethod
    def test_bytes():
        cfg = EmbeddingConfig(num_tables=20, rows_per_table=1000000, vector_bytes=256, pooling_factor=5, batch=64)
        assert cfg.table_bytes == 64 * 5 * 256
        assert cfg.useful_bytes == 20 * 64 * 5 * 256

    @staticmethod
    def test_large_vector_warns():
        with pytest.warns(UserWarning, match="vector_bytes = 4096 exceeds 2048"):
            EmbeddingConfig(num_tables=1, rows_per_table=10, vector_bytes=4096, pooling_factor=1, batch=1)

    @staticmethod
    def test_invalid():
        with pytest.raises(ValueError, match="pooling_factor must be positive"):
            EmbeddingConfig(num_tables=1, rows_per_table=10, vector_bytes=64, pooling_factor=0, batch=1)


class TestEmbeddingLookup:

    @staticmethod
    def test_single_table_flat(gaudi2):
        values = []
        for tables in range(1, 21):
            cfg = EmbeddingConfig(tables, 1000000, 256, 5, 64)
            result = embedding_lookup("single_table", cfg, gaudi2)
            assert result.launches == tables
            values.append(result.bandwidth_utilization)
        assert_almost_equal(numpy.array(values), values[0], decimal=12)

    @staticmethod
    def test_batched_table_grows(gaudi2):
        values = []
        for tables in range(1, 21):
            cfg = EmbeddingConfig(tables, 1000000, 256, 5, 64)
            result = embedding_lookup("batched_table", cfg, gaudi2)
            assert result.launches == 1
            values.append(result.bandwidth_utilization)
        assert numpy.all(numpy.diff(values) > 0)

    @staticmethod
    def test_one_table(gaudi2, a100):
        for spec in (gaudi2, a100):
            cfg = EmbeddingConfig(1, 1000000, 512, 5, 256)
            single = embedding_lookup("single_table", cfg, spec)
            batched = embedding_lookup("batched_table", cfg, spec)
            assert single.time == batched.time
            assert single.bandwidth_utilization == batched.bandwidth_utilization

    @staticmethod
    def test_batched_speedup(gaudi2):
        speedups = []
        for vector_bytes in (64, 128, 256, 512, 1024, 2048):
            for batch in (2048, 4096, 8192, 16384):
                cfg = EmbeddingConfig(20, 1000000, vector_bytes, 5, batch)
                single = embedding_lookup("single_table", cfg, gaudi2)
                batched = embedding_lookup("batched_table", cfg, gaudi2)
                speedups.append(single.time / batched.time)
        assert min(speedups) >= 1.0
        assert 1.2 <= gmean(speedups) <= 1.9

    @staticmethod
    def test_below_ceiling(gaudi2, a100):
        for spec in (gaudi2, a100):
            for vector_bytes in (64, 256, 2048):
                for batch in (1, 64, 4096):
                    cfg = EmbeddingConfig(10, 1000000, vector_bytes, 1, batch)
                    for layout in ("single_table", "batched_table"):
                        result = embedding_lookup(layout, cfg, spec)
                        assert 0 < result.bandwidth_utilization <= spec.memory.random_access_beta
                        assert_almost_equal(result.achieved_bandwidth * result.time, cfg.useful_bytes)

    @staticmethod
    def test_unknown_layout(gaudi2):
        cfg = EmbeddingConfig(1, 10, 64, 1, 1)
        with pytest.raises(ValueError, match="layout must be one of single_table, batched_table"):
            embedding_lookup("fused", cfg, gaudi2)


class TestPagedAttentionConfig:

    @staticmethod
    def test_blocks():
        cfg = PagedAttentionConfig(batch=32, seq_len=4000, padded_fraction=0.5)
        assert cfg.group_size == 4
        assert cfg.blocks_per_seq == 32
        assert cfg.effectual_blocks == 32 * 32
        assert cfg.block_bytes == 128 * 8 * 128 * 2 * 2
        assert cfg.padded_blocks_per_seq == 64

    @staticmethod
    def test_padded_exact():
        cfg = PagedAttentionConfig(batch=1, seq_len=1152, padded_fraction=0.1)
        assert cfg.padded_blocks_per_seq == 10

    @staticmethod
    @pytest.mark.parametrize("kwargs,match", [
        ({"padded_fraction": 1.0}, r"padded_fraction must be within \[0; 1\)"),
        ({"padded_fraction": -0.1}, "padded_fraction must be non-negative"),
        ({"num_query_heads": 30}, r"num_query_heads \(30\) must be a multiple of num_kv_heads \(8\)"),
        ({"block_size": 0}, "block_size must be positive"),
    ])
    def test_invalid(kwargs, match):
        with pytest.raises(ValueError, match=match):
            PagedAttentionConfig(batch=1, seq_len=128, **kwargs)


class TestPagedAttention:

    @staticmethod
    def test_mean_speedup(gaudi2):
        speedups = [_speedup(cfg, gaudi2) for cfg in paged_attention_grid()]
        assert 5.0 <= numpy.mean(speedups) <= 10.0

    @staticmethod
    def test_padded_speedup(gaudi2):
        cfg = PagedAttentionConfig(batch=32, seq_len=4096, padded_fraction=0.9)
        assert 39.0 <= _speedup(cfg, gaudi2) <= 72.0

    @staticmethod
    def test_speedup_grows_with_padding(gaudi2):
        speedups = [_speedup(PagedAttentionConfig(batch=32, seq_len=4096, padded_fraction=z), gaudi2)
                    for z in (0.0, 0.1, 0.3, 0.5, 0.7, 0.9)]
        assert numpy.all(numpy.diff(speedups) > 0)

    @staticmethod
    def test_block_list_ignores_padding(gaudi2):
        dense = paged_attention("block_list", PagedAttentionConfig(batch=8, seq_len=2048), gaudi2)
        padded = paged_attention("block_list", PagedAttentionConfig(batch=8, seq_len=2048, padded_fraction=0.6),
                                 gaudi2)
        assert dense.time == padded.time

    @staticmethod
    def test_overlap(gaudi2, a100):
        cfg = PagedAttentionConfig(batch=16, seq_len=2048)
        result = paged_attention("block_list", cfg, gaudi2)
        assert_almost_equal(result.overlap_achieved, 0.286)
        assert_almost_equal(result.time, max(result.gather_time, result.gemm_time)
                            + 0.714 * min(result.gather_time, result.gemm_time))

        result = paged_attention("block_list", cfg, a100)
        assert_almost_equal(result.overlap_achieved, 1.0)
        assert result.time == max(result.gather_time, result.gemm_time)

    @staticmethod
    def test_no_overlap(gaudi2, make_spec):
        spec = make_spec(gaudi2, calibration={"pipeline_overlap": 0.0})
        result = paged_attention("block_list", PagedAttentionConfig(batch=8, seq_len=1024), spec)
        assert result.time == result.gather_time + result.gemm_time
        assert result.overlap_achieved == 0.0

    @staticmethod
    def test_block_table_serial(gaudi2):
        result = paged_attention("block_table", PagedAttentionConfig(batch=8, seq_len=1024), gaudi2)
        assert result.time == result.gather_time + result.gemm_time
        assert result.overlap_achieved == 0.0
        assert_almost_equal(result.tokens_per_sec, 8 / result.time)

    @staticmethod
    def test_unknown_variant(gaudi2):
        with pytest.raises(ValueError, match="variant must be one of block_table, block_list"):
            paged_attention("flash", PagedAttentionConfig(batch=1, seq_len=128), gaudi2)

    @staticmethod
    def test_softmax_time(gaudi2):
        # memory bound at stream efficiency, 6 bytes per element
        assert_almost_equal(softmax_time(1e9, gaudi2), 1e9 * 6 / (0.8 * 2.46e12))

    @staticmethod
    @pytest.mark.slow()
    def test_block_list_dominates(gaudi2, a100):
        rnd = check_random_state(0)
        for _ in range(10000):
            kv_heads = int(rnd.choice([1, 2, 4, 8]))
            cfg = PagedAttentionConfig(
                batch=int(rnd.randint(1, 65)),
                seq_len=int(rnd.randint(1, 8193)),
                block_size=int(rnd.choice([16, 32, 64, 128])),
                head_dim=int(rnd.choice([64, 128])),
                num_query_heads=kv_heads * int(rnd.choice([1, 2, 4, 8])),
                num_kv_heads=kv_heads,
                padded_fraction=float(rnd.uniform(0.0, 0.95)),
            )
            for spec in (gaudi2, a100):
                table = paged_attention("block_table", cfg, spec)
                block_list = paged_attention("block_list", cfg, spec)
                assert block_list.time <= table.time * (1 + 1e-12)


class TestCrossDevice:

    @staticmethod
    def test_gaudi2_vs_a100(gaudi2, a100):
        ratio = paged_attention_cross_device(PagedAttentionConfig(batch=32, seq_len=4096), gaudi2, a100)
        assert 0.30 <= ratio <= 0.60

    @staticmethod
    def test_same_device(gaudi2):
        cfg = PagedAttentionConfig(batch=4, seq_len=512)
        assert paged_attention_cross_device(cfg, gaudi2, gaudi2) == 1.0

    @staticmethod
    def test_scales_with_bandwidth(gaudi2, a100, make_spec):
        cfg = PagedAttentionConfig(batch=32, seq_len=4096)
        fast = make_spec(a100, memory={"peak_bandwidth": 2 * a100.memory.peak_bandwidth})
        base = paged_attention_cross_device(cfg, a100, gaudi2)
        doubled = paged_attention_cross_device(cfg, fast, gaudi2)
        assert doubled / base == pytest.approx(2.0, rel=1e-9)
