# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.
from dataclasses import dataclass
import logging
import math
import warnings

from .memory_model import GatherWorkload, access_efficiency, gather_scatter_utilization, littles_law_bandwidth
from .mme_model import GemmShape, gemm_perf
from .tpc_model import multi_core_throughput, softmax_kernel
from .util import ceil_div, check_positive

__all__ = [
    'EMBEDDING_LAYOUTS',
    'EmbeddingConfig',
    'EmbeddingResult',
    'PAGED_ATTENTION_VARIANTS',
    'PagedAttentionConfig',
    'PagedAttentionResult',
    'embedding_lookup',
    'paged_attention',
    'paged_attention_cross_device',
    'softmax_time',
]

LOG = logging.getLogger(__package__)

EMBEDDING_LAYOUTS = ("single_table", "batched_table")
PAGED_ATTENTION_VARIANTS = ("block_table", "block_list")

_MAX_VALIDATED_VECTOR_BYTES = 2048


@dataclass(frozen=True)
class EmbeddingConfig:
    """Pooled lookups into several embedding tables.

    Attributes
    ----------
    num_tables : int
        Number of tables.
    rows_per_table : int
        Rows of each table.
    vector_bytes : int
        Bytes of one embedding vector.
    pooling_factor : int
        Gathers per sample and table.
    batch : int
        Samples per lookup.
    unroll : int
        Gathers each vector core keeps in flight.
    """
    num_tables: int
    rows_per_table: int
    vector_bytes: int
    pooling_factor: int
    batch: int
    unroll: int = 4

    def __post_init__(self):
        for name in ("num_tables", "rows_per_table", "vector_bytes", "pooling_factor", "batch", "unroll"):
            check_positive(getattr(self, name), name, integral=True)
        if self.vector_bytes > _MAX_VALIDATED_VECTOR_BYTES:
            warnings.warn("vector_bytes = {} exceeds {}, the largest validated vector size".format(
                self.vector_bytes, _MAX_VALIDATED_VECTOR_BYTES), stacklevel=3)

    @property
    def table_bytes(self):
        """Useful bytes gathered from one table."""
        return self.batch * self.pooling_factor * self.vector_bytes

    @property
    def useful_bytes(self):
        return self.num_tables * self.table_bytes


@dataclass(frozen=True)
class EmbeddingResult:
    time: float
    bandwidth_utilization: float
    launches: int
    achieved_bandwidth: float


@dataclass(frozen=True)
class PagedAttentionConfig:
    """Decode step of paged attention over a KV cache split into blocks.

    Every sequence in the batch has ``seq_len`` cached tokens. A fraction
    ``padded_fraction`` of the entries of the two-dimensional block table
    are zero padding for sequences shorter than the longest one.
    """
    batch: int
    seq_len: int
    block_size: int = 128
    head_dim: int = 128
    num_query_heads: int = 32
    num_kv_heads: int = 8
    element_bytes: int = 2
    padded_fraction: float = 0.0

    def __post_init__(self):
        for name in ("batch", "seq_len", "block_size", "head_dim", "num_query_heads",
                     "num_kv_heads", "element_bytes"):
            check_positive(getattr(self, name), name, integral=True)
        check_positive(self.padded_fraction, "padded_fraction", allow_zero=True)
        if self.padded_fraction >= 1:
            raise ValueError("padded_fraction must be within [0; 1), but got {!r}".format(self.padded_fraction))
        if self.num_query_heads % self.num_kv_heads != 0:
            raise ValueError("num_query_heads ({}) must be a multiple of num_kv_heads ({})".format(
                self.num_query_heads, self.num_kv_heads))

    @property
    def group_size(self):
        """Query heads sharing one KV head."""
        return self.num_query_heads // self.num_kv_heads

    @property
    def blocks_per_seq(self):
        return ceil_div(self.seq_len, self.block_size)

    @property
    def effectual_blocks(self):
        return self.batch * self.blocks_per_seq

    @property
    def block_bytes(self):
        """Bytes of the K and V entries of one block."""
        return self.block_size * self.num_kv_heads * self.head_dim * self.element_bytes * 2

    @property
    def padded_blocks_per_seq(self):
        """Columns of the zero-padded block table."""
        # rounding guards against 0.1 and friends not being exact
        return math.ceil(round(self.blocks_per_seq / (1.0 - self.padded_fraction), 6))


@dataclass(frozen=True)
class PagedAttentionResult:
    variant: str
    time: float
    gather_time: float
    gemm_time: float
    overlap_achieved: float
    tokens_per_sec: float


def _gather_concurrency(spec, offsets, unroll):
    return min(spec.vector_engine.core_count, offsets) * unroll


def embedding_lookup(layout, cfg, spec):
    """Time and bandwidth utilization of an embedding lookup.

    With ``single_table`` every table is looked up by its own kernel, and
    only the offsets of one table are spread across the vector cores.
    ``batched_table`` treats all tables as one large table and looks them
    up with a single kernel.

    Parameters
    ----------
    layout : {'single_table', 'batched_table'}
        Kernel layout.

    cfg : :class:`EmbeddingConfig`
        The lookup.

    spec : :class:`accelperf.device_model.DeviceSpec`
        The device.

    Returns
    -------
    result : :class:`EmbeddingResult`
    """
    mem = spec.memory
    overhead = spec.calibration.kernel_launch_overhead
    ceiling = mem.peak_bandwidth * gather_scatter_utilization(
        GatherWorkload(vector_bytes=cfg.vector_bytes), spec).utilization
    efficiency = access_efficiency(cfg.vector_bytes, mem.min_access_granularity)

    def bandwidth(offsets):
        concurrent = _gather_concurrency(spec, offsets, cfg.unroll)
        return min(ceiling, littles_law_bandwidth(concurrent, cfg.vector_bytes, spec) * efficiency)

    if layout == "single_table":
        launches = cfg.num_tables
        achieved = bandwidth(cfg.batch)
        time = cfg.num_tables * (overhead + cfg.table_bytes / achieved)
    elif layout == "batched_table":
        launches = 1
        achieved = bandwidth(cfg.num_tables * cfg.batch)
        time = overhead + cfg.useful_bytes / achieved
    else:
        raise ValueError("layout must be one of {}, but got {!r}".format(
            ", ".join(EMBEDDING_LAYOUTS), layout))

    return EmbeddingResult(
        time=time,
        bandwidth_utilization=cfg.useful_bytes / (time * mem.peak_bandwidth),
        launches=launches,
        achieved_bandwidth=cfg.useful_bytes / time,
    )


def softmax_time(elements, spec):
    """Seconds the vector cores need to apply softmax to `elements` scores."""
    kernel = softmax_kernel()
    throughput = multi_core_throughput(kernel, spec.vector_engine.core_count, spec)
    return elements * kernel.flops_per_element / throughput.flops


def _block_table_stages(cfg, spec):
    processed = cfg.effectual_blocks / (1.0 - cfg.padded_fraction)
    gather_bw = spec.memory.peak_bandwidth * gather_scatter_utilization(
        GatherWorkload(vector_bytes=cfg.block_bytes, element_bytes=cfg.element_bytes), spec).utilization
    # blocks are gathered, then copied into a contiguous KV tensor
    copy_bw = spec.calibration.stream_efficiency * spec.memory.peak_bandwidth
    gather_time = processed * cfg.block_bytes * (1.0 / gather_bw + 2.0 / copy_bw)

    # one matrix-vector product pair per sequence and query head over the padded length
    padded_len = cfg.padded_blocks_per_seq * cfg.block_size
    eb = cfg.element_bytes
    scores = gemm_perf(GemmShape(1, cfg.head_dim, padded_len, element_bytes=eb), spec)
    context = gemm_perf(GemmShape(1, padded_len, cfg.head_dim, element_bytes=eb), spec)
    gemm_time = cfg.batch * cfg.num_query_heads * (scores.time + context.time)
    gemm_time += softmax_time(processed * cfg.block_size * cfg.num_query_heads, spec)
    return gather_time, gemm_time


def _block_list_stages(cfg, spec):
    gather_bw = spec.memory.peak_bandwidth * gather_scatter_utilization(
        GatherWorkload(vector_bytes=cfg.block_bytes, element_bytes=cfg.element_bytes), spec).utilization
    gather_time = cfg.effectual_blocks * cfg.block_bytes / gather_bw

    # one batched GEMM pair over all (sequence, KV head) problems, the
    # query heads of a group form the rows
    length = cfg.blocks_per_seq * cfg.block_size
    problems = cfg.batch * cfg.num_kv_heads
    eb = cfg.element_bytes
    scores = gemm_perf(GemmShape(cfg.group_size, cfg.head_dim, length, element_bytes=eb, batch=problems), spec)
    context = gemm_perf(GemmShape(cfg.group_size, length, cfg.head_dim, element_bytes=eb, batch=problems), spec)
    gemm_time = scores.time + context.time
    gemm_time += softmax_time(cfg.effectual_blocks * cfg.block_size * cfg.num_query_heads, spec)
    return gather_time, gemm_time


def paged_attention(variant, cfg, spec):
    """Time of one decode step of paged attention.

    ``block_table`` walks the zero-padded block table, copies the gathered
    blocks into a contiguous tensor and runs the attention GEMMs after
    the copy. ``block_list`` gathers effectual blocks only and pipelines
    the gathers with batched attention GEMMs; ``pipeline_overlap`` of the
    shorter stage is hidden behind the longer one.

    Parameters
    ----------
    variant : {'block_table', 'block_list'}
        Index layout.

    cfg : :class:`PagedAttentionConfig`
        The workload.

    spec : :class:`accelperf.device_model.DeviceSpec`
        The device.

    Returns
    -------
    result : :class:`PagedAttentionResult`
        ``tokens_per_sec`` counts one generated token per sequence.
    """
    if variant == "block_table":
        gather_time, gemm_time = _block_table_stages(cfg, spec)
        time = gather_time + gemm_time
    elif variant == "block_list":
        gather_time, gemm_time = _block_list_stages(cfg, spec)
        overlap = spec.calibration.pipeline_overlap
        time = max(gather_time, gemm_time) + (1.0 - overlap) * min(gather_time, gemm_time)
    else:
        raise ValueError("variant must be one of {}, but got {!r}".format(
            ", ".join(PAGED_ATTENTION_VARIANTS), variant))

    hidden = gather_time + gemm_time - time
    return PagedAttentionResult(
        variant=variant,
        time=time,
        gather_time=gather_time,
        gemm_time=gemm_time,
        overlap_achieved=hidden / min(gather_time, gemm_time),
        tokens_per_sec=cfg.batch / time,
    )


def paged_attention_cross_device(cfg, spec_a, spec_b):
    """Ratio of the paged attention throughput of two devices.

    Each device uses the faster of the two variants.

    Returns
    -------
    ratio : float
        Tokens/sec on `spec_a` divided by tokens/sec on `spec_b`.
    """
    def best(spec):
        return max(paged_attention(variant, cfg, spec).tokens_per_sec
                   for variant in PAGED_ATTENTION_VARIANTS)

    ratio = best(spec_a) / best(spec_b)
    LOG.debug("paged attention %s / %s = %.4f", spec_a.name, spec_b.name, ratio)
    return ratio
