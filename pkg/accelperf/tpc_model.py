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
from collections import OrderedDict
from dataclasses import dataclass
import logging

from .memory_model import access_efficiency
from .util import check_positive

__all__ = [
    'KernelThroughput',
    'VectorKernelSpec',
    'compute_bound_fraction',
    'kernel_presets',
    'multi_core_throughput',
    'single_core_throughput',
    'softmax_kernel',
]

LOG = logging.getLogger(__package__)

STREAM_ELEMENTS = 24000000


@dataclass(frozen=True)
class VectorKernelSpec:
    """Streaming kernel described by the instructions of one loop iteration.

    Attributes
    ----------
    loads_per_iter, stores_per_iter, computes_per_iter : int
        Vector instructions per iteration.
    flops_per_compute_instr : int
        1 for add or multiply, 2 for multiply-accumulate.
    unroll : int
        Number of iterations in the loop body.
    access_bytes : int
        Bytes transferred by one memory instruction.
    element_bytes : int
        Size of one element.
    arrays_touched : int or None
        Arrays streamed through memory. Defaults to loads plus stores.
    extra_ops_per_element : float
        Additional operations per element, used to raise the
        operational intensity without adding memory traffic.
    total_elements : int
        Elements per array.
    name : str
        Display name.
    """
    loads_per_iter: int
    stores_per_iter: int
    computes_per_iter: int
    flops_per_compute_instr: int = 1
    unroll: int = 1
    access_bytes: int = 256
    element_bytes: int = 2
    arrays_touched: int = None
    extra_ops_per_element: float = 0
    total_elements: int = STREAM_ELEMENTS
    name: str = "custom"

    def __post_init__(self):
        for name in ("loads_per_iter", "stores_per_iter", "computes_per_iter"):
            check_positive(getattr(self, name), name, integral=True, allow_zero=True)
        if self.loads_per_iter + self.stores_per_iter + self.computes_per_iter == 0:
            raise ValueError("kernel must contain at least one instruction")
        if self.flops_per_compute_instr not in (1, 2):
            raise ValueError("flops_per_compute_instr must be 1 or 2, but got {!r}".format(
                self.flops_per_compute_instr))
        for name in ("unroll", "access_bytes", "element_bytes", "total_elements"):
            check_positive(getattr(self, name), name, integral=True)
        if self.access_bytes < self.element_bytes:
            raise ValueError("access_bytes must be at least element_bytes ({}), but got {}".format(
                self.element_bytes, self.access_bytes))
        check_positive(self.extra_ops_per_element, "extra_ops_per_element", allow_zero=True)
        if self.arrays_touched is None:
            object.__setattr__(self, "arrays_touched", self.loads_per_iter + self.stores_per_iter)
        else:
            check_positive(self.arrays_touched, "arrays_touched", integral=True, allow_zero=True)

    @property
    def compute_instructions(self):
        """Compute instructions per iteration, including extra operations."""
        return self.computes_per_iter + self.extra_ops_per_element / self.flops_per_compute_instr

    @property
    def flops_per_element(self):
        return self.computes_per_iter * self.flops_per_compute_instr + self.extra_ops_per_element

    @property
    def bytes_per_element(self):
        return self.arrays_touched * self.element_bytes

    @property
    def operational_intensity(self):
        if self.bytes_per_element == 0:
            return float("inf")
        return self.flops_per_element / self.bytes_per_element


@dataclass(frozen=True)
class KernelThroughput:
    flops: float
    bytes_per_sec: float
    bound: str
    oi: float
    time: float


def kernel_presets():
    """ADD, SCALE and TRIAD streaming kernels on 24 million BF16 elements.

    Returns
    -------
    presets : OrderedDict
        Mapping from kernel name to :class:`VectorKernelSpec`.
    """
    return OrderedDict([
        ("ADD", VectorKernelSpec(2, 1, 1, flops_per_compute_instr=1, name="ADD")),
        ("SCALE", VectorKernelSpec(1, 1, 1, flops_per_compute_instr=1, name="SCALE")),
        ("TRIAD", VectorKernelSpec(2, 1, 1, flops_per_compute_instr=2, name="TRIAD")),
    ])


def softmax_kernel(access_bytes=256, element_bytes=2):
    """Kernel applying softmax to attention scores.

    Approximated as a TRIAD-like pass with one add or multiply per element.
    """
    return VectorKernelSpec(2, 1, 1, flops_per_compute_instr=1, unroll=4,
                            access_bytes=access_bytes, element_bytes=element_bytes,
                            name="SOFTMAX")


def compute_bound_fraction(kernel):
    """Fraction of the multiply-accumulate peak reachable by the kernel's instructions."""
    if kernel.computes_per_iter < 1:
        raise ValueError("kernel must contain at least one compute instruction")
    return kernel.flops_per_compute_instr / 2.0


def _rate_limit(capacity, per_element):
    if per_element == 0:
        return float("inf")
    return capacity / per_element


def _to_throughput(kernel, elements_per_sec, bound):
    if elements_per_sec > 0:
        time = kernel.total_elements / elements_per_sec
    else:
        time = float("inf")
    return KernelThroughput(
        flops=elements_per_sec * kernel.flops_per_element,
        bytes_per_sec=elements_per_sec * kernel.bytes_per_element,
        bound=bound,
        oi=kernel.operational_intensity,
        time=time,
    )


def _single_core_rate(kernel, spec):
    ve = spec.vector_engine
    u = kernel.unroll

    issue_memory = u * (kernel.loads_per_iter + kernel.stores_per_iter) / ve.issue_slots.load_store_slots
    issue_vector = u * kernel.compute_instructions / ve.issue_slots.vector_slots
    stages = sum(count > 0 for count in (
        kernel.loads_per_iter, kernel.compute_instructions, kernel.stores_per_iter))
    dependency = ve.instr_latency_cycles * stages
    issue = max(issue_memory, issue_vector)
    cycles = max(issue, dependency)
    bound = "dependency" if dependency > issue else "issue"

    # a memory instruction moves at most one vector register
    payload = min(kernel.access_bytes, ve.vector_width_bytes) / ve.vector_width_bytes
    elements = u * ve.lanes(kernel.element_bytes) * payload
    return elements / cycles * ve.clock_equivalent, bound


def single_core_throughput(kernel, spec):
    """Throughput of one vector core running the kernel out of memory
    that keeps up with it.

    The loop body takes as many cycles as the busiest issue slot family,
    or the latency of its dependent load, compute and store stages,
    whichever is longer.

    Parameters
    ----------
    kernel : :class:`VectorKernelSpec`
        The kernel.

    spec : :class:`accelperf.device_model.DeviceSpec`
        The device.

    Returns
    -------
    throughput : :class:`KernelThroughput`
        Bound is 'issue' or 'dependency'.
    """
    rate, bound = _single_core_rate(kernel, spec)
    return _to_throughput(kernel, rate, bound)


def multi_core_throughput(kernel, cores, spec):
    """Weak-scaling throughput of the kernel on several vector cores.

    The result is the smallest of the compute-mix ceiling, the memory
    roofline at ``stream_efficiency`` of peak bandwidth, and the
    aggregate issue rate of the cores.

    Parameters
    ----------
    kernel : :class:`VectorKernelSpec`
        The kernel.

    cores : int
        Number of active cores, between 1 and ``core_count``.

    spec : :class:`accelperf.device_model.DeviceSpec`
        The device.

    Returns
    -------
    throughput : :class:`KernelThroughput`
        Bound is 'compute-mix', 'memory', 'issue' or 'dependency'.
    """
    ve = spec.vector_engine
    if not 1 <= cores <= ve.core_count:
        raise ValueError("cores must be within [1; {}], but got {}".format(ve.core_count, cores))

    single_rate, single_bound = _single_core_rate(kernel, spec)
    mix = kernel.flops_per_compute_instr / 2.0 * ve.aggregate_peak_flops
    granularity = access_efficiency(kernel.access_bytes, spec.memory.min_access_granularity)
    bandwidth = spec.calibration.stream_efficiency * spec.memory.peak_bandwidth * granularity

    terms = [
        ("compute-mix", _rate_limit(mix, kernel.flops_per_element)),
        ("memory", _rate_limit(bandwidth, kernel.bytes_per_element)),
        (single_bound, cores * single_rate),
    ]
    bound, rate = min(terms, key=lambda t: t[1])
    LOG.debug("%s on %d cores: %.4g elements/s (%s)", kernel.name, cores, rate, bound)
    return _to_throughput(kernel, rate, bound)
