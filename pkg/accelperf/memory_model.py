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

from .util import ceil_div, ceil_to_multiple, check_fraction, check_positive

__all__ = [
    'BandwidthResult',
    'DIRECTIONS',
    'GatherWorkload',
    'PATTERNS',
    'access_efficiency',
    'gather_scatter_utilization',
    'littles_law_bandwidth',
]

LOG = logging.getLogger(__package__)

DIRECTIONS = ("gather", "scatter")
PATTERNS = ("random", "streaming")


@dataclass(frozen=True)
class GatherWorkload:
    """Random gather or scatter of fixed-size vectors.

    ``fraction_accessed`` only scales the number of bytes moved;
    utilization depends on the vector size alone.
    """
    vector_bytes: int
    num_vectors: int = 4000000
    fraction_accessed: float = 1.0
    direction: str = "gather"
    pattern: str = "random"
    element_bytes: int = 2

    def __post_init__(self):
        check_positive(self.vector_bytes, "vector_bytes", integral=True)
        check_positive(self.num_vectors, "num_vectors", integral=True)
        check_positive(self.element_bytes, "element_bytes", integral=True)
        check_fraction(self.fraction_accessed, "fraction_accessed")
        if self.vector_bytes < self.element_bytes:
            raise ValueError("vector_bytes must be at least element_bytes ({}), but got {}".format(
                self.element_bytes, self.vector_bytes))
        if self.direction not in DIRECTIONS:
            raise ValueError("direction must be one of {}, but got {!r}".format(
                ", ".join(DIRECTIONS), self.direction))
        if self.pattern not in PATTERNS:
            raise ValueError("pattern must be one of {}, but got {!r}".format(
                ", ".join(PATTERNS), self.pattern))

    @property
    def bytes_moved(self):
        return self.num_vectors * self.fraction_accessed * self.vector_bytes


@dataclass(frozen=True)
class BandwidthResult:
    useful_bytes_per_sec: float
    fetched_bytes_per_sec: float
    utilization: float
    bytes_moved: float
    time: float


def access_efficiency(size, granularity):
    """Fraction of fetched bytes that were requested.

    Parameters
    ----------
    size : int
        Bytes requested by one access.

    granularity : int
        Minimum transfer size of the memory system.

    Returns
    -------
    efficiency : float
        ``size / (ceil(size / granularity) * granularity)``
    """
    check_positive(size, "size", integral=True)
    check_positive(granularity, "granularity", integral=True)
    return size / (ceil_div(size, granularity) * granularity)


def gather_scatter_utilization(workload, spec):
    """Memory bandwidth utilization of a gather or scatter.

    A random access pattern reaches at most ``random_access_beta`` of peak
    bandwidth (``scatter_beta`` for scatters, if the spec has one). The
    bytes wasted by rounding each vector up to the access granularity and
    a fixed per-transaction overhead lower it further. A streaming
    pattern runs at ``stream_efficiency``.

    Parameters
    ----------
    workload : :class:`GatherWorkload`
        The access pattern.

    spec : :class:`accelperf.device_model.DeviceSpec`
        The device.

    Returns
    -------
    result : :class:`BandwidthResult`
        Useful bytes/sec, fetched bytes/sec and their ratio to peak.
    """
    mem = spec.memory
    granularity = mem.min_access_granularity
    efficiency = access_efficiency(workload.vector_bytes, granularity)

    if workload.pattern == "streaming":
        utilization = spec.calibration.stream_efficiency * efficiency
    else:
        beta = mem.random_access_beta
        if workload.direction == "scatter" and mem.scatter_beta is not None:
            beta = mem.scatter_beta
        fetched = ceil_to_multiple(workload.vector_bytes, granularity)
        utilization = beta * efficiency * fetched / (fetched + mem.small_transfer_overhead_bytes)

    useful = utilization * mem.peak_bandwidth
    bytes_moved = workload.bytes_moved
    return BandwidthResult(
        useful_bytes_per_sec=useful,
        fetched_bytes_per_sec=useful / efficiency,
        utilization=utilization,
        bytes_moved=bytes_moved,
        time=bytes_moved / useful,
    )


def littles_law_bandwidth(outstanding, transfer_bytes, spec):
    """Bandwidth sustained by a fixed number of requests in flight.

    Parameters
    ----------
    outstanding : int or float
        Concurrent requests, at least 1.

    transfer_bytes : int
        Bytes requested by each; rounded up to the access granularity.

    spec : :class:`accelperf.device_model.DeviceSpec`
        The device.

    Returns
    -------
    bandwidth : float
        Fetched bytes/sec, at most ``peak_bandwidth``.
    """
    if outstanding < 1:
        raise ValueError("outstanding must be at least 1, but got {!r}".format(outstanding))
    mem = spec.memory
    fetched = ceil_to_multiple(transfer_bytes, mem.min_access_granularity)
    return min(mem.peak_bandwidth, outstanding * fetched / mem.mean_latency)
