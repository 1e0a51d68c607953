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

import pandas
from sklearn.model_selection import ParameterGrid

from .util import check_positive

__all__ = [
    'COLLECTIVES',
    'CollectiveRequest',
    'CollectiveResult',
    'P2PMesh',
    'Switched',
    'TopologySpec',
    'bus_bw_factor',
    'collective_sweep',
    'collective_time',
    'per_device_bandwidth',
]

LOG = logging.getLogger(__package__)

COLLECTIVES = ("AllReduce", "AllGather", "ReduceScatter", "AllToAll", "Reduce", "Broadcast")


@dataclass(frozen=True)
class P2PMesh:
    """Full mesh of dedicated point-to-point links between every device pair.

    Attributes
    ----------
    links_per_pair : int
        Number of links between two devices.
    link_bandwidth : float
        Unidirectional bandwidth of a single link in bytes/sec.
    total_ports : int
        Number of ports per device.
    """
    links_per_pair: int
    link_bandwidth: float
    total_ports: int

    kind = "p2p_mesh"

    def __post_init__(self):
        check_positive(self.links_per_pair, "links_per_pair", integral=True)
        check_positive(self.link_bandwidth, "link_bandwidth")
        check_positive(self.total_ports, "total_ports", integral=True)


@dataclass(frozen=True)
class Switched:
    """Switched fabric giving every device the same bandwidth
    regardless of how many devices participate."""
    per_device_bandwidth: float

    kind = "switched"

    def __post_init__(self):
        check_positive(self.per_device_bandwidth, "per_device_bandwidth")


@dataclass(frozen=True)
class TopologySpec:
    variant: object
    alpha_latency: float
    node_size: int = 8

    def __post_init__(self):
        if not isinstance(self.variant, (P2PMesh, Switched)):
            raise ValueError("unknown topology variant {!r}".format(self.variant))
        check_positive(self.alpha_latency, "alpha_latency", allow_zero=True)
        check_positive(self.node_size, "node_size", integral=True)
        if self.node_size < 2:
            raise ValueError("node_size must be at least 2, but got {}".format(self.node_size))
        if isinstance(self.variant, P2PMesh):
            used = self.variant.links_per_pair * (self.node_size - 1)
            if used > self.variant.total_ports:
                raise ValueError(
                    "links_per_pair * (node_size - 1) = {} exceeds total_ports = {}".format(
                        used, self.variant.total_ports))


@dataclass(frozen=True)
class CollectiveRequest:
    op: str
    payload_bytes: float
    participants: int

    def __post_init__(self):
        if self.op not in COLLECTIVES:
            raise ValueError("op must be one of {}, but got {!r}".format(
                ", ".join(COLLECTIVES), self.op))
        check_positive(self.payload_bytes, "payload_bytes")
        if self.payload_bytes < 1:
            raise ValueError("payload_bytes must be at least 1, but got {!r}".format(
                self.payload_bytes))
        check_positive(self.participants, "participants", integral=True)
        if self.participants < 2:
            raise ValueError("participants must be at least 2, but got {}".format(
                self.participants))


@dataclass(frozen=True)
class CollectiveResult:
    time: float
    alg_bandwidth: float
    bus_bandwidth: float
    utilization: float


def _check_participants(topology, participants):
    if not 2 <= participants <= topology.node_size:
        raise ValueError("participants must be within [2; {}], but got {}".format(
            topology.node_size, participants))


def per_device_bandwidth(topology, participants):
    """Bandwidth in bytes/sec one device can drive into a collective.

    On a mesh every peer is reached over its own links, so the usable
    bandwidth grows with the number of participants. A switch offers
    the same bandwidth for any number of participants.
    """
    _check_participants(topology, participants)
    variant = topology.variant
    if isinstance(variant, P2PMesh):
        return variant.links_per_pair * (participants - 1) * variant.link_bandwidth
    return variant.per_device_bandwidth


def bus_bw_factor(op, n):
    """Factor converting algorithm bandwidth into bus bandwidth.

    Parameters
    ----------
    op : str
        Name of the collective, one of :data:`COLLECTIVES`.

    n : int
        Number of participants, at least 2.

    Returns
    -------
    factor : float
        ``2(n-1)/n`` for AllReduce, ``(n-1)/n`` for AllGather,
        ReduceScatter and AllToAll, and 1 for Reduce and Broadcast.
    """
    if n < 2:
        raise ValueError("n must be at least 2, but got {}".format(n))
    if op == "AllReduce":
        return 2.0 * (n - 1) / n
    if op in ("AllGather", "ReduceScatter", "AllToAll"):
        return (n - 1) / n
    if op in ("Reduce", "Broadcast"):
        return 1.0
    raise ValueError("op must be one of {}, but got {!r}".format(", ".join(COLLECTIVES), op))


def _steps_and_traffic(op, n, payload):
    if op == "AllReduce":
        return 2 * (n - 1), 2.0 * payload * (n - 1) / n
    if op in ("Reduce", "Broadcast"):
        return n - 1, float(payload)
    return n - 1, payload * (n - 1) / n


def collective_time(req, topology):
    """Alpha-beta estimate of a single collective.

    Parameters
    ----------
    req : :class:`CollectiveRequest`
        The collective to run.

    topology : :class:`TopologySpec`
        Interconnect of the node.

    Returns
    -------
    result : :class:`CollectiveResult`
        Utilization is bus bandwidth relative to the bandwidth a device
        has when the whole node participates.
    """
    n = req.participants
    bandwidth = per_device_bandwidth(topology, n)
    steps, traffic = _steps_and_traffic(req.op, n, req.payload_bytes)
    time = steps * topology.alpha_latency + traffic / bandwidth

    alg_bandwidth = req.payload_bytes / time
    bus_bandwidth = alg_bandwidth * bus_bw_factor(req.op, n)
    reference = per_device_bandwidth(topology, topology.node_size)
    return CollectiveResult(
        time=time,
        alg_bandwidth=alg_bandwidth,
        bus_bandwidth=bus_bandwidth,
        utilization=bus_bandwidth / reference,
    )


def collective_sweep(topology, ops=("AllReduce",), payloads=(2048, 33554432), participants=None):
    """Evaluate collectives over a grid of operations, sizes and device counts.

    Parameters
    ----------
    topology : :class:`TopologySpec`
        Interconnect of the node.

    ops : sequence of str
        Collectives to evaluate.

    payloads : sequence of int
        Payload sizes in bytes.

    participants : sequence of int or None
        Device counts. Defaults to every count from 2 to ``node_size``.

    Returns
    -------
    table : :class:`pandas.DataFrame`
        One row per grid point with columns ``op``, ``participants``,
        ``payload_bytes``, ``time``, ``alg_bandwidth``, ``bus_bandwidth``
        and ``utilization``.
    """
    if participants is None:
        participants = range(2, topology.node_size + 1)
    grid = ParameterGrid({"op": list(ops), "payload_bytes": list(payloads),
                          "participants": list(participants)})
    LOG.debug("evaluating %d collectives", len(grid))

    rows = []
    for params in grid:
        res = collective_time(CollectiveRequest(**params), topology)
        rows.append((params["op"], params["participants"], params["payload_bytes"],
                     res.time, res.alg_bandwidth, res.bus_bandwidth, res.utilization))
    return pandas.DataFrame.from_records(rows, columns=[
        "op", "participants", "payload_bytes", "time", "alg_bandwidth", "bus_bandwidth", "utilization"])
