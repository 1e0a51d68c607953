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
import hashlib
import json
import logging
import math
import numbers

from .exceptions import SpecValidationError
from .interconnect_model import P2PMesh, Switched, TopologySpec
from .io import dump_document, load_document
from .util import is_power_of_two

__all__ = [
    'CalibrationSpec',
    'DeviceSpec',
    'ENGINES',
    'FILL_MODELS',
    'IssueSlots',
    'MatrixEngineSpec',
    'MemorySpec',
    'RooflinePoint',
    'VectorEngineSpec',
    'attainable_flops',
    'dump_device_spec',
    'load_device_spec',
    'spec_digest',
]

LOG = logging.getLogger(__package__)

ENGINES = ("matrix", "vector")
FILL_MODELS = ("none", "h_plus_w")


@dataclass(frozen=True)
class MatrixEngineSpec:
    """Systolic matrix engine made of identical MAC arrays.

    Attributes
    ----------
    unit_height, unit_width : int
        Shape of a single MAC array.
    unit_count : int
        Number of MAC arrays.
    min_unit_dim : int
        Smallest height or width a reconfigured array can take.
    reconfigurable : bool
        Whether the arrays can be merged or power-gated per GEMM.
    geometries : tuple
        Optional explicit geometry menu; each entry is a tuple of
        ``(height, width)`` pairs. Empty means the default menu.
    """
    unit_height: int
    unit_width: int
    unit_count: int
    min_unit_dim: int
    reconfigurable: bool
    geometries: tuple = ()

    @property
    def mac_budget(self):
        return self.unit_height * self.unit_width * self.unit_count


@dataclass(frozen=True)
class IssueSlots:
    load_store_slots: int
    vector_slots: int


@dataclass(frozen=True)
class VectorEngineSpec:
    core_count: int
    vector_width_bytes: int
    instr_latency_cycles: int
    issue_slots: IssueSlots
    aggregate_peak_flops: float

    def lanes(self, element_bytes):
        """Number of elements in a vector register."""
        return self.vector_width_bytes / element_bytes

    @property
    def clock_equivalent(self):
        """Cycles per second such that all cores issuing multiply-accumulate
        instructions on BF16 vectors in every vector slot reach
        ``aggregate_peak_flops``."""
        per_cycle = self.core_count * self.issue_slots.vector_slots * 2 * self.lanes(2)
        return self.aggregate_peak_flops / per_cycle


@dataclass(frozen=True)
class MemorySpec:
    peak_bandwidth: float
    min_access_granularity: int
    random_access_beta: float
    small_transfer_overhead_bytes: float
    mean_latency: float
    scatter_beta: float = None


@dataclass(frozen=True)
class CalibrationSpec:
    stream_efficiency: float
    kernel_launch_overhead: float
    mme_fill_model: str
    pipeline_overlap: float
    matrix_bandwidth_efficiency: float = 1.0


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    matrix_peak_flops: float
    matrix_engine: MatrixEngineSpec
    vector_engine: VectorEngineSpec
    memory: MemorySpec
    interconnect: TopologySpec
    calibration: CalibrationSpec

    def to_dict(self):
        """Convert to a plain mapping with the layout of a spec document."""
        engine = self.matrix_engine
        matrix = {
            "unit_height": engine.unit_height,
            "unit_width": engine.unit_width,
            "unit_count": engine.unit_count,
            "min_unit_dim": engine.min_unit_dim,
            "reconfigurable": engine.reconfigurable,
        }
        if engine.geometries:
            matrix["geometries"] = [[list(unit) for unit in g] for g in engine.geometries]

        ve = self.vector_engine
        vector = {
            "core_count": ve.core_count,
            "vector_width_bytes": ve.vector_width_bytes,
            "instr_latency_cycles": ve.instr_latency_cycles,
            "issue_slots": {
                "load_store_slots": ve.issue_slots.load_store_slots,
                "vector_slots": ve.issue_slots.vector_slots,
            },
            "aggregate_peak_flops": ve.aggregate_peak_flops,
        }

        mem = self.memory
        memory = {
            "peak_bandwidth": mem.peak_bandwidth,
            "min_access_granularity": mem.min_access_granularity,
            "random_access_beta": mem.random_access_beta,
            "small_transfer_overhead_bytes": mem.small_transfer_overhead_bytes,
            "mean_latency": mem.mean_latency,
        }
        if mem.scatter_beta is not None:
            memory["scatter_beta"] = mem.scatter_beta

        topo = self.interconnect
        variant = topo.variant
        if isinstance(variant, P2PMesh):
            params = {
                "links_per_pair": variant.links_per_pair,
                "link_bandwidth": variant.link_bandwidth,
                "total_ports": variant.total_ports,
            }
        else:
            params = {"per_device_bandwidth": variant.per_device_bandwidth}
        interconnect = {
            "variant": variant.kind,
            variant.kind: params,
            "alpha_latency": topo.alpha_latency,
            "node_size": topo.node_size,
        }

        cal = self.calibration
        calibration = {
            "stream_efficiency": cal.stream_efficiency,
            "kernel_launch_overhead": cal.kernel_launch_overhead,
            "mme_fill_model": cal.mme_fill_model,
            "pipeline_overlap": cal.pipeline_overlap,
            "matrix_bandwidth_efficiency": cal.matrix_bandwidth_efficiency,
        }

        return {
            "name": self.name,
            "matrix_peak_flops": self.matrix_peak_flops,
            "matrix_engine": matrix,
            "vector_engine": vector,
            "memory": memory,
            "interconnect": interconnect,
            "calibration": calibration,
        }


@dataclass(frozen=True)
class RooflinePoint:
    operational_intensity: float
    attainable: float
    bound: str


def _check_keys(doc, prefix, required, optional=()):
    if not isinstance(doc, dict):
        raise SpecValidationError("{} must be a mapping, but got {}".format(
            prefix or "document", type(doc).__name__))
    unknown = sorted(set(doc) - set(required) - set(optional))
    if unknown:
        raise SpecValidationError("unknown key {}".format(_dotted(prefix, unknown[0])))
    for key in required:
        if key not in doc:
            raise SpecValidationError("missing key {}".format(_dotted(prefix, key)))


def _dotted(prefix, key):
    return "{}.{}".format(prefix, key) if prefix else key


def _number(doc, prefix, key, integral=False, allow_zero=False, upper=None):
    field_name = _dotted(prefix, key)
    value = doc[key]
    if isinstance(value, str):
        # PyYAML reads exponents without a sign, e.g. 2.46e12, as strings
        try:
            value = float(value)
        except ValueError:
            raise SpecValidationError("{} must be a number, but got {!r}".format(field_name, doc[key]))

    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise SpecValidationError("{} must be a number, but got {!r}".format(field_name, value))
    if integral:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, numbers.Integral):
            raise SpecValidationError("{} must be an integer, but got {!r}".format(field_name, value))
    if not math.isfinite(value):
        raise SpecValidationError("{} must be finite, but got {!r}".format(field_name, value))
    if value < 0 or (value == 0 and not allow_zero):
        raise SpecValidationError("{} must be {}, but got {!r}".format(
            field_name, "non-negative" if allow_zero else "positive", value))
    if upper is not None and value > upper:
        raise SpecValidationError("{} must be at most {}, but got {!r}".format(field_name, upper, value))
    return value


def _power_of_two(doc, prefix, key):
    value = _number(doc, prefix, key, integral=True)
    if not is_power_of_two(value):
        raise SpecValidationError("{} must be a power of two, but got {}".format(_dotted(prefix, key), value))
    return value


def _parse_matrix_engine(doc):
    prefix = "matrix_engine"
    _check_keys(doc, prefix,
                ("unit_height", "unit_width", "unit_count", "min_unit_dim", "reconfigurable"),
                ("geometries",))
    reconfigurable = doc["reconfigurable"]
    if not isinstance(reconfigurable, bool):
        raise SpecValidationError("{}.reconfigurable must be true or false, but got {!r}".format(
            prefix, reconfigurable))

    engine = MatrixEngineSpec(
        unit_height=_number(doc, prefix, "unit_height", integral=True),
        unit_width=_number(doc, prefix, "unit_width", integral=True),
        unit_count=_number(doc, prefix, "unit_count", integral=True),
        min_unit_dim=_number(doc, prefix, "min_unit_dim", integral=True),
        reconfigurable=reconfigurable,
        geometries=_parse_geometries(doc.get("geometries", ()), prefix),
    )
    if engine.min_unit_dim > min(engine.unit_height, engine.unit_width):
        raise SpecValidationError("{}.min_unit_dim must not exceed the unit dimensions".format(prefix))
    for geometry in engine.geometries:
        macs = sum(h * w for h, w in geometry)
        if macs > engine.mac_budget:
            raise SpecValidationError("{}.geometries entry {} uses {} MACs, exceeding the budget of {}".format(
                prefix, geometry, macs, engine.mac_budget))
    return engine


def _parse_geometries(entries, prefix):
    field_name = "{}.geometries".format(prefix)
    if not isinstance(entries, (list, tuple)):
        raise SpecValidationError("{} must be a list".format(field_name))

    geometries = []
    for entry in entries:
        if not isinstance(entry, (list, tuple)) or len(entry) == 0:
            raise SpecValidationError("{} entries must be non-empty lists of [height, width]".format(field_name))
        units = []
        for unit in entry:
            if (not isinstance(unit, (list, tuple)) or len(unit) != 2
                    or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in unit)):
                raise SpecValidationError("{} units must be [height, width] with positive integers, "
                                          "but got {!r}".format(field_name, unit))
            units.append(tuple(unit))
        geometries.append(tuple(units))
    return tuple(geometries)


def _parse_vector_engine(doc):
    prefix = "vector_engine"
    _check_keys(doc, prefix, ("core_count", "vector_width_bytes", "instr_latency_cycles",
                              "issue_slots", "aggregate_peak_flops"))
    slots = doc["issue_slots"]
    slots_prefix = prefix + ".issue_slots"
    _check_keys(slots, slots_prefix, ("load_store_slots", "vector_slots"))
    return VectorEngineSpec(
        core_count=_number(doc, prefix, "core_count", integral=True),
        vector_width_bytes=_power_of_two(doc, prefix, "vector_width_bytes"),
        instr_latency_cycles=_number(doc, prefix, "instr_latency_cycles", integral=True),
        issue_slots=IssueSlots(
            load_store_slots=_number(slots, slots_prefix, "load_store_slots", integral=True),
            vector_slots=_number(slots, slots_prefix, "vector_slots", integral=True),
        ),
        aggregate_peak_flops=_number(doc, prefix, "aggregate_peak_flops"),
    )


def _parse_memory(doc):
    prefix = "memory"
    _check_keys(doc, prefix, ("peak_bandwidth", "min_access_granularity", "random_access_beta",
                              "small_transfer_overhead_bytes", "mean_latency"),
                ("scatter_beta",))
    scatter_beta = None
    if doc.get("scatter_beta") is not None:
        scatter_beta = _number(doc, prefix, "scatter_beta", upper=1)
    return MemorySpec(
        peak_bandwidth=_number(doc, prefix, "peak_bandwidth"),
        min_access_granularity=_power_of_two(doc, prefix, "min_access_granularity"),
        random_access_beta=_number(doc, prefix, "random_access_beta", upper=1),
        small_transfer_overhead_bytes=_number(doc, prefix, "small_transfer_overhead_bytes", allow_zero=True),
        mean_latency=_number(doc, prefix, "mean_latency"),
        scatter_beta=scatter_beta,
    )


def _parse_interconnect(doc):
    prefix = "interconnect"
    if not isinstance(doc, dict):
        raise SpecValidationError("interconnect must be a mapping")
    kind = doc.get("variant")
    if kind == P2PMesh.kind:
        sub = doc.get(kind)
        sub_prefix = "{}.{}".format(prefix, kind)
        _check_keys(sub, sub_prefix, ("links_per_pair", "link_bandwidth", "total_ports"))
        variant = P2PMesh(
            links_per_pair=_number(sub, sub_prefix, "links_per_pair", integral=True),
            link_bandwidth=_number(sub, sub_prefix, "link_bandwidth"),
            total_ports=_number(sub, sub_prefix, "total_ports", integral=True),
        )
    elif kind == Switched.kind:
        sub = doc.get(kind)
        sub_prefix = "{}.{}".format(prefix, kind)
        _check_keys(sub, sub_prefix, ("per_device_bandwidth",))
        variant = Switched(per_device_bandwidth=_number(sub, sub_prefix, "per_device_bandwidth"))
    else:
        raise SpecValidationError("{}.variant must be one of {!r}, {!r}, but got {!r}".format(
            prefix, P2PMesh.kind, Switched.kind, kind))

    _check_keys(doc, prefix, ("variant", kind, "alpha_latency"), ("node_size",))
    if "node_size" not in doc:
        doc = dict(doc, node_size=8)
    try:
        return TopologySpec(
            variant=variant,
            alpha_latency=_number(doc, prefix, "alpha_latency", allow_zero=True),
            node_size=_number(doc, prefix, "node_size", integral=True),
        )
    except SpecValidationError:
        raise
    except ValueError as e:
        raise SpecValidationError("{}: {}".format(prefix, e)) from e


def _parse_calibration(doc):
    prefix = "calibration"
    _check_keys(doc, prefix, ("stream_efficiency", "kernel_launch_overhead", "mme_fill_model",
                              "pipeline_overlap"),
                ("matrix_bandwidth_efficiency",))
    fill = doc["mme_fill_model"]
    if fill not in FILL_MODELS:
        raise SpecValidationError("{}.mme_fill_model must be one of {}, but got {!r}".format(
            prefix, ", ".join(FILL_MODELS), fill))
    if "matrix_bandwidth_efficiency" in doc:
        matrix_eff = _number(doc, prefix, "matrix_bandwidth_efficiency", upper=1)
    else:
        matrix_eff = 1.0
    return CalibrationSpec(
        stream_efficiency=_number(doc, prefix, "stream_efficiency", upper=1),
        kernel_launch_overhead=_number(doc, prefix, "kernel_launch_overhead", allow_zero=True),
        mme_fill_model=fill,
        pipeline_overlap=_number(doc, prefix, "pipeline_overlap", allow_zero=True, upper=1),
        matrix_bandwidth_efficiency=matrix_eff,
    )


def load_device_spec(source):
    """Load and validate a device specification.

    Parameters
    ----------
    source : str, path-like, file-like object or dict
        YAML document with top-level keys ``name``, ``matrix_peak_flops``,
        ``matrix_engine``, ``vector_engine``, ``memory``, ``interconnect``
        and ``calibration``. All rates are in SI base units.

    Returns
    -------
    spec : :class:`DeviceSpec`
        The validated specification.

    Raises
    ------
    SpecValidationError
        If a key is missing or unknown, or a value violates the schema.
        The message names the offending field.
    """
    doc = load_document(source)
    _check_keys(doc, "", ("name", "matrix_peak_flops", "matrix_engine", "vector_engine",
                          "memory", "interconnect", "calibration"))
    name = doc["name"]
    if not isinstance(name, str) or not name:
        raise SpecValidationError("name must be a non-empty string, but got {!r}".format(name))

    spec = DeviceSpec(
        name=name,
        matrix_peak_flops=_number(doc, "", "matrix_peak_flops"),
        matrix_engine=_parse_matrix_engine(doc["matrix_engine"]),
        vector_engine=_parse_vector_engine(doc["vector_engine"]),
        memory=_parse_memory(doc["memory"]),
        interconnect=_parse_interconnect(doc["interconnect"]),
        calibration=_parse_calibration(doc["calibration"]),
    )
    LOG.debug("loaded device spec %s", spec.name)
    return spec


def dump_device_spec(spec, destination=None):
    """Write a device specification as YAML document.

    Loading the written document gives a spec equal to `spec`.

    Parameters
    ----------
    spec : :class:`DeviceSpec`
        The specification to write.

    destination : str, path-like, file-like object or None
        Where to write to. If None, the document is returned as string.
    """
    return dump_document(spec.to_dict(), destination)


def spec_digest(spec):
    """SHA-256 of the canonical JSON form of a device specification."""
    canonical = json.dumps(spec.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def attainable_flops(spec, oi, engine, bandwidth_efficiency=1.0):
    """Roofline of an engine at a given operational intensity.

    Parameters
    ----------
    spec : :class:`DeviceSpec`
        The device.

    oi : float
        Operational intensity in operations per byte, non-negative.
        May be infinite for workloads without memory traffic.

    engine : {'matrix', 'vector'}
        Which compute roof applies.

    bandwidth_efficiency : float, optional, default: 1.0
        Fraction of peak bandwidth the workload can sustain.

    Returns
    -------
    point : :class:`RooflinePoint`
        ``min(peak, oi * efficiency * peak_bandwidth)``; ties are
        reported as compute-bound.
    """
    if not oi >= 0:
        raise ValueError("oi must be non-negative, but got {!r}".format(oi))
    if not 0 < bandwidth_efficiency <= 1:
        raise ValueError("bandwidth_efficiency must be within (0; 1], but got {!r}".format(
            bandwidth_efficiency))

    if engine == "matrix":
        peak = spec.matrix_peak_flops
    elif engine == "vector":
        peak = spec.vector_engine.aggregate_peak_flops
    else:
        raise ValueError("engine must be one of {}, but got {!r}".format(", ".join(ENGINES), engine))

    memory_roof = oi * bandwidth_efficiency * spec.memory.peak_bandwidth
    if peak <= memory_roof:
        return RooflinePoint(operational_intensity=oi, attainable=peak, bound="compute")
    return RooflinePoint(operational_intensity=oi, attainable=memory_roof, bound="memory")
