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
from dataclasses import dataclass, replace
import logging
import numbers
import os

from joblib import Parallel, delayed
import numpy
import pandas
from scipy.stats import gmean
from sklearn.model_selection import ParameterGrid

from .device_model import DeviceSpec, attainable_flops, spec_digest
from .exceptions import ScenarioError, SpecValidationError
from .interconnect_model import CollectiveRequest, collective_time
from .io import load_document
from .memory_model import GatherWorkload, gather_scatter_utilization
from .mme_model import GemmShape, gemm_perf
from .operator_models import EmbeddingConfig, PagedAttentionConfig, embedding_lookup, paged_attention
from .presets import load_device, resolve_scenario_path
from .tpc_model import kernel_presets, multi_core_throughput

__all__ = [
    'KINDS',
    'ReportTable',
    'ScenarioSpec',
    'compare_devices',
    'compare_reports',
    'load_scenario',
    'run_scenario',
]

LOG = logging.getLogger(__package__)


def _evaluate_gemm(spec, p):
    if p["shape"] is not None:
        m, k, n = map(int, p["shape"].split("x"))
    else:
        m, k, n = p["m"], p["k"], p["n"]
    shape = GemmShape(m, k, n, element_bytes=p["element_bytes"], batch=p["batch"])
    res = gemm_perf(shape, spec, mode=p["mode"], geometry=p["geometry"])
    roof = attainable_flops(spec, res.oi, "matrix")
    return OrderedDict([
        ("geometry", res.geometry_used.label),
        ("cycles", res.cycles),
        ("utilization", res.utilization),
        ("active_utilization", res.active_utilization),
        ("achieved_flops", res.achieved_flops),
        ("attainable_flops", roof.attainable),
        ("oi", res.oi),
        ("bound", res.bound),
        ("time", res.time),
    ])


def _evaluate_stream(spec, p):
    try:
        preset = kernel_presets()[p["kernel"]]
    except KeyError:
        raise ValueError("kernel must be one of {}, but got {!r}".format(
            ", ".join(kernel_presets()), p["kernel"]))
    kernel = replace(
        preset,
        unroll=p["unroll"],
        access_bytes=p["access_bytes"],
        element_bytes=p["element_bytes"],
        extra_ops_per_element=p["extra_ops_per_element"],
    )
    cores = p["cores"] if p["cores"] is not None else spec.vector_engine.core_count
    res = multi_core_throughput(kernel, cores, spec)
    roof = attainable_flops(spec, res.oi, "vector")
    return OrderedDict([
        ("flops", res.flops),
        ("bytes_per_sec", res.bytes_per_sec),
        ("oi", res.oi),
        ("bound", res.bound),
        ("attainable_flops", roof.attainable),
        ("time", res.time),
    ])


def _evaluate_gather(spec, p):
    workload = GatherWorkload(
        vector_bytes=p["vector_bytes"],
        num_vectors=p["num_vectors"],
        fraction_accessed=p["fraction_accessed"],
        direction=p["direction"],
        pattern=p["pattern"],
    )
    res = gather_scatter_utilization(workload, spec)
    return OrderedDict([
        ("utilization", res.utilization),
        ("useful_bytes_per_sec", res.useful_bytes_per_sec),
        ("fetched_bytes_per_sec", res.fetched_bytes_per_sec),
        ("time", res.time),
    ])


def _evaluate_collective(spec, p):
    req = CollectiveRequest(op=p["collective"], payload_bytes=p["payload_bytes"],
                            participants=p["participants"])
    res = collective_time(req, spec.interconnect)
    return OrderedDict([
        ("time", res.time),
        ("alg_bandwidth", res.alg_bandwidth),
        ("bus_bandwidth", res.bus_bandwidth),
        ("utilization", res.utilization),
    ])


def _evaluate_embedding(spec, p):
    cfg = EmbeddingConfig(
        num_tables=p["num_tables"],
        rows_per_table=p["rows_per_table"],
        vector_bytes=p["vector_bytes"],
        pooling_factor=p["pooling_factor"],
        batch=p["batch"],
        unroll=p["unroll"],
    )
    res = embedding_lookup(p["layout"], cfg, spec)
    return OrderedDict([
        ("time", res.time),
        ("bandwidth_utilization", res.bandwidth_utilization),
        ("achieved_bandwidth", res.achieved_bandwidth),
        ("launches", res.launches),
    ])


def _evaluate_paged_attention(spec, p):
    cfg = PagedAttentionConfig(
        batch=p["batch"],
        seq_len=p["seq_len"],
        block_size=p["block_size"],
        head_dim=p["head_dim"],
        num_query_heads=p["num_query_heads"],
        num_kv_heads=p["num_kv_heads"],
        element_bytes=p["element_bytes"],
        padded_fraction=p["padded_fraction"],
    )
    res = paged_attention(p["variant"], cfg, spec)
    return OrderedDict([
        ("time", res.time),
        ("gather_time", res.gather_time),
        ("gemm_time", res.gemm_time),
        ("overlap_achieved", res.overlap_achieved),
        ("tokens_per_sec", res.tokens_per_sec),
    ])


_REQUIRED = object()

# kind -> (evaluator, {axis: (type, default)}, metrics)
KINDS = OrderedDict([
    ("gemm_sweep", (_evaluate_gemm, OrderedDict([
        ("shape", ("shape", None)),
        ("m", (int, None)),
        ("k", (int, None)),
        ("n", (int, None)),
        ("batch", (int, 1)),
        ("element_bytes", (int, 2)),
        ("mode", (str, "configurable")),
        ("geometry", (str, None)),
    ]), ("geometry", "cycles", "utilization", "active_utilization", "achieved_flops",
         "attainable_flops", "oi", "bound", "time"))),
    ("stream_sweep", (_evaluate_stream, OrderedDict([
        ("kernel", (str, _REQUIRED)),
        ("access_bytes", (int, 256)),
        ("unroll", (int, 1)),
        ("cores", (int, None)),
        ("extra_ops_per_element", (float, 0.0)),
        ("element_bytes", (int, 2)),
    ]), ("flops", "bytes_per_sec", "oi", "bound", "attainable_flops", "time"))),
    ("gather_sweep", (_evaluate_gather, OrderedDict([
        ("vector_bytes", (int, _REQUIRED)),
        ("fraction_accessed", (float, 1.0)),
        ("direction", (str, "gather")),
        ("pattern", (str, "random")),
        ("num_vectors", (int, 4000000)),
    ]), ("utilization", "useful_bytes_per_sec", "fetched_bytes_per_sec", "time"))),
    ("collective_sweep", (_evaluate_collective, OrderedDict([
        ("collective", (str, _REQUIRED)),
        ("payload_bytes", (int, _REQUIRED)),
        ("participants", (int, _REQUIRED)),
    ]), ("time", "alg_bandwidth", "bus_bandwidth", "utilization"))),
    ("embedding_sweep", (_evaluate_embedding, OrderedDict([
        ("layout", (str, _REQUIRED)),
        ("num_tables", (int, _REQUIRED)),
        ("vector_bytes", (int, _REQUIRED)),
        ("pooling_factor", (int, _REQUIRED)),
        ("batch", (int, _REQUIRED)),
        ("rows_per_table", (int, 1000000)),
        ("unroll", (int, 4)),
    ]), ("time", "bandwidth_utilization", "achieved_bandwidth", "launches"))),
    ("paged_attention_sweep", (_evaluate_paged_attention, OrderedDict([
        ("variant", (str, _REQUIRED)),
        ("batch", (int, _REQUIRED)),
        ("seq_len", (int, _REQUIRED)),
        ("padded_fraction", (float, 0.0)),
        ("block_size", (int, 128)),
        ("head_dim", (int, 128)),
        ("num_query_heads", (int, 32)),
        ("num_kv_heads", (int, 8)),
        ("element_bytes", (int, 2)),
    ]), ("time", "gather_time", "gemm_time", "overlap_achieved", "tokens_per_sec"))),
])


@dataclass(frozen=True)
class ScenarioSpec:
    """A sweep over the cartesian product of its axes.

    Attributes
    ----------
    name : str
        Name of the scenario.
    kind : str
        One of :data:`KINDS`.
    devices : tuple
        Names or paths of one or two device specs.
    axes : tuple of (str, tuple)
        Axis names with their values, in declaration order.
    columns : tuple or None
        Metrics to report. All metrics of the kind if None.
    description : str
        Free text.
    """
    name: str
    kind: str
    devices: tuple
    axes: tuple
    columns: tuple = None
    description: str = ""

    @property
    def axis_names(self):
        return [name for name, _ in self.axes]

    @property
    def metrics(self):
        all_metrics = KINDS[self.kind][2]
        return list(self.columns) if self.columns is not None else list(all_metrics)

    @property
    def n_rows(self):
        return int(numpy.prod([len(values) for _, values in self.axes]))


class ReportTable:
    """Result of a scenario.

    Attributes
    ----------
    data : :class:`pandas.DataFrame`
        One row per grid point: axis columns followed by metric columns.
    axes : list of str
        Names of the axis columns.
    metrics : list of str
        Names of the metric columns.
    metadata : dict
        Scenario name, tool version and, for every device, the digest
        of its spec and the calibration constants used.
    summary : dict or None
        Geometric means of the ratio columns of a comparison.
    """

    def __init__(self, data, axes, metrics, metadata, summary=None):
        self.data = data
        self.axes = list(axes)
        self.metrics = list(metrics)
        self.metadata = metadata
        self.summary = summary

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        return "ReportTable(scenario={!r}, rows={}, columns={})".format(
            self.metadata.get("scenario"), len(self), list(self.data.columns))

    def to_frame(self, include_summary=False):
        """Data as DataFrame, optionally followed by a ``geomean`` summary row."""
        if not include_summary or self.summary is None:
            return self.data
        row = {col: "" for col in self.data.columns}
        row[self.axes[0]] = "geomean"
        row.update(self.summary)
        return pandas.concat([self.data, pandas.DataFrame([row], columns=self.data.columns)],
                             ignore_index=True)


def _expand_axis(name, raw):
    if isinstance(raw, dict):
        if set(raw) == {"range"}:
            params = raw["range"]
            start, stop, step = params.get("start"), params.get("stop"), params.get("step", 1)
            if not all(isinstance(v, numbers.Real) for v in (start, stop, step)) or step <= 0:
                raise ScenarioError("axis {!r}: range needs numeric start, stop and positive step".format(name))
            count = int(numpy.floor((stop - start) / step + 1e-9)) + 1
            return [start + i * step for i in range(max(count, 0))]
        if set(raw) == {"geometric"}:
            params = raw["geometric"]
            start, stop, factor = params.get("start"), params.get("stop"), params.get("factor", 2)
            if not all(isinstance(v, numbers.Real) for v in (start, stop, factor)) or start <= 0 or factor <= 1:
                raise ScenarioError("axis {!r}: geometric needs positive start, stop and factor > 1".format(name))
            values = []
            v = start
            while v <= stop:
                values.append(v)
                v = v * factor
            return values
        raise ScenarioError("axis {!r}: generator must be 'range' or 'geometric'".format(name))
    if isinstance(raw, (list, tuple)):
        return list(raw)
    return [raw]


def _coerce(name, kind, value):
    if kind is int:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if isinstance(value, bool) or not isinstance(value, numbers.Integral):
            raise ScenarioError("axis {!r} expects integers, but got {!r}".format(name, value))
        return int(value)
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, numbers.Real):
            raise ScenarioError("axis {!r} expects numbers, but got {!r}".format(name, value))
        return float(value)
    if kind == "shape":
        if isinstance(value, str):
            parts = value.split("x")
        elif isinstance(value, (list, tuple)):
            parts = value
        else:
            parts = ()
        try:
            dims = [int(v) for v in parts]
        except (TypeError, ValueError):
            dims = ()
        if len(dims) != 3:
            raise ScenarioError("axis {!r} expects [m, k, n] triples, but got {!r}".format(name, value))
        return "x".join(map(str, dims))
    if not isinstance(value, str):
        raise ScenarioError("axis {!r} expects strings, but got {!r}".format(name, value))
    return value


def _parse_axes(kind, raw_axes):
    schema = KINDS[kind][1]
    if not isinstance(raw_axes, dict) or len(raw_axes) == 0:
        raise ScenarioError("axes must be a non-empty mapping")

    axes = []
    for name, raw in raw_axes.items():
        if name not in schema:
            raise ScenarioError("unknown axis {!r} for kind {}; known axes are {}".format(
                name, kind, ", ".join(schema)))
        values = _expand_axis(name, raw)
        if len(values) == 0:
            raise ScenarioError("axis {!r} is empty".format(name))
        axes.append((name, tuple(_coerce(name, schema[name][0], v) for v in values)))

    declared = {name for name, _ in axes}
    for name, (_, default) in schema.items():
        if default is _REQUIRED and name not in declared:
            raise ScenarioError("kind {} requires axis {!r}".format(kind, name))
    if kind == "gemm_sweep":
        if "shape" in declared:
            if declared & {"m", "k", "n"}:
                raise ScenarioError("axis 'shape' cannot be combined with 'm', 'k' or 'n'")
        elif not {"m", "k", "n"} <= declared:
            raise ScenarioError("kind gemm_sweep requires axis 'shape' or axes 'm', 'k' and 'n'")
    return tuple(axes)


def load_scenario(source):
    """Load a scenario document.

    Parameters
    ----------
    source : str, path-like, file-like object or dict
        Path to a YAML file, name of a bundled scenario, open file handle
        or parsed mapping. The document has keys ``name``, ``kind``,
        ``devices``, ``axes`` and optionally ``columns`` and
        ``description``. Axis values are lists, scalars, or generators
        ``{range: {start, stop, step}}`` and
        ``{geometric: {start, stop, factor}}``, which include `stop`.

    Returns
    -------
    scenario : :class:`ScenarioSpec`
    """
    if isinstance(source, str) and not os.path.isfile(source):
        source = resolve_scenario_path(source)
    try:
        doc = load_document(source)
    except SpecValidationError as e:
        raise ScenarioError(str(e)) from e

    allowed = {"name", "kind", "devices", "axes", "columns", "description"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ScenarioError("unknown key {!r} in scenario".format(unknown[0]))

    kind = doc.get("kind")
    if kind not in KINDS:
        raise ScenarioError("kind must be one of {}, but got {!r}".format(", ".join(KINDS), kind))

    devices = doc.get("devices", ())
    if isinstance(devices, str):
        devices = [devices]
    if not isinstance(devices, (list, tuple)) or len(devices) > 2 \
            or not all(isinstance(d, str) for d in devices):
        raise ScenarioError("devices must be a list of at most two device names")

    columns = doc.get("columns")
    if columns is not None:
        unknown = [c for c in columns if c not in KINDS[kind][2]]
        if unknown or len(columns) == 0:
            raise ScenarioError("columns must be a non-empty subset of {}, but got {!r}".format(
                ", ".join(KINDS[kind][2]), columns))
        columns = tuple(columns)

    return ScenarioSpec(
        name=str(doc.get("name", "unnamed")),
        kind=kind,
        devices=tuple(devices),
        axes=_parse_axes(kind, doc.get("axes")),
        columns=columns,
        description=str(doc.get("description", "")).strip(),
    )


def _resolve_devices(scenario, devices):
    if devices is None:
        devices = scenario.devices
    if len(devices) == 0:
        raise ScenarioError("scenario {} does not reference a device".format(scenario.name))

    specs = []
    for device in devices:
        if isinstance(device, DeviceSpec):
            specs.append(device)
        else:
            LOG.debug("resolving device %s", device)
            specs.append(load_device(device))
    return specs


def _evaluate_row(kind, spec, params):
    evaluator, schema, _ = KINDS[kind]
    values = {name: default for name, (_, default) in schema.items() if default is not _REQUIRED}
    values.update(params)
    try:
        return evaluator(spec, values)
    except ScenarioError:
        raise
    except ValueError as e:
        raise ScenarioError("{} on {} with {}: {}".format(
            kind, spec.name, ", ".join("{}={}".format(k, params[k]) for k in sorted(params)), e)) from e


def _device_metadata(spec):
    cal = spec.calibration
    mem = spec.memory
    scatter_beta = mem.scatter_beta if mem.scatter_beta is not None else mem.random_access_beta
    return OrderedDict([
        ("name", spec.name),
        ("spec_digest", spec_digest(spec)),
        ("calibration", OrderedDict([
            ("stream_efficiency", cal.stream_efficiency),
            ("kernel_launch_overhead", cal.kernel_launch_overhead),
            ("mme_fill_model", cal.mme_fill_model),
            ("pipeline_overlap", cal.pipeline_overlap),
            ("matrix_bandwidth_efficiency", cal.matrix_bandwidth_efficiency),
            # fitted constants kept outside the calibration section of a spec
            ("random_access_beta", mem.random_access_beta),
            ("scatter_beta", scatter_beta),
            ("small_transfer_overhead_bytes", mem.small_transfer_overhead_bytes),
            ("mean_latency", mem.mean_latency),
            ("alpha_latency", spec.interconnect.alpha_latency),
        ])),
    ])


def _metadata(scenario, specs, n_rows):
    from . import __version__

    return OrderedDict([
        ("scenario", scenario.name),
        ("kind", scenario.kind),
        ("description", scenario.description),
        ("tool_version", __version__),
        ("devices", [_device_metadata(spec) for spec in specs]),
        ("axes", OrderedDict((name, list(values)) for name, values in scenario.axes)),
        ("n_rows", n_rows),
    ])


def run_scenario(scenario, devices=None, n_jobs=None):
    """Evaluate every point of a scenario's axis grid.

    Parameters
    ----------
    scenario : :class:`ScenarioSpec`
        The scenario.

    devices : list of str or :class:`accelperf.device_model.DeviceSpec`, optional
        Devices to use instead of those referenced by the scenario.

    n_jobs : int, optional
        Number of jobs to evaluate rows in parallel. Row order does not
        depend on it.

    Returns
    -------
    report : :class:`ReportTable`
        Columns ``device``, the axes, then the requested metrics. Rows
        are ordered by device, then lexicographically over the axis
        values in declaration order.
    """
    specs = _resolve_devices(scenario, devices)
    empty = [name for name, values in scenario.axes if len(values) == 0]
    if len(scenario.axes) == 0 or empty:
        raise ScenarioError("scenario {} has an empty axis grid".format(scenario.name))
    grid = ParameterGrid(OrderedDict((name, list(values)) for name, values in scenario.axes))

    LOG.info("running scenario %s (%s) with %d rows on %s", scenario.name, scenario.kind,
             len(grid) * len(specs), ", ".join(s.name for s in specs))

    axis_names = scenario.axis_names
    tasks = []
    for spec in specs:
        points = sorted(grid, key=lambda params: [params[name] for name in axis_names])
        tasks.extend((spec, params) for params in points)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_evaluate_row)(scenario.kind, spec, params) for spec, params in tasks)

    metrics = scenario.metrics
    records = []
    for (spec, params), result in zip(tasks, results):
        row = [spec.name] + [params[name] for name in axis_names] + [result[m] for m in metrics]
        records.append(row)
    data = pandas.DataFrame.from_records(records, columns=["device"] + axis_names + metrics)

    LOG.info("finished scenario %s", scenario.name)
    return ReportTable(data, ["device"] + axis_names, metrics, _metadata(scenario, specs, len(data)))


def compare_reports(report_a, report_b):
    """Join two single-device reports of the same scenario.

    Every metric ``x`` becomes columns ``x_a`` and ``x_b``; numeric
    metrics additionally get ``x_ratio = x_a / x_b``. The summary holds
    the geometric mean of each ratio column over its finite, positive
    values.

    Returns
    -------
    report : :class:`ReportTable`
    """
    axes = [a for a in report_a.axes if a != "device"]
    if axes != [a for a in report_b.axes if a != "device"] or report_a.metrics != report_b.metrics:
        raise ScenarioError("reports have different axes or metrics")
    frame_a = report_a.data.reset_index(drop=True)
    frame_b = report_b.data.reset_index(drop=True)
    if len(frame_a) != len(frame_b) or not frame_a[axes].equals(frame_b[axes]):
        raise ScenarioError("reports have mismatched axis values")

    data = frame_a[axes].copy()
    summary = OrderedDict()
    with numpy.errstate(divide="ignore", invalid="ignore"):
        for metric in report_a.metrics:
            a = frame_a[metric]
            b = frame_b[metric]
            data[metric + "_a"] = a
            data[metric + "_b"] = b
            if pandas.api.types.is_numeric_dtype(a) and pandas.api.types.is_numeric_dtype(b):
                ratio = a.astype(float) / b.astype(float)
                data[metric + "_ratio"] = ratio
                valid = ratio[numpy.isfinite(ratio) & (ratio > 0)]
                summary[metric + "_ratio"] = float(gmean(valid)) if len(valid) > 0 else float("nan")

    metrics = [c for c in data.columns if c not in axes]
    metadata = OrderedDict(report_a.metadata)
    metadata["devices"] = report_a.metadata["devices"] + report_b.metadata["devices"]
    return ReportTable(data, axes, metrics, metadata, summary=summary)


def compare_devices(scenario, spec_a, spec_b, n_jobs=None):
    """Run a scenario on two devices and report per-row ratios A / B.

    Parameters
    ----------
    scenario : :class:`ScenarioSpec`
        The scenario. Its device references are ignored.

    spec_a, spec_b : str or :class:`accelperf.device_model.DeviceSpec`
        The devices to compare.

    n_jobs : int, optional
        Number of parallel jobs.

    Returns
    -------
    report : :class:`ReportTable`
        See :func:`compare_reports`.
    """
    report_a = run_scenario(scenario, devices=[spec_a], n_jobs=n_jobs)
    report_b = run_scenario(scenario, devices=[spec_b], n_jobs=n_jobs)
    return compare_reports(report_a, report_b)
