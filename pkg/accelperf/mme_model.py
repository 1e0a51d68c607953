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
from dataclasses import dataclass, field
import logging
import re
import warnings

from .device_model import attainable_flops
from .util import ceil_div, check_positive

__all__ = [
    'GemmResult',
    'GemmShape',
    'MODES',
    'MacGeometry',
    'enumerate_geometries',
    'gemm_cycles',
    'gemm_perf',
    'operational_intensity',
    'parse_geometry',
    'select_geometry',
]

LOG = logging.getLogger(__package__)

MODES = ("configurable", "fixed")

_LABEL_PAT = re.compile(r"^\s*(\d+)\s*x\s*\(\s*(\d+)\s*x\s*(\d+)\s*\)\s*$")


@dataclass(frozen=True)
class GemmShape:
    """Matrix multiplication of an (m x k) by a (k x n) matrix.

    ``batch`` independent problems of the same shape are executed
    as a single batched GEMM.
    """
    m: int
    k: int
    n: int
    element_bytes: int = 2
    batch: int = 1

    def __post_init__(self):
        for name in ("m", "k", "n", "element_bytes", "batch"):
            check_positive(getattr(self, name), name, integral=True)

    @property
    def macs(self):
        return self.batch * self.m * self.n * self.k

    @property
    def bytes(self):
        """Bytes moved when each operand and the result cross memory once."""
        return self.batch * self.element_bytes * (
            self.m * self.k + self.k * self.n + self.m * self.n)


@dataclass(frozen=True)
class MacGeometry:
    """Active MAC arrays of the matrix engine.

    Attributes
    ----------
    units : tuple of (int, int)
        ``(height, width)`` of every active array. All arrays must have
        the same shape.
    label : str
        Name of the geometry, e.g. ``2x(256x256)``. Generated if empty.
    """
    units: tuple
    label: str = field(default="", compare=False)

    def __post_init__(self):
        units = tuple(tuple(int(v) for v in unit) for unit in self.units)
        if len(units) == 0:
            raise ValueError("geometry must contain at least one unit")
        for unit in units:
            if len(unit) != 2 or min(unit) < 1:
                raise ValueError("unit dimensions must be positive (height, width) pairs, "
                                 "but got {!r}".format(unit))
        if len(set(units)) != 1:
            raise ValueError("all units of a geometry must have the same shape, "
                             "but got {!r}".format(units))
        object.__setattr__(self, "units", units)
        if not self.label:
            h, w = units[0]
            object.__setattr__(self, "label", "{}x({}x{})".format(len(units), h, w))

    @property
    def height(self):
        return self.units[0][0]

    @property
    def width(self):
        return self.units[0][1]

    @property
    def unit_count(self):
        return len(self.units)

    @property
    def mac_count(self):
        return sum(h * w for h, w in self.units)


@dataclass(frozen=True)
class GemmResult:
    cycles: int
    achieved_flops: float
    utilization: float
    bound: str
    geometry_used: MacGeometry
    time: float
    oi: float
    active_utilization: float
    mode: str = "fixed"


def parse_geometry(label):
    """Create a geometry from a label of the form ``<count>x(<height>x<width>)``."""
    match = _LABEL_PAT.match(label)
    if match is None:
        raise ValueError("geometry label must have the form '<count>x(<height>x<width>)', "
                         "but got {!r}".format(label))
    count, height, width = map(int, match.groups())
    return MacGeometry(units=((height, width),) * count)


def operational_intensity(shape):
    """Flops per byte of a GEMM, ``2mnk / (element_bytes (mk + kn + mn))``."""
    return 2.0 * shape.macs / shape.bytes


def _powers_of_two_between(low, high):
    values = []
    v = high
    while v >= low:
        values.append(v)
        v //= 2
    return values


def enumerate_geometries(spec):
    """Configurable geometry menu of a device.

    An explicit ``matrix_engine.geometries`` list in the spec takes
    precedence. Otherwise the menu starts with all arrays side by side.
    A reconfigurable engine adds single arrays that merge the whole
    MAC budget into one rectangle (most square first, taller before
    wider), then power-of-two sub-rectangles of one array down to
    ``min_unit_dim`` (most MACs first, taller before wider).

    Parameters
    ----------
    spec : :class:`accelperf.device_model.DeviceSpec`
        The device.

    Returns
    -------
    menu : list of :class:`MacGeometry`
        Deterministically ordered, without duplicates.
    """
    engine = spec.matrix_engine
    if engine.geometries:
        return [MacGeometry(units=units) for units in engine.geometries]

    menu = [MacGeometry(units=((engine.unit_height, engine.unit_width),) * engine.unit_count)]
    if engine.reconfigurable:
        budget = engine.mac_budget
        merged = []
        h = engine.min_unit_dim
        while h * engine.min_unit_dim <= budget:
            if budget % h == 0:
                merged.append((h, budget // h))
            h *= 2
        merged.sort(key=lambda hw: (abs(hw[0].bit_length() - hw[1].bit_length()), -hw[0]))
        menu.extend(MacGeometry(units=(hw,)) for hw in merged)

        subs = [(h, w)
                for h in _powers_of_two_between(engine.min_unit_dim, engine.unit_height)
                for w in _powers_of_two_between(engine.min_unit_dim, engine.unit_width)]
        subs.sort(key=lambda hw: (-hw[0] * hw[1], -hw[0]))
        menu.extend(MacGeometry(units=(hw,)) for hw in subs)

    unique = []
    seen = set()
    for geometry in menu:
        if geometry.units not in seen:
            seen.add(geometry.units)
            unique.append(geometry)
    return unique


def _makespan(shape, geometry, fill_model):
    h, w = geometry.height, geometry.width
    tiles = shape.batch * ceil_div(shape.m, h) * ceil_div(shape.n, w)
    # remainder tiles go to lower-indexed units, the first unit finishes last
    tiles_per_unit = ceil_div(tiles, geometry.unit_count)
    fill = h + w - 1 if fill_model == "h_plus_w" else 0
    return tiles_per_unit * shape.k + fill


def gemm_cycles(shape, geometry, spec, mode="fixed"):
    """Cycles and throughput of a GEMM on a given geometry.

    Every array computes output tiles of its own size back to back,
    accumulating over k for k cycles per tile; the skew fill of
    ``height + width - 1`` cycles is paid once per array if the
    calibration selects the ``h_plus_w`` fill model.

    Parameters
    ----------
    shape : :class:`GemmShape`
        The problem.

    geometry : :class:`MacGeometry`
        Active MAC arrays.

    spec : :class:`accelperf.device_model.DeviceSpec`
        The device.

    mode : str, optional, default: 'fixed'
        Recorded in the result.

    Returns
    -------
    result : :class:`GemmResult`
        Utilization is relative to the peak of the full array, including
        power-gated MACs. ``active_utilization`` is relative to the MACs
        of `geometry` only and ignores memory bandwidth.
    """
    budget = spec.matrix_engine.mac_budget
    if geometry.mac_count > budget:
        raise ValueError("geometry {} uses {} MACs, exceeding the MAC budget of {}".format(
            geometry.label, geometry.mac_count, budget))

    cal = spec.calibration
    cycles = _makespan(shape, geometry, cal.mme_fill_model)
    peak = spec.matrix_peak_flops
    compute_flops = shape.macs / (cycles * budget) * peak

    oi = operational_intensity(shape)
    roof = attainable_flops(spec, oi, "matrix", bandwidth_efficiency=cal.matrix_bandwidth_efficiency)
    if compute_flops <= roof.attainable:
        achieved, bound = compute_flops, "compute"
    else:
        achieved, bound = roof.attainable, "memory"

    return GemmResult(
        cycles=cycles,
        achieved_flops=achieved,
        utilization=achieved / peak,
        bound=bound,
        geometry_used=geometry,
        time=2.0 * shape.macs / achieved,
        oi=oi,
        active_utilization=shape.macs / (cycles * geometry.mac_count),
        mode=mode,
    )


def select_geometry(shape, spec, menu=None):
    """Geometry with the fewest cycles for a GEMM.

    Ties are broken by fewer active MACs, then by larger height,
    then by position in the menu.

    Parameters
    ----------
    shape : :class:`GemmShape`
        The problem.

    spec : :class:`accelperf.device_model.DeviceSpec`
        The device.

    menu : list of :class:`MacGeometry`, optional
        Candidates. Defaults to :func:`enumerate_geometries`.

    Returns
    -------
    geometry : :class:`MacGeometry`
    """
    if menu is None:
        menu = enumerate_geometries(spec)
    if len(menu) == 0:
        raise ValueError("geometry menu must not be empty")

    fill_model = spec.calibration.mme_fill_model

    def sort_key(item):
        index, geometry = item
        return (_makespan(shape, geometry, fill_model), geometry.mac_count, -geometry.height, index)

    _, best = min(enumerate(menu), key=sort_key)
    return best


def gemm_perf(shape, spec, mode="configurable", geometry=None):
    """Performance of a GEMM with a configurable or a fixed geometry.

    Parameters
    ----------
    shape : :class:`GemmShape`
        The problem.

    spec : :class:`accelperf.device_model.DeviceSpec`
        The device.

    mode : {'configurable', 'fixed'}, optional, default: 'configurable'
        With 'configurable' the geometry is chosen by :func:`select_geometry`.
        With 'fixed' `geometry` is used, defaulting to the first menu entry,
        i.e. all arrays side by side.

    geometry : :class:`MacGeometry` or str, optional
        Geometry or its label for mode 'fixed'.

    Returns
    -------
    result : :class:`GemmResult`
    """
    if mode == "configurable":
        if geometry is not None:
            raise ValueError("geometry can only be specified with mode 'fixed'")
        geometry = select_geometry(shape, spec)
    elif mode == "fixed":
        if geometry is None:
            geometry = enumerate_geometries(spec)[0]
        elif isinstance(geometry, str):
            geometry = parse_geometry(geometry)
        if geometry.mac_count > spec.matrix_engine.mac_budget:
            raise ValueError("geometry {} uses {} MACs, exceeding the MAC budget of {}".format(
                geometry.label, geometry.mac_count, spec.matrix_engine.mac_budget))
        if geometry not in enumerate_geometries(spec):
            warnings.warn("geometry {} is not in the menu of device {}".format(
                geometry.label, spec.name), stacklevel=2)
    else:
        raise ValueError("mode must be one of {}, but got {!r}".format(", ".join(MODES), mode))

    LOG.debug("gemm %dx%dx%d (batch %d) on %s", shape.m, shape.k, shape.n, shape.batch, geometry.label)
    return gemm_cycles(shape, geometry, spec, mode=mode)
