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
"""Assertions shared by the test-suite and by users validating their own specs."""
from .device_model import attainable_flops

__all__ = ['assert_roofline_dominance']

_ROOFLINE_COLUMNS = {
    "gemm_sweep": ("achieved_flops", "matrix"),
    "stream_sweep": ("flops", "vector"),
}


def assert_roofline_dominance(report, specs, rtol=1e-12):
    """Assert that no row of a report exceeds the roofline of its device.

    Reports of kinds without a flops column pass trivially.

    Parameters
    ----------
    report : :class:`accelperf.scenario_runner.ReportTable`
        Output of :func:`accelperf.scenario_runner.run_scenario`.

    specs : dict
        Device name to :class:`accelperf.device_model.DeviceSpec`.

    rtol : float
        Relative tolerance for rounding.
    """
    kind = report.metadata["kind"]
    if kind not in _ROOFLINE_COLUMNS:
        return
    column, engine = _ROOFLINE_COLUMNS[kind]
    for name in (column, "oi"):
        if name not in report.data.columns:
            raise AssertionError("report has no column {!r}".format(name))

    for device, oi, flops in report.data[["device", "oi", column]].itertuples(index=False, name=None):
        roof = attainable_flops(specs[device], oi, engine).attainable
        if flops > roof * (1.0 + rtol):
            raise AssertionError("{} on {}: {:.6g} flops at oi {:.6g} exceeds the roofline {:.6g}".format(
                report.metadata["scenario"], device, flops, oi, roof))
