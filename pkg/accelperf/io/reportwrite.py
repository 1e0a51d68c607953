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
import json
import math
import os

import numpy

__all__ = ['REPORT_FORMATS', 'emit_report', 'write_report']

REPORT_FORMATS = ("csv", "json")


def _to_native(value):
    if isinstance(value, numpy.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        # JSON has no literal for these
        return repr(value)
    return value


def _records(frame):
    columns = list(frame.columns)
    return [
        dict(zip(columns, map(_to_native, row)))
        for row in frame.itertuples(index=False, name=None)
    ]


def emit_report(report, format="csv"):
    """Serialize a report table.

    Parameters
    ----------
    report : :class:`accelperf.scenario_runner.ReportTable`
        The report to serialize.

    format : {'csv', 'json'}, optional, default: 'csv'
        CSV contains the header and the data rows, followed by the summary
        row if the report has one. JSON is an object with keys
        ``metadata`` and ``rows`` (and ``summary`` for comparisons).

    Returns
    -------
    payload : bytes
        UTF-8 encoded report. Identical reports give identical bytes.
    """
    if format == "csv":
        frame = report.to_frame(include_summary=True)
        text = frame.to_csv(index=False, lineterminator="\n", float_format=None)
    elif format == "json":
        obj = {"metadata": report.metadata, "rows": _records(report.data)}
        if report.summary is not None:
            obj["summary"] = {k: _to_native(v) for k, v in report.summary.items()}
        text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    else:
        raise ValueError("format must be one of {}, but got {!r}".format(
            ", ".join(REPORT_FORMATS), format))
    return text.encode("utf-8")


def write_report(report, destination, format="csv"):
    """Write :func:`emit_report` output to a path or binary file handle."""
    payload = emit_report(report, format=format)
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, 'wb') as fp:
            fp.write(payload)
    else:
        destination.write(payload)
