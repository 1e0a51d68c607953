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
import argparse
import logging
import sys

from . import show_versions
from .calibration import calibration_report
from .io import REPORT_FORMATS, emit_report, write_report
from .presets import list_presets, load_device
from .scenario_runner import compare_devices, load_scenario, run_scenario

__all__ = ['build_parser', 'main']

LOG = logging.getLogger(__package__)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="accelperf",
        description="Analytical performance models of AI accelerators.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="log progress (twice for debug output)")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    run = sub.add_parser("run", help="evaluate a scenario")
    run.add_argument("scenario", help="scenario file or bundled scenario name")
    run.add_argument("--device", action="append", default=None,
                     help="device spec file or preset name, replaces the scenario's devices; "
                          "may be given twice")
    _add_output_arguments(run)

    compare = sub.add_parser("compare", help="evaluate a scenario on two devices and report ratios")
    compare.add_argument("scenario", help="scenario file or bundled scenario name")
    compare.add_argument("--device-a", default=None, help="first device, defaults to the scenario's first")
    compare.add_argument("--device-b", default=None, help="second device, defaults to the scenario's second")
    _add_output_arguments(compare)

    sub.add_parser("list-presets", help="list bundled device specs and scenarios")

    calibrate = sub.add_parser("calibrate", help="refit calibration constants of a device")
    calibrate.add_argument("device", help="device spec file or preset name")

    sub.add_parser("show-versions", help="print versions of accelperf and its dependencies")
    return parser


def _add_output_arguments(parser):
    parser.add_argument("--format", choices=REPORT_FORMATS, default="csv")
    parser.add_argument("--out", default=None, help="output file, standard output if omitted")
    parser.add_argument("--n-jobs", type=int, default=None, help="number of parallel jobs")


def _write(report, args):
    if args.out is None:
        sys.stdout.write(emit_report(report, args.format).decode("utf-8"))
        sys.stdout.flush()
    else:
        write_report(report, args.out, format=args.format)
        LOG.info("wrote %s", args.out)


def _run(args):
    scenario = load_scenario(args.scenario)
    report = run_scenario(scenario, devices=args.device, n_jobs=args.n_jobs)
    _write(report, args)


def _compare(args):
    scenario = load_scenario(args.scenario)
    defaults = list(scenario.devices) + [None, None]
    device_a = args.device_a or defaults[0]
    device_b = args.device_b or defaults[1]
    if device_a is None or device_b is None:
        raise ValueError("compare needs two devices, pass --device-a and --device-b")
    report = compare_devices(scenario, load_device(device_a), load_device(device_b), n_jobs=args.n_jobs)
    _write(report, args)


def _list_presets(args):
    presets = list_presets()
    for kind in ("devices", "scenarios"):
        print("{}:".format(kind))
        for name in presets[kind]:
            print("  {}".format(name))


def _calibrate(args):
    report = calibration_report(load_device(args.device))
    print(report.to_string(index=False))


def _show_versions(args):
    show_versions()


_COMMANDS = {
    "run": _run,
    "compare": _compare,
    "list-presets": _list_presets,
    "calibrate": _calibrate,
    "show-versions": _show_versions,
}


def main(argv=None):
    """Entry point of the ``accelperf`` command.

    Returns
    -------
    status : int
        0 on success, 1 if a spec, scenario or argument is invalid,
        2 if a file cannot be read or written.
    """
    args = build_parser().parse_args(argv)
    if args.verbose > 0:
        logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO,
                            format="%(levelname)s:%(name)s:%(message)s")

    try:
        _COMMANDS[args.command](args)
    except OSError as e:
        print("error: {}".format(e), file=sys.stderr)
        return 2
    except ValueError as e:
        print("error: {}".format(e), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
