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
import logging
import os

from pkg_resources import resource_filename, resource_listdir

from ..device_model import load_device_spec
from ..exceptions import ScenarioError

__all__ = [
    'ENV_SPEC_PATH',
    'list_presets',
    'load_a100',
    'load_device',
    'load_gaudi2',
    'resolve_device_path',
    'resolve_scenario_path',
]

LOG = logging.getLogger(__package__)

ENV_SPEC_PATH = "ACCELPERF_SPEC_PATH"

_SUFFIX = ".yaml"


def _bundled_names(kind):
    return sorted(fn[:-len(_SUFFIX)] for fn in resource_listdir(__name__, "data/" + kind)
                  if fn.endswith(_SUFFIX))


def list_presets():
    """Names of the bundled device specs and scenarios.

    Returns
    -------
    presets : dict
        Keys ``devices`` and ``scenarios``, each a sorted list of names.
    """
    return {"devices": _bundled_names("devices"), "scenarios": _bundled_names("scenarios")}


def _looks_like_path(name):
    separators = [sep for sep in (os.sep, os.altsep) if sep is not None]
    return name.endswith((_SUFFIX, ".yml")) or any(sep in name for sep in separators)


def _resolve(name, kind, search_env):
    if os.path.isfile(name):
        return name
    if _looks_like_path(name):
        raise FileNotFoundError("{} file {!r} does not exist".format(kind[:-1], name))

    if search_env:
        directory = os.environ.get(ENV_SPEC_PATH)
        if directory:
            candidate = os.path.join(directory, name + _SUFFIX)
            if os.path.isfile(candidate):
                LOG.debug("using %s from %s", name, directory)
                return candidate

    if name in _bundled_names(kind):
        return resource_filename(__name__, "data/{}/{}{}".format(kind, name, _SUFFIX))

    raise ScenarioError("cannot resolve {} {!r}: not a file and not one of {}".format(
        kind[:-1], name, ", ".join(_bundled_names(kind))))


def resolve_device_path(name):
    """Path of a device spec given a file name or a preset name.

    A directory named by the environment variable ``ACCELPERF_SPEC_PATH``
    is searched for ``<name>.yaml`` before the bundled specs. A name
    containing a path separator or ending in ``.yaml`` is a file name;
    if that file does not exist, :class:`FileNotFoundError` is raised.
    """
    return _resolve(name, "devices", search_env=True)


def resolve_scenario_path(name):
    """Path of a scenario given a file name or a bundled scenario name."""
    return _resolve(name, "scenarios", search_env=False)


def load_device(name):
    """Load a device spec by file name or preset name.

    Parameters
    ----------
    name : str
        Path to a YAML file, or the name of a spec in the directory
        ``ACCELPERF_SPEC_PATH`` or of a bundled spec.

    Returns
    -------
    spec : :class:`accelperf.device_model.DeviceSpec`
    """
    return load_device_spec(resolve_device_path(name))


def load_gaudi2():
    """Load the bundled Intel Gaudi-2 spec.

    Peak rates are 432 TFLOPS on the matrix engine, 11 TFLOPS on the
    24 vector cores and 2.46 TB/s of HBM bandwidth with 256-byte
    access granularity. Devices in a node form a full mesh of three
    100 GbE links per pair.

    Returns
    -------
    spec : :class:`accelperf.device_model.DeviceSpec`
    """
    fn = resource_filename(__name__, 'data/devices/gaudi2.yaml')
    return load_device_spec(fn)


def load_a100():
    """Load the bundled NVIDIA A100 spec.

    Peak rates are 312 TFLOPS on the tensor cores, 39 TFLOPS on the
    vector units and 2 TB/s of HBM bandwidth with 32-byte sectors.
    Devices in a node are connected by NVSwitch.

    Returns
    -------
    spec : :class:`accelperf.device_model.DeviceSpec`
    """
    fn = resource_filename(__name__, 'data/devices/a100.yaml')
    return load_device_spec(fn)
