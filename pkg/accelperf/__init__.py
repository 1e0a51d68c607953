from collections import OrderedDict
import platform
import sys

from pkg_resources import DistributionNotFound, get_distribution

# distribution name -> name printed by show_versions
_DEPENDENCIES = OrderedDict([
    ("accelperf", "accelperf"),
    ("numpy", "numpy"),
    ("scipy", "scipy"),
    ("pandas", "pandas"),
    ("scikit-learn", "sklearn"),
    ("joblib", "joblib"),
    ("PyYAML", "yaml"),
    ("pytest", "pytest"),
    ("setuptools", "setuptools"),
])


def _distribution_version(name):
    try:
        return get_distribution(name).version
    except DistributionNotFound:
        return None


def _print_section(title, items, width):
    print(title)
    print("-" * len(title))
    for key, value in items:
        print("{0:<{1}s}: {2}".format(key, width, value))


def show_versions():
    """Print the platform, the versions of the dependencies and the
    digests of the device specs that preset names resolve to.

    A digest differs from the one of a fresh installation if the
    calibration constants of a spec were changed.
    """
    from .device_model import spec_digest
    from .presets import list_presets, load_device

    system = [
        ("platform", platform.platform()),
        ("python", "{} {}".format(platform.python_implementation(), platform.python_version())),
        ("executable", sys.executable),
    ]
    deps = [(label, _distribution_version(dist)) for dist, label in _DEPENDENCIES.items()]
    specs = [(name, spec_digest(load_device(name))) for name in list_presets()["devices"]]
    width = max(len(key) for key, _ in system + deps + specs)

    _print_section("SYSTEM", system, width)
    print()
    _print_section("DEPENDENCIES", deps, width)
    print()
    _print_section("DEVICE SPECS", specs, width)


try:
    __version__ = get_distribution('accelperf').version
except DistributionNotFound:  # pragma: no cover
    # package is not installed
    __version__ = 'unknown'
