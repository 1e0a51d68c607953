from dataclasses import replace
from pathlib import Path
import tempfile

import pytest

from accelperf.presets import load_a100, load_gaudi2


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: marks test as slow (deselect with '-m \"not slow\"')"
    )


@pytest.fixture(scope="session")
def gaudi2():
    return load_gaudi2()


@pytest.fixture(scope="session")
def a100():
    return load_a100()


@pytest.fixture()
def make_spec():
    """Copy a spec, replacing fields of its sections."""
    def _make_spec(spec, **sections):
        changes = {}
        for section, fields in sections.items():
            if isinstance(fields, dict):
                changes[section] = replace(getattr(spec, section), **fields)
            else:
                changes[section] = fields
        return replace(spec, **changes)
    return _make_spec


@pytest.fixture()
def temp_file():
    f = tempfile.NamedTemporaryFile(mode="w", suffix=".yaml", delete=False)
    fp = Path(f.name)
    yield f
    fp.unlink()
