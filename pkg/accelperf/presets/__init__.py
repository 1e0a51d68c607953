from .base import ENV_SPEC_PATH  # noqa: F401
from .base import list_presets  # noqa: F401
from .base import load_a100  # noqa: F401
from .base import load_device  # noqa: F401
from .base import load_gaudi2  # noqa: F401
from .base import resolve_device_path  # noqa: F401
from .base import resolve_scenario_path  # noqa: F401
