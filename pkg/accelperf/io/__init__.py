from .reportwrite import REPORT_FORMATS, emit_report, write_report  # noqa: F401
from .yamlread import load_document  # noqa: F401
from .yamlwrite import dump_document  # noqa: F401
