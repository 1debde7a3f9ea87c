"""Export router activations from real MoE checkpoints to MOEA containers."""

from .capture import CAPTURE_POINTS, ExportSpec, export
from .container import read_gate_rows, read_header, record_id_for, write_moea
from .errors import ExportError, InputError, ResourceError, UnsupportedModelError

__version__ = "0.1.0"

__all__ = [
    "CAPTURE_POINTS",
    "ExportSpec",
    "export",
    "write_moea",
    "read_header",
    "read_gate_rows",
    "record_id_for",
    "ExportError",
    "InputError",
    "ResourceError",
    "UnsupportedModelError",
    "__version__",
]
