class ExportError(Exception):
    """Base class for exporter failures."""


class UnsupportedModelError(ExportError):
    """The checkpoint has no per-layer MoE routers to capture."""


class ResourceError(ExportError):
    """Ran out of memory; retry with fewer texts per batch."""


class InputError(ExportError):
    """Bad texts file, prompt id, or output path."""
