"""Exception hierarchy shared across the toolkit.

Every domain failure raises a MoeeError subclass; the CLI maps these to
exit code 1 and argument problems to exit code 2.
"""


class MoeeError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(MoeeError):
    """Invalid model or run configuration."""


class ShapeError(MoeeError):
    """Tensor or sequence dimensions do not line up."""


class NumericError(MoeeError):
    """Non-finite values where finite numbers are required."""


class EmptyInputError(MoeeError):
    """An operation received an empty sequence it cannot handle."""


class VocabError(MoeeError):
    """Token id outside the model vocabulary."""


class FormatError(MoeeError):
    """File does not follow the expected binary layout."""


class CorruptionError(FormatError):
    """File layout parses but byte ranges are inconsistent or truncated."""


class DataValidationError(MoeeError):
    """Content-level invariant violated (gate sums, schemas, finiteness)."""


class ConsistencyError(MoeeError):
    """Records in one container disagree on the model fingerprint."""


class StrategyError(MoeeError):
    """Requested extraction strategy is incompatible with the stored data."""


class TemplateError(MoeeError):
    """Prompt template is malformed."""


class PairingError(MoeeError):
    """Embeddings from different source records were combined."""


class DegenerateInputError(MoeeError):
    """Input is degenerate for the requested statistic (zero norm, constant)."""


class CoverageError(MoeeError):
    """A dataset references texts with no stored activations."""


class UndefinedMetricError(MoeeError):
    """Metric is undefined for this input (e.g. no positives for AP)."""


class InsufficientDataError(MoeeError):
    """Not enough samples to compute the requested statistic."""
