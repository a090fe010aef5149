"""Exception types raised across the package.

Everything inherits from ToolactError so callers (and the CLI) can catch
package errors in one place. Configuration mistakes get their own branch
because the CLI maps them to a different exit code than runtime failures.
"""


class ToolactError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(ToolactError):
    """An invalid or inconsistent configuration (task/architecture mismatch,
    unknown backbone family, bad hyperparameter)."""


class ManifestError(ToolactError):
    """A manifest file is missing or malformed. Messages name the offending
    line where applicable."""


class IntegrityError(ToolactError):
    """Manifest contents violate dataset invariants: duplicate sample keys
    or unresolvable image references."""


class SplitError(ToolactError):
    """A dataset cannot be split as requested (wrong group sizes, bad ratios)."""


class ImageDecodeError(ToolactError):
    """An image file could not be decoded."""


class ChannelCountError(ImageDecodeError):
    """An image is not 3-channel RGB (grayscale, palette or alpha input)."""


class InputShapeError(ToolactError):
    """Model inputs do not match what the fusion variant consumes."""


class NumericalError(ToolactError):
    """Non-finite activations were produced; carries the offending layer."""

    def __init__(self, message: str, layer: str | None = None):
        super().__init__(message)
        self.layer = layer


class LabelError(ToolactError):
    """A label index is outside the class range of its head."""


class DivergedError(ToolactError):
    """Training produced a non-finite loss; carries epoch and step."""

    def __init__(self, message: str, epoch: int, step: int):
        super().__init__(message)
        self.epoch = epoch
        self.step = step


class EvaluationError(ToolactError):
    """Evaluation was asked to do something undefined (e.g. empty test set)."""


class AggregationError(ToolactError):
    """Multi-seed aggregation is undefined (fewer than 2 values)."""


class GenerationError(ToolactError):
    """The synthetic generator could not produce a valid scene."""


class OracleError(ToolactError):
    """The rule-based oracle could not read a scene it should be able to
    read; this signals a generator bug, not a data limitation."""


class CheckpointError(ToolactError):
    """A checkpoint is unreadable or does not match the requested
    architecture."""
