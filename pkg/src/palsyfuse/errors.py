"""Typed error hierarchy shared by every pipeline stage.

Parsing and validation never raise bare exceptions at arbitrary input;
they raise one of these so the CLI can map them to stable exit codes.
"""


class PalsyFuseError(Exception):
    """Base class for every error raised by this package."""


class ParseError(PalsyFuseError):
    """Input bytes could not be decoded (JSON/CSV/image syntax)."""


class SchemaError(PalsyFuseError):
    """Decoded data violates a domain invariant (counts, ranges, columns)."""


class FormatError(PalsyFuseError):
    """Binary container is not one we support (magic, version, truncation)."""


class GeometryError(PalsyFuseError):
    """Landmark configuration is degenerate (zero axis, collapsed eyes)."""


class ModalityUnavailableError(PalsyFuseError):
    """Requested modality is absent from the frame (e.g. no blendshapes)."""


class ConfigError(PalsyFuseError):
    """Run configuration or model name is invalid."""


class PlanError(PalsyFuseError):
    """Cross-validation plan cannot be built from the given manifest."""


class DimensionError(PalsyFuseError):
    """Tensor shape does not match what a layer or model expects."""


class StateError(PalsyFuseError):
    """Operation called out of order (e.g. backward before forward)."""


class TrainingDivergedError(PalsyFuseError):
    """Loss became NaN during training; carries the offending epoch."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged (NaN loss) at epoch {epoch}")
        self.epoch = epoch
