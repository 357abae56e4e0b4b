"""Exception types shared across the pipeline."""


class CirlError(Exception):
    """Base class for all package errors."""


class InvalidScene(CirlError):
    """Scene violates structural invariants (object count, id ranges)."""


class UnresolvableSelector(CirlError):
    """An edit selector matched zero or more than one object."""


class CapacityExceeded(CirlError):
    """An ADD edit would push a scene past the object limit."""


class InvalidConfig(CirlError):
    """Configuration failed validation before any side effect."""


class ShapeMismatch(CirlError):
    """Array input does not have the shape a component expects."""


class EmptySequence(CirlError):
    """An aggregation was asked for over zero elements."""


class DegenerateQuery(CirlError):
    """A selection query vector has (numerically) zero norm."""


class ContextOverflow(CirlError):
    """Assembled instruction is longer than the decoder context."""


class DegenerateEmbedding(CirlError):
    """An embedding with (numerically) zero norm reached a cosine."""


class NonFiniteLoss(CirlError):
    """Training loss became NaN/inf; carries a diagnostic dump."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ZeroEmbedding(CirlError):
    """A candidate embedding with zero norm cannot be normalised."""


class MissingSubset(CirlError):
    """Subset-restricted metrics were requested without a subset map."""


class ChecksumError(CirlError):
    """Checkpoint payload failed CRC verification."""


class SchemaError(CirlError):
    """Checkpoint tensor name set does not match the declared schema."""


class GenerationError(CirlError):
    """Corpus generator exhausted its retry budget for a subset."""
