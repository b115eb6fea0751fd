"""Error hierarchy.

Every error raised on purpose by the package derives from
:class:`MemtrackError`; the ``exit_code`` attribute is what the command-line
tool returns when the error escapes a subcommand.
"""


class MemtrackError(Exception):
    exit_code = 3


class ValidationError(MemtrackError, ValueError):
    """Input violates a declared invariant or schema."""

    exit_code = 1


class DimensionError(ValidationError):
    pass


class CorruptMaskError(ValidationError):
    pass


class FormatError(ValidationError):
    pass


class WeightsError(ValidationError):
    pass


class InvalidMatrixError(ValidationError):
    pass


class EmptyVideoError(ValidationError):
    pass


class InvalidAssociationError(ValidationError):
    pass


class UnsupportedInputError(ValidationError):
    pass


class SpecError(ValidationError):
    pass


class OracleSizeError(ValidationError):
    pass


class InvariantError(MemtrackError):
    """An internal consistency check failed; indicates a bug, not bad input."""

    exit_code = 3
