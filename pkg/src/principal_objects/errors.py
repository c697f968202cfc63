"""Exception hierarchy.

Every error carries a short machine-readable ``category`` that the command
line front end prints on failure.
"""


class PrincipalError(Exception):
    category = "error"


class ParseError(PrincipalError, ValueError):
    category = "parse-error"

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class InvariantViolation(PrincipalError, ValueError):
    category = "invariant-violation"


class EmptyInputError(PrincipalError, ValueError):
    category = "empty-input"


class DegenerateSupportError(PrincipalError, ValueError):
    """Two gapped vectors share no present coordinate."""

    category = "degenerate-support"


class DimensionMismatchError(PrincipalError, ValueError):
    category = "dimension-mismatch"


class SequenceTooShortError(PrincipalError, ValueError):
    category = "sequence-too-short"


class SingularSystemError(PrincipalError, ArithmeticError):
    """The embedding system cannot be solved; ``vertices`` names the culprits."""

    category = "singular-system"

    def __init__(self, message, vertices=()):
        self.vertices = tuple(vertices)
        super().__init__(message)


class NotATreeError(PrincipalError, ValueError):
    category = "not-a-tree"


class LabelLengthError(PrincipalError, ValueError):
    category = "label-length-mismatch"


class ZeroLengthSegmentError(PrincipalError, ValueError):
    category = "zero-length-segment"
