"""Exception types raised across the package."""


class ConsoptError(Exception):
    """Base class for all package errors."""


class CoverageError(ConsoptError, ValueError):
    """An index is missed or housed twice by a partition."""


class SplitError(ConsoptError, ValueError):
    """An LI block's input/output split does not add up."""


class LengthMismatch(ConsoptError, ValueError):
    pass


class DimMismatch(ConsoptError, ValueError):
    pass


class SingularTransform(ConsoptError, ValueError):
    pass


class NotCanonical(ConsoptError, ValueError):
    """A block has no parametric (f, g, Q) representation."""


class NotReducible(ConsoptError, ValueError):
    """The swept (f, Q) relation is not the graph of a function of a."""


class NonInvertibleParametrization(ConsoptError, ValueError):
    """d(y) = M(f(y), g(y)) could not be inverted for y."""


class BadParams(ConsoptError, ValueError):
    pass


class DerivationError(ConsoptError, ValueError):
    pass


class SingularLoop(ConsoptError, ValueError):
    """The algebraic loop through the source elements cannot be solved."""

    def __init__(self, msg, cond=None):
        super().__init__(msg)
        self.cond = cond


class NonFiniteState(ConsoptError, FloatingPointError):
    pass


class SingularKKT(ConsoptError, ValueError):
    pass


class ParseError(ConsoptError, ValueError):
    """Problem file could not be read; carries the offending line when known."""

    def __init__(self, msg, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            msg = f"{', '.join(where)}: {msg}"
        super().__init__(msg)
        self.line = line
        self.field = field
