"""Exception hierarchy.

Configuration-type problems derive from :class:`ConfigError`; numerical
failures derive from :class:`NumericalError`. The CLI maps the former to
exit code 1 and the latter to exit code 2.
"""


class MagnusLabError(Exception):
    pass


class ConfigError(MagnusLabError):
    pass


class NumericalError(MagnusLabError):
    pass


class DimensionError(ConfigError, ValueError):
    pass


class ExprSyntaxError(ConfigError):
    """Malformed expression source.

    ``offset`` is the byte offset into the source where parsing failed.
    """

    def __init__(self, message, offset, source=""):
        self.message = message
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset}")


class ExprEvalError(NumericalError):
    """Evaluation failure (unbound name, division by zero, domain error)."""

    def __init__(self, message, offset=None):
        self.offset = offset
        where = f" at offset {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}")


class UnboundIdentifierError(ExprEvalError, ConfigError):
    pass


class ProblemError(ConfigError):
    pass


class SingularMatrixError(NumericalError):
    pass


class BranchCutError(NumericalError):
    def __init__(self, message, eigenvalue=None):
        self.eigenvalue = eigenvalue
        super().__init__(message)


class EigenvalueError(NumericalError):
    pass


class StepSizeUnderflow(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


class RefinementError(NumericalError):
    def __init__(self, message, last_delta=None):
        self.last_delta = last_delta
        super().__init__(message)


class InsufficientTermsError(NumericalError):
    pass


class RootFindingError(NumericalError):
    pass


class PairingError(NumericalError):
    """Eigenvalue collision strictly inside a continuation curve."""

    def __init__(self, message, location=None):
        self.location = location
        super().__init__(message)


class ClusteringError(NumericalError):
    pass
