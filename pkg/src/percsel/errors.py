"""Exception hierarchy shared by all modules."""


class PercselError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(PercselError, ValueError):
    pass


class NotPositiveDefinite(PercselError, ValueError):
    pass


class NotSymmetric(PercselError, ValueError):
    pass


class IndexOutOfRange(PercselError, IndexError):
    pass


class UnsupportedFamily(PercselError, ValueError):
    pass


class MissingRealizedErrors(PercselError, ValueError):
    pass


class TooLarge(PercselError, ValueError):
    pass


class ConvergenceFailure(PercselError, RuntimeError):
    pass


class NodeLimitExceeded(PercselError, RuntimeError):
    """Raised only when the caller asks B&B to fail hard on the node limit."""


class NotConvex(PercselError, ValueError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SingularPhiC(PercselError, ValueError):
    pass


class ParseError(PercselError, ValueError):
    def __init__(self, message, line=None, col=None):
        where = f" (line {line}, col {col})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.col = col


class ValidationError(PercselError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))
