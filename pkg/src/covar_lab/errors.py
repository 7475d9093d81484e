"""Exception types raised across the package."""


class CovarLabError(Exception):
    """Base class for all package errors."""


# ingest
class MalformedFile(CovarLabError, ValueError):
    pass


class EmptyPanel(CovarLabError, ValueError):
    pass


class DuplicateDate(CovarLabError, ValueError):
    pass


class InsufficientHistory(CovarLabError, ValueError):
    pass


# estimation
class NonConvergent(CovarLabError, RuntimeError):
    pass


class DegenerateSeries(CovarLabError, ValueError):
    pass


class SingularDispersion(CovarLabError, ValueError):
    pass


class NumericalFailure(CovarLabError, RuntimeError):
    pass


class BracketFailure(CovarLabError, RuntimeError):
    pass


class DomainError(CovarLabError, ValueError):
    """Parameters outside the admissible domain of a family."""


class OutOfRange(CovarLabError, ValueError):
    pass


class IndexOutOfRange(CovarLabError, IndexError):
    pass


# backtesting / scoring
class LengthMismatch(CovarLabError, ValueError):
    pass


class EmptySubset(CovarLabError, ValueError):
    """No conditioning (distress) days for a second-stage backtest."""


class ZeroTotal(CovarLabError, ValueError):
    pass


class EmptyYear(CovarLabError, ValueError):
    pass


class ZeroTarget(CovarLabError, ValueError):
    pass


class MissingResults(CovarLabError, FileNotFoundError):
    pass
