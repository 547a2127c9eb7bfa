"""
Error types for RelGrad
"""


class RelGradError(Exception):
    """Base class for every error raised by the package"""

    exit_code = 1


class GraphError(RelGradError, ValueError):
    """Dangling child reference, unbound or undeclared leaf"""


class ShapeError(RelGradError, ValueError):
    """Operand shapes do not fit the operation"""


class PlanError(RelGradError, ValueError):
    """Plan cannot be built or interpreted"""


class DialectError(RelGradError, ValueError):
    """The selected SQL dialect cannot express a plan node"""


class DataError(RelGradError):
    """Input data is missing or malformed"""

    exit_code = 2


class BudgetExceeded(RelGradError):
    """A configuration needs more materialized entries than allowed"""

    exit_code = 3


class ConformanceError(RelGradError):
    """Emitted SQL disagrees with the interpreter, or no adapter is available"""

    exit_code = 4


class ExecutionError(RelGradError):
    """An executor adapter failed to run a statement"""

    exit_code = 4
