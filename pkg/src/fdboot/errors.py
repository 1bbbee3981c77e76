"""Exception hierarchy shared across the package.

Two families matter to callers: bad input (rejected up front) and
numerically impossible requests (valid input, but the computation cannot
proceed, e.g. a singular normalizer matrix). The CLI maps them to distinct
exit codes.
"""


class ValidationError(ValueError):
    """Input, parameter, or file-format violation."""


class NumericalError(ArithmeticError):
    """Numerically degenerate request: rank deficiency, singularity, etc."""
