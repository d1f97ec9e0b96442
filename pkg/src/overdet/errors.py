"""Exception hierarchy shared by all modules.

The CLI maps the three families onto exit codes: configuration problems
(64), domain or validation failures (65) and numerical non-convergence (70).
"""


class OverdetError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(OverdetError):
    """Malformed run configuration or unparseable input text."""


class DomainError(OverdetError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConvergenceError(OverdetError, RuntimeError):
    """An iterative procedure stopped before meeting its tolerance."""
