"""Exception hierarchy.  Each class carries the CLI exit code it maps to."""


class VMBQCError(Exception):
    exit_code = 1


class ConfigError(VMBQCError, ValueError):
    """Invalid geometry, ranges, shapes or command configuration."""

    exit_code = 1


class NumericalError(VMBQCError, ArithmeticError):
    """Non-finite loss or gradient, or a diverging optimisation run."""

    exit_code = 2


class CapacityError(VMBQCError):
    """Problem too large for dense simulation or exact enumeration."""

    exit_code = 3
