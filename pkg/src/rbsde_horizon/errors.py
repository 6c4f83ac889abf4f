"""Exception hierarchy; the CLI maps each family to an exit code."""


class RBSDEError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RBSDEError, ValueError):
    """Bad construction parameters or scenario content (CLI exit 2)."""


class ArgumentError(RBSDEError, ValueError):
    """An operation was called with arguments outside its domain."""


class InputError(RBSDEError, ValueError):
    """Non-finite or malformed numerical input."""


class ContractViolation(RBSDEError):
    """A precondition on numerical content failed, e.g. a non-martingale."""


class InvariantViolation(RBSDEError):
    """A model invariant failed (CLI exit 3). ``node`` names the offending node."""

    def __init__(self, message: str, node: tuple[int, int] | None = None):
        if node is not None:
            message = f"{message} at node (level={node[0]}, path_bits={node[1]})"
        super().__init__(message)
        self.node = node


class PositivityError(InvariantViolation):
    """Survival process G (or G-tilde) is not strictly positive."""


class BarrierError(InvariantViolation):
    """Obstacle incompatible with the terminal condition."""
