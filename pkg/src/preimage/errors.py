"""Exception hierarchy shared by all modules."""


class PreimageError(Exception):
    """Base class for errors raised by this package."""


class InputError(PreimageError, ValueError):
    """Arguments violate an operation's preconditions."""


class ParseError(PreimageError, ValueError):
    """A network/property file could not be parsed."""


class ValidationError(PreimageError, ValueError):
    """A parsed object violates a structural invariant."""


class CapabilityError(PreimageError):
    """The request exceeds a configured capability cap (dimension, neurons)."""


class RefinementError(PreimageError):
    """Refinement cannot proceed (e.g. nothing left to split)."""
