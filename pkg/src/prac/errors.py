"""Exception hierarchy shared by every module."""


class PracError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(PracError, ValueError):
    """Incompatible layer, tensor, or mask shapes."""


class NumericError(PracError, ArithmeticError):
    """A NaN or Inf appeared in activations, gradients, or parameters."""


class InputError(PracError, ValueError):
    """Invalid caller-supplied value (labels out of range, empty data, bad config)."""


class FormatError(PracError, ValueError):
    """A file on disk does not match its documented binary or text layout."""


class DegenerateRunError(PracError, RuntimeError):
    """The ticket search reached a state it cannot continue from."""
