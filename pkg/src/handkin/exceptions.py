"""Exception hierarchy shared by all handkin modules."""


class HandkinError(Exception):
    """Base class for every error raised by handkin."""


class ParseError(HandkinError, ValueError):
    """A document could not be parsed into the expected structure."""


class ModelValidationError(HandkinError, ValueError):
    """A model, geometry or configuration violates one of its invariants.

    Attributes
    ----------
    element
        Name of the offending element (joint, link, field), if known.
    """

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class UnknownLinkError(HandkinError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown link"


class MissingJointError(HandkinError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing joint value"


class UnknownChannelError(HandkinError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown channel"


class Unreachable(HandkinError):
    """A target pose cannot be realized by a kinematic chain.

    Attributes
    ----------
    finger
        Finger whose chain failed, if known.
    residual
        Distance (meters) by which the target misses the reachable set.
    """

    def __init__(self, message, finger=None, residual=None):
        super().__init__(message)
        self.finger = finger
        self.residual = residual


class DegenerateError(HandkinError, ValueError):
    """A statistic is undefined for the given data (e.g. zero variance)."""
