"""Exception hierarchy shared across the package."""


class OarsmtError(Exception):
    """Base class for all package errors."""


class InputError(OarsmtError, ValueError):
    """Arguments outside an operation's precondition."""


class NoPathError(OarsmtError):
    """Two nodes are not connected in the graph."""


class CapacityError(OarsmtError):
    """Instance too large for the requested exact method."""


class DecodeError(OarsmtError, ValueError):
    """An image does not have the geometry produced by the rasterizer."""


class FormatError(OarsmtError, ValueError):
    """A serialized file (weights, tensor, instance) is malformed."""


class ContractError(OarsmtError, ValueError):
    """Tensor shapes or weight dimensions do not fit together."""


class PlanningError(OarsmtError, ValueError):
    """A section plan cannot be built for the requested split."""
