"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: ``CapacityError`` gives 3, every other
``Phi4Error`` raised while reading configuration gives 2.
"""


class Phi4Error(Exception):
    """Base class for all library errors."""


class ParameterError(Phi4Error, ValueError):
    """A numerical parameter is outside its admissible domain."""


class DomainError(Phi4Error, ValueError):
    """An argument has the wrong shape or parity (e.g. odd moment order)."""


class RangeError(Phi4Error, IndexError):
    """A requested quantity is not housed by a precomputed table."""


class CapacityError(Phi4Error):
    """An exact method was asked to handle a problem above its size guard."""


class ContractError(Phi4Error, ValueError):
    """Inputs violate a documented precondition (sources, tags, shapes)."""


class TruncationError(Phi4Error):
    """A certified truncation bound exceeds the requested tolerance."""


class DistanceError(Phi4Error):
    """Graph distance is undefined because the graph is disconnected."""


class DivergenceError(Phi4Error):
    """A quantity diverges, e.g. the Green's function of a recurrent walk."""


class ErgodicityError(Phi4Error):
    """A sampler cannot reach the requested state space."""


class DegenerateRatioError(Phi4Error, ZeroDivisionError):
    """A ratio has a vanishing denominator."""
