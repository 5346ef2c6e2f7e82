"""Exception types shared across the package."""


class OalqrError(Exception):
    """Base class for all package errors."""


class NonConvergence(OalqrError):
    """An iterative solver exhausted its budget without meeting tolerance."""


class NotStabilizable(OalqrError):
    """Riccati iterates diverged, or the pair fails the controllability check."""


class DimensionMismatch(OalqrError):
    """Operands have incompatible shapes."""


class NumericalDomain(OalqrError):
    """A formula was evaluated outside its numerical domain."""


class InvalidExcitation(OalqrError):
    """The excitation-rate constants came out nonpositive."""


class NoAdmissiblePoint(OalqrError):
    """The optimistic search found no admissible parameter."""


class NoFeasibleMode(OalqrError):
    """No candidate actuating mode closed its duration fixed point."""


class SimulationDiverged(OalqrError):
    """The closed-loop state exceeded the hard cap; episode marked failed."""

    def __init__(self, message, ledger=None):
        super().__init__(message)
        self.ledger = ledger


class OutOfOrder(OalqrError):
    """Ledger rows must be appended with strictly increasing time."""
