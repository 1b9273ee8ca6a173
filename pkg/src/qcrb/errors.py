"""Exception types used across the package."""


class QcrbError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(QcrbError):
    """Operands have incompatible shapes."""


class NotHermitian(QcrbError):
    """Matrix fails the hermiticity gate."""


class NoConvergence(QcrbError):
    """Iterative solver exhausted its budget."""


class NotCommuting(QcrbError):
    """A family passed for joint diagonalization does not commute."""


class DegeneracyUnresolved(QcrbError):
    """Joint diagonalization could not split a degenerate subspace."""


class OutOfDomain(QcrbError):
    """Parameter point lies outside the model's open box (or its margin)."""


class DerivativeInconsistent(QcrbError):
    """Analytic and finite-difference derivatives disagree beyond the h^2 scale."""


class ParseError(QcrbError):
    """A config or data file does not match its schema."""


class UnknownModel(QcrbError):
    """Model name not present in the registry."""


class StencilIncomplete(QcrbError):
    """A stencil file is missing one of its 2p+1 required points."""


class InvalidState(QcrbError):
    """A density matrix violates hermiticity, positivity or unit trace."""


class IllDeterminedRank(QcrbError):
    """The spectrum of rho has no clear gap at the rank threshold."""


class RankDrift(QcrbError):
    """The null-null block of a state derivative is not zero: the rank varies."""


class NoFactorization(QcrbError):
    """The operation needs a model-supplied spectral factorization."""


class NotUnitary(QcrbError):
    """A candidate matrix fails the unitarity gate."""


class ConditionFailed(QcrbError):
    """Preconditions for constructing an optimal measurement do not hold."""


class NotBlockDiagonal(QcrbError):
    """A regular effect has a range/null cross block; it cannot be canonical."""


class NegativeProbability(QcrbError):
    """An outcome probability is negative beyond tolerance."""


class SingularFisher(QcrbError):
    """The classical Fisher matrix cannot be inverted; some direction is unidentifiable."""

    def __init__(self, message: str, direction=None):
        super().__init__(message)
        self.direction = direction


class InvalidPovm(QcrbError):
    """Effects are not PSD within tolerance or do not sum to the identity."""


class RankDriftWarning(UserWarning):
    """Non-fatal notice that the null-null block of a derivative is suspiciously large."""
