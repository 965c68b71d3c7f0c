"""Exception types raised by koopman_lab."""


class KoopmanLabError(Exception):
    """Base class for all library errors."""


class NonPositiveWeight(KoopmanLabError, ValueError):
    pass


class WeightsDoNotSumToOne(KoopmanLabError, ValueError):
    pass


class DimensionMismatch(KoopmanLabError, ValueError):
    pass


class InvalidExponent(KoopmanLabError, ValueError):
    pass


class NotMarkovLattice(KoopmanLabError, ValueError):
    """The operator is not a Markov lattice operator.

    ``witness`` carries the violating function (or pair of functions) found
    by :func:`koopman_lab.markov_operators.classify_operator`, when available.
    A zero-argument callable may be passed instead; it runs on first access.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self._witness = witness

    @property
    def witness(self):
        if callable(self._witness):
            self._witness = self._witness()
        return self._witness


class NotDeterministic(NotMarkovLattice):
    """Some row of the matrix is not a standard basis vector."""


class QSupportTooWide(KoopmanLabError, ValueError):
    pass


class BudgetExceeded(KoopmanLabError, ValueError):
    pass


class InternalConsistencyError(KoopmanLabError, RuntimeError):
    """Two independent routes disagreed where they provably must agree."""
