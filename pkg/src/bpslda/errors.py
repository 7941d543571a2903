"""Exception hierarchy shared by all modules."""


class BpsldaError(Exception):
    """Base class for every error raised by this package."""


class AllZeroError(BpsldaError):
    """Simplex normalization of an all-zero vector."""


class NegativeEntryError(BpsldaError):
    """Simplex normalization of a vector with a negative entry."""


class FormatError(BpsldaError):
    """Malformed model or corpus file."""


class EmptyCorpusError(BpsldaError):
    """Vocabulary construction over a corpus with no tokens."""


class EmptyAfterFilteringError(BpsldaError):
    """No token of a document survived vocabulary filtering."""


class TooFewDocsError(BpsldaError):
    """Fewer documents than requested cross-validation folds."""


class DomainError(BpsldaError):
    """Objective evaluated outside its domain (non-positive log argument)."""


class NonFiniteError(BpsldaError):
    """A numerical quantity overflowed or degenerated to zero/NaN.

    ``minibatch`` carries the 1-based global mini-batch index when the
    failure happened inside a training loop, else None.
    """

    def __init__(self, message, minibatch=None):
        super().__init__(message)
        self.minibatch = minibatch


class TrajectoryMismatchError(BpsldaError):
    """Inference trajectory dimensions disagree with the model."""


class DegenerateTruthError(BpsldaError):
    """Predictive R^2 on targets with zero variance."""


class OneClassOnlyError(BpsldaError):
    """AUC requested but only one label class is present."""


class KTooLargeError(BpsldaError):
    """Grid-search oracle asked for more than 3 topics."""
