"""Exception and warning types shared across the library.

Every recoverable input problem raises a subclass of :class:`KscoreError`
rather than returning NaN, so callers (and the CLI) can distinguish bad
input from a legitimately extreme estimate.
"""


class KscoreError(Exception):
    """Base class for all errors raised by this package."""


class KindMismatchError(KscoreError):
    """Vector data met token data, or a kernel met the wrong point kind."""


class MixedKindsError(KindMismatchError):
    """A single collection mixes vector points and token sequences."""


class DimensionMismatchError(KscoreError):
    """Vector lengths differ where the kernel requires equal dimensions."""


class NonFiniteError(KscoreError):
    """A vector contains NaN or infinity."""


class TooFewSamplesError(KscoreError):
    """An estimator needs more points than were supplied."""


class TooFewClustersError(KscoreError):
    """A two-stage estimator needs at least two clusters."""


class TooFewInnerSamplesError(KscoreError):
    """A cluster holds fewer points than the estimator requires."""


class ClusterCountMismatchError(KscoreError):
    """Paired blocks must have the same number of clusters."""


class DegenerateDenominatorError(KscoreError):
    """A normalizing quantity is zero or negative (e.g. a self-covariance)."""


class DegenerateMarginalError(KscoreError):
    """A marginal has zero variance, so correlation is undefined."""


class DegenerateVarianceError(KscoreError):
    """A sequence with zero variance was given where variation is required."""


class SingleClassError(KscoreError):
    """AUROC needs both a positive and a negative label present."""


class ShapeMismatchError(KscoreError):
    """An array does not have the required shape."""


class AsymmetricInputError(KscoreError):
    """A matrix that must be symmetric is not."""


class ProductTooLargeError(KscoreError):
    """Exhaustive ensemble enumeration would exceed the hard state cap."""


class EmptyGroupError(KscoreError):
    """An ingested group contains no usable rows for the requested command."""


class SchemaError(KscoreError):
    """An input row violates the ingestion schema.

    Carries the 1-based line (or row) number of the offending record.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EstimateWarning(UserWarning):
    """A legitimate but unusual estimate (negative variance, |corr| > 1)."""


class DegenerateInputWarning(UserWarning):
    """Degenerate input handled by convention (e.g. cosine of a zero vector)."""
