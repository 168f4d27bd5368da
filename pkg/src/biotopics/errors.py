"""Exception types shared across the package."""


class BiotopicsError(Exception):
    """Base class for all package-specific errors."""


class MalformedDataset(BiotopicsError):
    """Input file does not match the expected dataset schema."""


class NetworkError(BiotopicsError):
    """A remote fetch failed after exhausting retries."""


class EmptyVocabulary(BiotopicsError):
    """No token survived vocabulary frequency filtering."""


class EmptyCorpus(BiotopicsError):
    """An operation that needs documents received none."""


class InvalidHyperParams(BiotopicsError):
    """Hyperparameter values violate their declared ranges."""


class DimensionMismatch(BiotopicsError):
    """Model and vocabulary (or index) sizes disagree."""


class EmptyIndex(BiotopicsError):
    """Query issued against an index with no documents."""


class DegenerateCovariance(BiotopicsError):
    """Covariance matrix can no longer be decomposed; restart required."""


class InsufficientData(BiotopicsError):
    """Not enough records to run the requested estimate."""


class MalformedLexicon(BiotopicsError):
    """Synonym lexicon file does not parse."""
