"""Exception types raised across the package."""


class DiagSearchError(Exception):
    """Base class for all errors raised by diagsearch."""


class ParseError(DiagSearchError):
    """Malformed input file."""


class ConfigError(DiagSearchError):
    """Invalid user configuration (schema, costs, algorithm names, ...)."""


class EmptyDatasetError(DiagSearchError):
    """An operation left no examples to work with."""


class UndefinedProbabilityError(DiagSearchError):
    """A maximum-likelihood estimate was requested for a state with no matching examples."""


class DecodeError(DiagSearchError):
    """A serialized policy or dataset could not be decoded."""


class ExecutionError(DiagSearchError):
    """A policy could not be run on an example."""


class ExperimentError(DiagSearchError):
    """A learner or comparison failed inside an experiment grid cell."""
