"""Exception hierarchy shared across the package.

Three branches map onto the CLI exit codes: ``ConfigError`` (2),
``DataError`` (3) and ``NumericalError`` (4).
"""


class GibbsviError(Exception):
    """Base class for all package errors."""


class ConfigError(GibbsviError, ValueError):
    """Invalid configuration: bad flag combination, parameter out of range."""


class DataError(GibbsviError, ValueError):
    """Invalid or unusable input data."""


class NumericalError(GibbsviError, RuntimeError):
    """A computation produced non-finite or otherwise unusable values."""


# -- loader errors (each a distinct code) -------------------------------------

class MissingFileError(DataError):
    """Input file does not exist."""


class NonNumericFeatureError(DataError):
    """A feature cell failed to parse as a number."""


class TooManyClassesError(DataError):
    """More than two distinct label tokens."""


class EmptyDatasetError(DataError):
    """No data rows."""


class UnknownPositiveLabelError(DataError):
    """positive_label does not match any label token in the file."""


# -- computation errors --------------------------------------------------------

class DimensionMismatchError(DataError):
    """Vector/matrix dimensions do not agree."""


class NoMixedPairsError(DataError):
    """Ranking risk requires at least one positive and one negative label."""


class OutOfValidityIntervalError(ConfigError):
    """Temperature outside a rate function's validity interval."""


class NonFiniteObjectiveError(NumericalError):
    """Objective evaluated to NaN or infinity."""


class AllZeroWeightsError(NumericalError):
    """Every particle weight is zero."""
