"""Exception types shared across the package."""


class MarrrError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MarrrError):
    """Matrix shapes are inconsistent with each other or with the config."""


class SchemaError(MarrrError):
    """File content violates the expected schema (ids, headers, tokens)."""


class ParseError(MarrrError):
    """A cell could not be parsed as a number or the missing token."""


class DegenerateInputError(MarrrError):
    """Input matrix carries no usable signal (e.g. constant X)."""


class DegenerateCovariateError(MarrrError):
    """A covariate row has zero variance and cannot be standardized."""


class DegeneracyError(MarrrError):
    """Covariate block with q >= n_k: the regression term would collapse
    to an unsupervised factorization."""


class RankDeficiencyError(MarrrError):
    """Covariate block is rank deficient and cannot be orthogonalized."""


class ConfigError(MarrrError):
    """Invalid configuration (indicator matrices, CLI options, fractions)."""


class PreconditionError(MarrrError):
    """An operation's documented precondition is not met."""


class InsufficientDataError(MarrrError):
    """Not enough observed data to run the requested computation."""


class DegenerateMetricError(MarrrError):
    """A metric's denominator is zero."""
