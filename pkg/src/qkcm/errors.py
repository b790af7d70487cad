"""Exception types raised across the package."""


class QKCMError(Exception):
    """Base class for all package errors."""


class DimensionError(QKCMError, ValueError):
    """State and operator disagree on site count or local dimension."""


class SiteIndexError(QKCMError, IndexError):
    """A site index lies outside ``[0, n_sites)``."""


class OracleCapError(QKCMError):
    """A dense (oracle-scale) object would exceed the configured size cap."""


class NormalizationError(QKCMError, ValueError):
    """An operation that needs a normalized state received an unnormalized one."""


class DetailedBalanceError(QKCMError, ValueError):
    """Rate table violates detailed balance for a specific pair of configurations."""

    def __init__(self, pair, residual):
        self.pair = pair
        self.residual = residual
        super().__init__(
            f"detailed balance violated for pair {pair}: residual {residual:.3e}"
        )


class NumericalError(QKCMError, RuntimeError):
    """Integration or root-finding failed to reach the requested tolerance."""


class NotConvergedError(QKCMError, ValueError):
    """A time series has not settled near its stationary value."""

    def __init__(self, residual, threshold):
        self.residual = residual
        self.threshold = threshold
        super().__init__(
            f"series not converged: final residual {residual:.3e} exceeds band {threshold:.3e}"
        )


class ConfigError(QKCMError, ValueError):
    """Invalid or inconsistent experiment configuration."""
