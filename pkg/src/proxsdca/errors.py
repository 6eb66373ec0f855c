"""Exception types shared across the package."""


class ProxSdcaError(Exception):
    """Base class for all package-specific errors."""


class DomainError(ProxSdcaError):
    """A dual point lies outside the domain of a conjugate function."""


class UnsupportedNormPair(ProxSdcaError):
    """Requested operator norm is not one of the supported (dual, weight) pairs."""


class UnsupportedOption(ProxSdcaError):
    """The chosen update rule is not available for this loss/regularizer."""


class ConfigError(ProxSdcaError):
    """Invalid solver or application configuration."""


class TraceError(ProxSdcaError):
    """An internal consistency invariant was violated during a run."""


class DimensionError(ProxSdcaError):
    """Problem dimensions do not satisfy a constructor requirement."""


class NonConvergence(ProxSdcaError):
    """A reference solver exhausted its iteration cap before its target."""


class ParseError(ProxSdcaError):
    """Malformed input data.

    Carries the 1-based line number when raised by the svmlight reader.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
