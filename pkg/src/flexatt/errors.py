"""Exception types raised across the package."""


class FlexAttError(Exception):
    """Base class for all package errors."""


class InvalidInputError(FlexAttError, ValueError):
    pass


class FrequencyError(InvalidInputError):
    """Disturbance frequencies the exosystem cannot be built from (non-positive or repeated)."""


class ConfigurationError(FlexAttError, ValueError):
    pass


class SynthesisError(FlexAttError):
    """Internal-model synthesis failed a numerical gate."""


class BasisInadequateError(SynthesisError):
    def __init__(self, message, worst_sigma=None, residual=None):
        super().__init__(message)
        self.worst_sigma = worst_sigma
        self.residual = residual


class CertificateError(FlexAttError):
    pass


class IntegrationDivergedError(FlexAttError, RuntimeError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t
