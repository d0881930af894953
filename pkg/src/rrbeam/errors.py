"""Exception hierarchy shared by all rrbeam modules."""


class RrBeamError(Exception):
    """Base class for rrbeam errors."""


class SingularMatrix(RrBeamError, ValueError):
    """Matrix is singular or not positive definite where that is required."""


class DegenerateGeometry(RrBeamError, ValueError):
    """Two points that must be distinct coincide (e.g. user on top of a BS)."""


class InvalidNoise(RrBeamError, ValueError):
    """Noise power spectral density is not strictly positive."""


class IndefiniteSurrogate(RrBeamError, ValueError):
    """The affine EFIM surrogate is not positive definite."""


class IndefiniteAnchor(RrBeamError, ValueError):
    """Linearization anchor EFIM is not positive definite."""


class DegenerateChannel(RrBeamError, ValueError):
    """Channel vector is identically zero."""


class SolverFailure(RrBeamError, RuntimeError):
    """Conic solve did not reach an optimal point."""

    def __init__(self, message, status=None, iteration=None):
        super().__init__(message)
        self.status = status
        self.iteration = iteration


class NotFeasibleAfterRescale(RrBeamError, RuntimeError):
    """Beam rescaling hit its cap without satisfying the restricted constraint."""


class ConfigError(RrBeamError, ValueError):
    """Invalid experiment configuration."""
