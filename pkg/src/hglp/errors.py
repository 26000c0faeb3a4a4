"""Exception taxonomy shared across the toolkit."""


class HGLPError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgument(HGLPError):
    """Precondition violated by the caller (dimension mismatch, t <= 0, ...)."""


class NumericFailure(HGLPError):
    """Non-finite value produced; message carries the location."""


class GroupSpecInvalid(HGLPError):
    """Group validation defect above the hard threshold."""


class LatticeTooSmall(HGLPError):
    """Homogeneity lattice cutoff exceeded."""


class GridTooSmall(HGLPError):
    """Quadrature extent fails to capture the integrand (tail mass too large)."""


class MomentCertificationFailed(HGLPError):
    """Declared vanishing-moment order not confirmed by quadrature."""


class UnstableStep(HGLPError):
    """Explicit time step violates the stability bound."""


class SolverFailure(HGLPError):
    """Heat solver mass drift or residual above tolerance."""


class NotSchwartz(HGLPError):
    """Weighted derivative sup diverges along the probe tail."""


class InvalidDictionary(HGLPError):
    """Maximal-function dictionary member not normalized."""


class DegeneratePair(HGLPError):
    """Synthesis energy of a reproducing pair is (near) zero."""


class DegenerateFamily(HGLPError):
    """Test family produced a zero norm where a positive one is required."""


class HypothesisNotMet(HGLPError):
    """Kernel-class hypothesis of an inequality check failed; skip, not fail."""


class ConfigError(HGLPError):
    """Bad experiment configuration (CLI exit code 2)."""
