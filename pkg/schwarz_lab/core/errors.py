"""
Exception hierarchy for the Schwarz solver laboratory.
All library errors derive from SchwarzLabError so callers can catch one type.
"""


class SchwarzLabError(Exception):
    """Base class for all errors raised by schwarz_lab."""


class StructuralError(SchwarzLabError):
    """Index out of range or malformed sparse structure."""


class DimensionError(SchwarzLabError):
    """Operand dimensions do not match."""


class DefinitenessError(SchwarzLabError):
    """A nonpositive pivot was met while factoring a matrix assumed SPD."""


class EllipticityError(SchwarzLabError):
    """Diffusion coefficient is not positive at a sampled point."""


class OverlapError(SchwarzLabError):
    """Overlap layer count outside the supported range 0 < l < k."""


class EstimationError(SchwarzLabError):
    """Spectral estimation failed after all restarts."""


class ConsistencyError(SchwarzLabError):
    """Numerical state violates an invariant (e.g. negative local indicator)."""


class FaultModelError(SchwarzLabError):
    """Invalid fault-model parameters or infeasible fault geometry."""


class OracleCapError(SchwarzLabError):
    """Brute-force oracle size or combinatorial cap exceeded."""


class ConfigError(SchwarzLabError):
    """Configuration file could not be parsed or failed validation."""
