"""Exception hierarchy shared by all modules."""


class MpcsError(Exception):
    """Base class for library errors."""


class IntegrationDivergedError(MpcsError):
    """ODE integration produced a non-finite state."""


class QuadratureError(MpcsError):
    """A quadrature node produced a non-finite value."""


class ModelError(MpcsError):
    """Invalid or non-integrable Levy model."""


class SamplingError(MpcsError):
    """Sampling requested from a zero-mass window or invalid law."""


class DomainError(MpcsError):
    """Evaluation outside the region where a density or logarithm is defined."""


class CoincidenceError(MpcsError):
    """Two points of a configuration share (numerically) the same position."""


class EvaluationError(MpcsError):
    """A functional produced a non-finite value."""


class TangentError(MpcsError):
    """Tangent vectors live over different configurations."""


class TruncationError(MpcsError):
    """Requested order exceeds the truncation order of a series."""


class ExperimentError(MpcsError):
    """Monte Carlo experiment failed (e.g. too many skipped samples)."""


class ConfigError(MpcsError):
    """Experiment configuration is invalid."""
