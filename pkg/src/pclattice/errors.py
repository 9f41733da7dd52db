"""Exception hierarchy shared by all modules."""


class ModelError(Exception):
    """Base class for every error raised by pclattice."""


class ParameterError(ModelError, ValueError):
    """Invalid or degenerate model parameters."""


class DegenerateParametersError(ParameterError):
    pass


class NoBistabilityError(ParameterError):
    """Raised when mu <= 4, where the homogeneous problem has a single root."""


class DomainError(ModelError, ValueError):
    pass


class PreconditionError(ModelError, ValueError):
    pass


class MissingBranchError(ModelError):
    """A requested equilibrium branch does not exist at these parameters."""


class DivergenceError(ModelError, FloatingPointError):
    pass


class TrackingError(ModelError):
    """The level set used to locate a front is not crossed."""


class InconclusiveError(ModelError):
    """A classification or estimate could not be decided within its budget."""


class NotApplicableError(ModelError):
    pass


class NoProfileError(ModelError):
    """Newton iteration for a stationary profile failed to converge."""
