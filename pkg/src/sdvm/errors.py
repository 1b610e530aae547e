"""Exception types shared across the solver."""


class ConfigurationError(ValueError):
    """Invalid mesh / run / solver configuration."""


class DomainError(ValueError):
    """A point lies outside the computational domain."""


class NonNeutralizingError(ValueError):
    """Initial charge density does not integrate to zero."""


class SolverError(RuntimeError):
    """A slab solve failed to meet the algebraic residual contract."""
