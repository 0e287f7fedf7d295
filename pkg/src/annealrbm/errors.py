"""Exception types shared across the package."""


class DimensionMismatch(ValueError):
    """Shapes of model parameters and configurations disagree."""


class DomainError(ValueError):
    """An argument is outside the domain an operation is defined on."""


class ContractViolation(ValueError):
    """A caller broke an API precondition that cannot be coerced away."""


class EnumerationCapExceeded(ValueError):
    """Exact enumeration was requested for a model above the size cap."""


class DivergenceError(RuntimeError):
    """Training produced non-finite or runaway parameters."""


class ReplayIntegrityError(RuntimeError):
    """A recorded sample file does not match the submitted problem."""


class PipelineError(ValueError):
    """Raw data violates a preprocessing precondition."""
