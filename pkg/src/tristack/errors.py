"""Exception types shared across the solver stack."""


class GameValidationError(ValueError):
    """A game definition or scenario parameter set violates a structural requirement."""


class DomainError(ValueError):
    """A strategy argument lies outside its declared box."""


class NonConvergenceError(RuntimeError):
    """An iterative solve hit its iteration cap before reaching tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BoundaryRegionError(RuntimeError):
    """A sensitivity evaluation was requested at a non-singleton projection region."""


class OracleBudgetError(RuntimeError):
    """A brute-force oracle run would exceed its evaluation budget."""


class OracleCycleError(RuntimeError):
    """Grid best-response iteration entered a cycle instead of a fixed point."""

    def __init__(self, message, cycle=None):
        super().__init__(message)
        self.cycle = cycle or []


class ConfigError(ValueError):
    """A run configuration failed validation; carries the full error list."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))
