"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An input broke a documented precondition (shape, sign, label set...)."""


class NumericalFailure(ArithmeticError):
    """A factorization or evaluation produced a singular system or non-finite value."""


class OptimizationFailure(RuntimeError):
    """An iterative solver did not converge.

    ``grad_norm`` carries the last observed gradient norm when known.
    """

    def __init__(self, message, grad_norm=None):
        super().__init__(message)
        self.grad_norm = grad_norm
