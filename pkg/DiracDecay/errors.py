"""
Exception hierarchy shared by every module.
Each class carries the exit code the command-line front end reports for it:
- 1 unexpected failure
- 2 configuration / validation problems
- 3 numerical resolution problems (contours, conditioning, oracle boxes)
- 4 ambiguous zero-energy threshold
"""


class DiracDecayError(Exception):
    exit_code = 1


class DomainError(DiracDecayError, ValueError):
    """Argument outside the domain of an operation."""


class SingularPointError(DomainError):
    """Coincident points passed to a kernel that is singular on the diagonal."""


class ValidationError(DiracDecayError, ValueError):
    exit_code = 2


class ConfigError(ValidationError):
    pass


class NumericalError(DiracDecayError):
    exit_code = 3


class ResolutionError(NumericalError):
    """A quadrature did not resolve its integrand (node-doubling check failed)."""


class CausalityError(NumericalError):
    """Periodic oracle box too small for the requested time."""


class IllConditionedError(NumericalError):
    def __init__(self, message: str, lam: float | None = None, condition: float | None = None):
        super().__init__(message)
        self.lam = lam
        self.condition = condition


class LambdaTooLargeError(NumericalError):
    """Q-block of A(λ) numerically singular at the requested λ."""


class NotInvertibleError(NumericalError):
    pass


class InconsistencyError(NumericalError):
    pass


class NotFoundError(NumericalError):
    pass


class NoEigenspaceError(NumericalError):
    pass


class PreconditionError(NumericalError):
    pass


class AmbiguousKernelError(DiracDecayError):
    exit_code = 4

    def __init__(self, message: str, eigenvalues=None):
        super().__init__(message)
        self.eigenvalues = [] if eigenvalues is None else list(eigenvalues)
