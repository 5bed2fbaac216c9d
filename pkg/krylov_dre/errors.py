"""
Errors
------

Exceptions raised by the solver. Contract violations on inputs are plain
``ValueError``; numerical failures derive from :class:`KrylovDreError`.
"""


class KrylovDreError(Exception):
    """Base class for numerical failures inside the solver."""


class LinAlgKernelError(KrylovDreError):
    pass


class SingularShiftError(KrylovDreError):
    def __init__(self, shift, message=None):
        self.shift = shift
        super().__init__(message or f"shifted matrix A - ({shift})*I is singular")


class BasisStagnation(KrylovDreError):
    """New block is numerically contained in the current basis."""


class LyapunovSpectrumError(KrylovDreError):
    def __init__(self, eigenvalue_sum):
        self.eigenvalue_sum = eigenvalue_sum
        super().__init__(
            "Lyapunov operator is (nearly) singular: eigenvalue pair sums to "
            f"{eigenvalue_sum:.3e}"
        )


class CareSolveError(KrylovDreError):
    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class BdfStepError(KrylovDreError):
    def __init__(self, step, partial):
        self.step = step
        self.partial = partial
        super().__init__(f"CARE solve failed at BDF step {step}")


class SolverIterationError(KrylovDreError):
    def __init__(self, iteration, message):
        self.iteration = iteration
        super().__init__(f"iteration {iteration}: {message}")


class QuadratureError(KrylovDreError):
    def __init__(self, estimate, relative):
        self.estimate = estimate
        super().__init__(
            f"quadrature error estimate {estimate:.3e} ({relative:.1e} relative) "
            "exceeds tolerance; increase the number of panels"
        )


class MatrixMarketError(ValueError):
    def __init__(self, path, lineno, message):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")
