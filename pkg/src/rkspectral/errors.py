"""Exception types shared across the package."""


class SingularResolventError(ValueError):
    """Raised when (I - z*a) or a stage block (I - h*a (x) A_k) is singular.

    Carries the offending argument: the complex point ``z`` for scalar
    stability-function evaluation, or the mode index for per-mode solves.
    """

    def __init__(self, where, message=None):
        self.where = where
        super().__init__(message or f"singular resolvent at {where!r}")


class ConvergenceFailureError(RuntimeError):
    """Fixed-point stage iteration did not converge within the iteration cap.

    Usually a sign that the step size is too large for the contraction
    regime.  ``stats`` holds the StepStats of the failed solve.
    """

    def __init__(self, stats, message=None):
        self.stats = stats
        super().__init__(
            message
            or f"stage iteration failed to converge "
            f"(iterations={stats.iterations}, residual={stats.final_residual:.3e})"
        )


class NumericalBlowupError(RuntimeError):
    """NaN or Inf appeared during stage iteration or stepping."""


class DomainEscapeError(RuntimeError):
    """Physical values left the ball on which the nonlinearity is trusted."""

    def __init__(self, max_abs, bound):
        self.max_abs = max_abs
        self.bound = bound
        super().__init__(
            f"pointwise magnitude {max_abs:.6g} exceeds nonlinearity radius {bound:.6g}"
        )


class UnreliableReferenceError(RuntimeError):
    """Reference-solution self-validation failed.

    The discrepancy between the reference computed at h_ref and at h_ref/2
    is not small enough relative to the errors it is meant to resolve.
    """

    def __init__(self, discrepancy, required):
        self.discrepancy = discrepancy
        self.required = required
        super().__init__(
            f"reference self-validation failed: discrepancy {discrepancy:.3e} "
            f"exceeds {required:.3e}"
        )
