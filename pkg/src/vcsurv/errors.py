"""Exception types raised by the estimation pipeline."""


class VcsurvError(Exception):
    """Base class for all package-specific errors."""


class DataError(VcsurvError):
    """Malformed or inconsistent input data (bad CSV row, duplicate record, ...)."""


class NumericalError(VcsurvError):
    """Base class for numerical failures during estimation."""


class NoLocalData(NumericalError):
    """Too little kernel-weighted event mass near the evaluation point to fit.

    Raised when the effective event count sum_events K((V - v)/h) falls below
    the minimum (5.0 by default).
    """

    def __init__(self, v, effective_events, minimum=5.0):
        self.v = v
        self.effective_events = effective_events
        self.minimum = minimum
        super().__init__(
            f"insufficient local data at v={v:.6g}: effective event count "
            f"{effective_events:.3f} < {minimum:.3f}"
        )


class NonConvergence(NumericalError):
    """Newton iteration exhausted max_iterations without meeting the tolerance.

    Carries the best iterate so callers can inspect or reuse it.
    """

    def __init__(self, fit, message="Newton iteration did not converge"):
        self.fit = fit
        super().__init__(message)


class SingularHessian(NumericalError):
    """Local Hessian is numerically singular (one-step update impossible)."""


class SingularAHat(NumericalError):
    """A_hat is numerically singular; the sandwich covariance is undefined."""


class SingularSigma(NumericalError):
    """Combination covariance is singular beyond repair; weights undefined."""
