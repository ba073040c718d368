"""Exception hierarchy shared by the solvers and the order estimators."""


class RichardsLabError(Exception):
    """Base class for all package errors."""


class ConfigError(RichardsLabError, ValueError):
    pass


class TooShort(RichardsLabError, ValueError):
    pass


class DegenerateLog(RichardsLabError, ValueError):
    """A sequence term equals 1, so its logarithm is zero."""


class NotHalving(RichardsLabError, ValueError):
    pass


class DomainViolation(RichardsLabError, ValueError):
    """A closure was evaluated outside its region of validity."""


class StabilityViolated(RichardsLabError):
    """The explicit L-scheme ratio K*dt/(L*dz^2) exceeded 1/2 on some face."""

    def __init__(self, face, r_value, admissible_dt):
        self.face = face
        self.r_value = r_value
        self.admissible_dt = admissible_dt
        super().__init__(
            f"r = {r_value:.6g} > 1/2 on face {face}; "
            f"a stable time step is dt <= {admissible_dt:.6g}"
        )


class LinearSolveFailure(RichardsLabError):
    pass


class SingularJacobian(LinearSolveFailure):
    pass


class NoConvergence(RichardsLabError):
    """Iteration cap reached. ``sequence`` holds the corrections recorded so far."""

    def __init__(self, message, sequence=None, state=None):
        super().__init__(message)
        self.sequence = sequence
        self.state = state


class MismatchedProblem(RichardsLabError, ValueError):
    pass
