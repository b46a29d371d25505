"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Bad user-supplied configuration (grid too small, invalid parameters)."""


class NotInKahlerCone(ValueError):
    """A metric density 1 + laplacian(phi) is non-positive somewhere.

    Carries the most negative node density so callers can report how far
    outside the cone the field sits.
    """

    def __init__(self, min_density, context=""):
        self.min_density = float(min_density)
        self.context = context
        msg = f"density positivity violated: min(1 + lap) = {self.min_density:.6e}"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


class NewtonDiverged(RuntimeError):
    """Damped Newton failed to reduce the residual."""

    def __init__(self, t, residual, iterations):
        self.t = t
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"Newton stalled at t={t:.6f}: residual {residual:.3e} "
            f"after {iterations} iterations"
        )


class ConeBoundary(RuntimeError):
    """Newton iterates could not stay inside the positivity cone."""

    def __init__(self, t, min_density):
        self.t = t
        self.min_density = min_density
        super().__init__(
            f"iterate pinned against the cone boundary at t={t:.6f} "
            f"(min density {min_density:.3e})"
        )


class SingularLinearization(RuntimeError):
    """Linearized operator is numerically singular (kernel of lap + t)."""

    def __init__(self, t, cond):
        self.t = t
        self.cond = cond
        super().__init__(
            f"linearization at t={t:.6f} has condition estimate {cond:.3e}"
        )


class ContinuationError(RuntimeError):
    """Path tracing failed; carries the partial trace and the failing t."""

    def __init__(self, t_failed, partial_trace, cause):
        self.t_failed = t_failed
        self.partial_trace = partial_trace
        self.cause = cause
        super().__init__(f"continuation failed at t={t_failed:.6f}: {cause}")


class IncompleteTrace(ValueError):
    """An operation required a trace reaching t = 0 (or covering [1/2, 1])."""


class TargetUnreachable(ValueError):
    """Requested Dirichlet-energy target exceeds what the cone permits."""

    def __init__(self, target, max_attainable):
        self.target = target
        self.max_attainable = max_attainable
        super().__init__(
            f"target J={target:.6g} unreachable; max attainable {max_attainable:.6g}"
        )


class PositivityCollapse(RuntimeError):
    """Flow step shrank below the floor with the positivity guard still failing."""


class StiffnessBailout(RuntimeError):
    """Flow integrator exceeded its step budget."""
