"""Exception hierarchy shared by the solvers and the command line."""


class NumericalError(RuntimeError):
    """Base class for failures of a numerical procedure (exit code 2)."""


class BlowUpError(NumericalError):
    """An evolution left its resolved regime.

    ``last_time`` is the last time at which the run was still resolved and
    ``partial`` holds whatever result object the solver had built so far.
    """

    def __init__(self, message, last_time=None, partial=None):
        super().__init__(message)
        self.last_time = last_time
        self.partial = partial


class NoBreakupError(NumericalError):
    """No sign change of the characteristic Jacobian inside the time window."""


class ConvergenceError(NumericalError):
    """Newton or simplex iteration failed to reach its tolerance."""


class SnapshotFormatError(ValueError):
    """A snapshot file is truncated, has a bad header or wrong dimensions."""
