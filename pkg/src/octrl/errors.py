"""Exception hierarchy shared by all octrl modules."""


class OctrlError(Exception):
    """Base class for every error raised by octrl."""


class InputError(OctrlError, ValueError):
    """Invalid argument, shape mismatch or configuration value."""


class LoadError(InputError):
    """A dataset or artifact file could not be parsed or validated."""


class FitError(OctrlError, RuntimeError):
    """The world-model Gram matrix could not be factored."""


class SolverError(OctrlError, RuntimeError):
    """The dynamic-programming recursion could not proceed."""


class DivergenceError(SolverError):
    """An iterate became non-finite."""

    def __init__(self, message, iteration=None, max_abs=None):
        super().__init__(message)
        self.iteration = iteration
        self.max_abs = max_abs


class SimulationError(OctrlError, RuntimeError):
    """An environment step or rollout produced non-finite values."""
