"""Exception types shared across the solver suite."""

__all__ = ["OtkitError", "DivergedError"]


class OtkitError(Exception):
    """Base class for errors raised by this package."""


class DivergedError(OtkitError):
    """Numerical blow-up (NaN) detected inside an iterative solver.

    Usually means the regularization is too small, or a step size too
    large, for the cost scale at hand. ``iteration`` is the update index
    at which the failure was detected.
    """

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration
