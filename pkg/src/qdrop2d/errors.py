"""Exception types shared by the solvers."""
from __future__ import annotations


class SolverError(RuntimeError):
    """Base class; ``details`` is a JSON-friendly dict for machine-readable reports."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


class ConvergenceError(SolverError):
    """Iteration limit reached; ``details['best_residual']`` holds the best value seen."""


class DivergenceError(SolverError):
    pass


class StagnationError(SolverError):
    pass


class StepSizeUnderflow(SolverError):
    pass


class SimulationBlowup(SolverError):
    """Non-finite values in a time evolution; ``details['t']`` is the time of failure."""
