"""Exception types shared by the solvers."""

from __future__ import annotations

from typing import Any


class SolverFailure(RuntimeError):
    """A solver gave up.

    ``label`` is a short machine-readable reason (``"newton-divergence"``,
    ``"stagnation"``, ``"concentration"``, ...), ``trace`` the iteration record
    accumulated so far and ``last`` the last iterate (whatever the solver
    considers enough to restart or inspect it).
    """

    def __init__(self, label: str, message: str, trace: list | None = None, last: Any = None):
        super().__init__(f"{label}: {message}")
        self.label = label
        self.trace = trace if trace is not None else []
        self.last = last


class KernelError(SolverFailure):
    """The stationary Fokker-Planck matrix does not have a one-dimensional positive kernel."""

    def __init__(self, message: str, last: Any = None):
        super().__init__("kernel", message, last=last)


class NotApplicable(ValueError):
    """An identity or certificate was requested outside the setting where it holds."""
