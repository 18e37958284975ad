"""Exception types shared across the toolkit.

The CLI maps these to exit codes: ConfigError -> 2, BlowUpError and
BoundaryInfeasibleError -> 3, TrainingDivergenceError -> 4.
"""

from __future__ import annotations

__all__ = [
    "ConfigError",
    "StateError",
    "BlowUpError",
    "BoundaryInfeasibleError",
    "KernelConvergenceError",
    "TrainingDivergenceError",
]


class ConfigError(ValueError):
    """Invalid configuration (grid, scenario file, checkpoint mismatch...)."""


class StateError(ValueError):
    """A traffic state violates its invariants (e.g. nonpositive density)."""


class BlowUpError(RuntimeError):
    """The numerical solution left the admissible region.

    Carries the first offending node index and the simulation time; the
    step index is filled in by closed-loop drivers.
    """

    def __init__(self, message: str, node: int | None = None,
                 time: float | None = None, step: int | None = None):
        super().__init__(message)
        self.node = node
        self.time = time
        self.step = step


class BoundaryInfeasibleError(BlowUpError):
    """A boundary solve found no admissible density in (0, rho_m)."""


class KernelConvergenceError(RuntimeError):
    """The gain-kernel fixed-point iteration did not reach tolerance."""


class TrainingDivergenceError(RuntimeError):
    """Network parameters became non-finite during training."""
