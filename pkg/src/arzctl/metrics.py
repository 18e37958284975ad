"""Stabilization rewards and traffic performance indices over trajectories.

The reward is the negative sum of squared per-node relative deviations from
the reference state (density and velocity), the discrete counterpart of the
L2 regulation objective. Performance indices are space-time trapezoid
integrals: total travel time of the density field, a speed-acceleration fuel
proxy, and a squared acceleration-plus-jerk comfort measure, both weighted
by density.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SteadyState
from .solver import Trajectory, TrafficState

__all__ = [
    "FUEL_COEFFS",
    "PerfReport",
    "step_reward",
    "reward_series",
    "cumulative_reward",
    "l2_deviation",
    "combined_relative_deviation",
    "acceleration_field",
    "perf_indices",
    "compare_reports",
]

# fuel-proxy coefficients: idle [l/s], speed [l/m], cubed-speed, speed*accel
FUEL_COEFFS = dict(b0=25e-3, b1=24.5e-6, b3=32.5e-9, b4=125e-6)


@dataclass(frozen=True)
class PerfReport:
    """Aggregate figures for one closed-loop run."""

    J_TTT: float            # veh s
    J_fuel: float           # liters
    J_comfort: float        # density-weighted acceleration/jerk aggregate
    cum_reward: float
    time_to_threshold: float | None
    improvements: dict | None = None


def step_reward(s: TrafficState, ss_true: SteadyState, mode: str = "per_cell") -> float:
    """Reward of one state: non-positive, zero only at the reference.

    "per_cell" sums squared relative deviations node by node; "literal" sums
    the deviations first and squares once, penalizing only the node totals.
    """
    rho_rel = (s.rho - ss_true.rho_star) / ss_true.rho_star
    v_rel = (s.v - ss_true.v_star) / ss_true.v_star
    if mode == "per_cell":
        return float(-(np.sum(rho_rel ** 2) + np.sum(v_rel ** 2)))
    if mode == "literal":
        return float(-(np.sum(rho_rel) ** 2 + np.sum(v_rel) ** 2))
    raise ValueError(f"unknown reward mode {mode!r}")


def reward_series(traj: Trajectory, ss_true: SteadyState,
                  mode: str = "per_cell") -> np.ndarray:
    """Reward of every recorded state, initial state included."""
    return np.array([step_reward(s, ss_true, mode) for s in traj.states])


def cumulative_reward(traj: Trajectory, ss_true: SteadyState,
                      mode: str = "per_cell") -> float:
    """Sum of the rewards received after each step (initial state excluded),
    matching the environment's episode accumulation."""
    return float(np.sum(reward_series(traj, ss_true, mode)[1:]))


def l2_deviation(s: TrafficState, ss: SteadyState, dx: float):
    """Discrete spatial L2 norms of the density and velocity deviations."""
    norm_rho = float(np.sqrt(np.sum((s.rho - ss.rho_star) ** 2) * dx))
    norm_v = float(np.sqrt(np.sum((s.v - ss.v_star) ** 2) * dx))
    return norm_rho, norm_v


def combined_relative_deviation(s: TrafficState, ss: SteadyState, dx: float) -> float:
    """Dimensionless combined deviation used for thresholds and ratios."""
    nr, nv = l2_deviation(s, ss, dx)
    return float(np.hypot(nr / ss.rho_star, nv / ss.v_star))


def _d_dt(field: np.ndarray, dt: float) -> np.ndarray:
    out = np.empty_like(field)
    out[1:-1] = (field[2:] - field[:-2]) / (2.0 * dt)
    out[0] = (field[1] - field[0]) / dt
    out[-1] = (field[-1] - field[-2]) / dt
    return out


def _d_dx(field: np.ndarray, dx: float) -> np.ndarray:
    out = np.empty_like(field)
    out[:, 1:-1] = (field[:, 2:] - field[:, :-2]) / (2.0 * dx)
    out[:, 0] = (field[:, 1] - field[:, 0]) / dx
    out[:, -1] = (field[:, -1] - field[:, -2]) / dx
    return out


def acceleration_field(traj: Trajectory) -> np.ndarray:
    """Local acceleration a = v_t + v*v_x on the full space-time grid;
    central differences inside, one-sided on the edges."""
    if len(traj.states) < 2:
        raise ValueError("acceleration needs at least two time steps")
    _, _, v = traj.arrays()
    return _d_dt(v, traj.grid.dt) + v * _d_dx(v, traj.grid.dx)


def perf_indices(traj: Trajectory, ss: SteadyState, fuel_cubic: bool = True,
                 reward_mode: str = "per_cell",
                 threshold: float = 1e-3) -> PerfReport:
    """Space-time trapezoid integrals of the three indices plus the reward
    summary of the run.

    fuel_cubic selects the cubed-speed reading of the fuel proxy's third
    term; the printed linear duplicate remains available with False.
    """
    grid = traj.grid
    _, rho, v = traj.arrays()
    a = acceleration_field(traj)
    a_t = _d_dt(a, grid.dt)

    def integrate(f):
        return float(np.trapezoid(np.trapezoid(f, dx=grid.dx, axis=1), dx=grid.dt))

    c = FUEL_COEFFS
    v_term = v ** 3 if fuel_cubic else v
    fuel_rate = np.maximum(0.0, c["b0"] + c["b1"] * v + c["b3"] * v_term
                           + c["b4"] * v * a)
    report = PerfReport(
        J_TTT=integrate(rho),
        J_fuel=integrate(fuel_rate * rho),
        J_comfort=integrate((a ** 2 + a_t ** 2) * rho),
        cum_reward=cumulative_reward(traj, ss, reward_mode),
        time_to_threshold=_time_to_threshold(traj, ss, threshold),
    )
    return report


def _time_to_threshold(traj: Trajectory, ss: SteadyState, threshold: float):
    eta = np.array([combined_relative_deviation(s, ss, traj.grid.dx)
                    for s in traj.states])
    if eta[0] == 0.0:
        return 0.0
    rel = eta / eta[0]
    above = np.nonzero(rel > threshold)[0]
    if len(above) == 0:
        return float(traj.states[0].t)
    if above[-1] == len(rel) - 1:
        return None
    return float(traj.states[above[-1] + 1].t)


def compare_reports(candidate: PerfReport, baseline: PerfReport) -> dict:
    """Percent improvement of each index over the baseline (reduction is
    positive); None where the baseline index is zero."""
    out = {}
    for name in ("J_TTT", "J_fuel", "J_comfort"):
        base = getattr(baseline, name)
        cand = getattr(candidate, name)
        out[name] = None if base == 0.0 else 100.0 * (base - cand) / base
    return out
