"""Episodic boundary-control environment wrapping the solver as an MDP.

Observations are the per-node densities normalized by the jam density
followed by the per-node velocities normalized by the free-flow speed.
Actions are raw values in [-1, 1] per actuated boundary, mapped affinely to
flows around the assumed reference flow and clamped to the physical range.
The reward is the regulation objective against the episode's true steady
state, which in partial-knowledge mode is redrawn uniformly per episode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import flow_capacity
from .errors import BlowUpError
from .metrics import step_reward
from .model import ModelParams, SteadyState, make_steady_state
from .solver import BoundaryCommand, Grid, TrafficState, lax_wendroff_step

__all__ = ["EnvConfig", "TrafficEnv", "SCHEMES", "scheme_action_dim"]

SCHEMES = ("outlet", "inlet", "both")


def scheme_action_dim(scheme: str) -> int:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown control scheme {scheme!r}")
    return 2 if scheme == "both" else 1


@dataclass(frozen=True)
class EnvConfig:
    """Environment settings for one training or evaluation run.

    true_rho_star is either a single density [veh/m] (full knowledge) or a
    tuple of candidate densities drawn uniformly at each reset (partial
    knowledge). The assumed density fixes the action scaling only.
    """

    scheme: str
    params: ModelParams
    grid: Grid
    assumed_rho_star: float
    true_rho_star: float | tuple
    gamma: float = 0.99
    reward_mode: str = "per_cell"
    amplitude_range: tuple = (0.05, 0.15)
    eval_amplitude: float = 0.1

    def __post_init__(self):
        scheme_action_dim(self.scheme)
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError(f"gamma={self.gamma} outside [0, 1]")

    @property
    def action_dim(self) -> int:
        return scheme_action_dim(self.scheme)

    @property
    def obs_dim(self) -> int:
        return 2 * self.grid.M

    @property
    def assumed_ss(self) -> SteadyState:
        return make_steady_state(self.assumed_rho_star, self.params)


class TrafficEnv:
    """Sequential episodic environment around the nonlinear solver."""

    def __init__(self, config: EnvConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng()
        self.assumed_ss = config.assumed_ss
        self.q_cap = flow_capacity(config.params)
        self.state: TrafficState | None = None
        self.true_ss: SteadyState | None = None
        self._steps = 0
        self._done = True
        self._worst_step_reward = -1.0  # running floor for blow-up penalties

    # -- episode control ----------------------------------------------------

    def reset(self, rng: np.random.Generator | None = None,
              evaluation: bool = False) -> np.ndarray:
        """Draw the episode's true steady state and sinusoidal initial
        profile; returns the initial observation.

        Training resets draw the profile amplitude uniformly from the
        configured range and flip its sign with probability 1/2; evaluation
        uses the fixed reference amplitude with positive sign.
        """
        r = rng if rng is not None else self.rng
        cfg = self.config
        choices = cfg.true_rho_star
        if isinstance(choices, (tuple, list)):
            rho_true = float(choices[int(r.integers(len(choices)))])
        else:
            rho_true = float(choices)
        self.true_ss = make_steady_state(rho_true, cfg.params)

        if evaluation:
            amp, sign = cfg.eval_amplitude, 1.0
        else:
            lo, hi = cfg.amplitude_range
            amp = lo + (hi - lo) * r.random()
            sign = 1.0 if r.random() < 0.5 else -1.0
        x = cfg.grid.x
        s = sign * np.sin(3.0 * np.pi * x / cfg.params.L)
        self.state = TrafficState(
            rho=self.true_ss.rho_star * (1.0 + amp * s),
            v=self.true_ss.v_star * (1.0 - amp * s),
            t=0.0)
        self._steps = 0
        self._done = False
        return self.observation()

    def observation(self) -> np.ndarray:
        cfg = self.config
        return np.concatenate([self.state.rho / cfg.params.rho_m,
                               self.state.v / cfg.params.v_m])

    # -- action mapping -----------------------------------------------------

    def command_from_action(self, raw_action) -> BoundaryCommand:
        """Clip the raw action, scale it around the assumed reference flow,
        and fill the unactuated boundary with the setpoint law."""
        cfg = self.config
        u = np.clip(np.atleast_1d(np.asarray(raw_action, dtype=float)), -1.0, 1.0)
        if len(u) != cfg.action_dim:
            raise ValueError(f"scheme {cfg.scheme!r} expects {cfg.action_dim} "
                             f"action values, got {len(u)}")
        q_star = self.assumed_ss.q_star

        def to_flow(ui):
            return min(max(q_star * (1.0 + 0.5 * ui), 0.0), self.q_cap)

        if cfg.scheme == "outlet":
            return BoundaryCommand(q_star, "flow", to_flow(u[0]))
        if cfg.scheme == "inlet":
            return BoundaryCommand(to_flow(u[0]), "flow", q_star)
        return BoundaryCommand(to_flow(u[0]), "flow", to_flow(u[1]))

    # -- stepping -------------------------------------------------------------

    def step(self, raw_action):
        """Advance one solver step under the commanded boundaries.

        Returns (observation, reward, done, info). Solver blow-up terminates
        the episode with a penalty of the worst step reward seen so far times
        the remaining steps.
        """
        if self._done:
            raise RuntimeError("step() called on a terminated episode; reset first")
        cfg = self.config
        cmd = self.command_from_action(raw_action)
        horizon = cfg.grid.N - 1
        try:
            self.state = lax_wendroff_step(self.state, cmd, cfg.grid, cfg.params,
                                           self.assumed_ss)
        except BlowUpError:
            remaining = horizon - self._steps
            reward = self._worst_step_reward * remaining
            self._done = True
            return self.observation(), reward, True, {"blowup": True, "command": cmd}

        self._steps += 1
        reward = step_reward(self.state, self.true_ss, cfg.reward_mode)
        self._worst_step_reward = min(self._worst_step_reward, reward)
        self._done = self._steps >= horizon
        return self.observation(), reward, self._done, {"blowup": False, "command": cmd}

    @property
    def done(self) -> bool:
        return self._done

    @property
    def horizon(self) -> int:
        return self.config.grid.N - 1
