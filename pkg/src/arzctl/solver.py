"""Finite-difference solver for the nonlinear second-order traffic PDE.

The hyperbolic part is advanced with the two-step (Richtmyer) Lax-Wendroff
scheme in conservative variables (u1, u2) = (rho, rho*(v - V(rho))); the
relaxation source acts on u2 only and is applied after the hyperbolic step
with its exact exponential decay. Boundary nodes are closed by combining the
commanded flux or velocity with extrapolation of the outgoing characteristic
invariant: v at the inlet, w = v - V(rho) at the outlet (congested regime).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUpError, BoundaryInfeasibleError, ConfigError, StateError
from .model import (
    ModelParams,
    SteadyState,
    equilibrium_velocity,
    equilibrium_velocity_slope,
)

__all__ = [
    "Grid",
    "TrafficState",
    "ConservedState",
    "BoundaryCommand",
    "Trajectory",
    "make_grid",
    "to_conserved",
    "from_conserved",
    "flux",
    "source",
    "richtmyer_interior",
    "apply_boundary",
    "lax_wendroff_step",
    "simulate",
    "max_wave_speed",
]

_RHO_EPS = 1e-6  # safeguard margin [veh/m] for boundary root brackets


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid. M spatial nodes (boundaries included),
    N temporal nodes, so dx = L/(M-1) and dt = T/(N-1)."""

    dx: float
    dt: float
    M: int
    N: int
    L: float
    T: float
    c_max: float
    cfl_factor: float

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.M)

    @property
    def cfl(self) -> float:
        return self.c_max * self.dt / self.dx


@dataclass
class TrafficState:
    """Density and speed profiles at one instant on the grid nodes."""

    rho: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def copy(self) -> "TrafficState":
        return TrafficState(self.rho.copy(), self.v.copy(), self.t)


@dataclass
class ConservedState:
    """Conservative variables u1 = rho, u2 = rho*(v - V(rho))."""

    u1: np.ndarray
    u2: np.ndarray


@dataclass(frozen=True)
class BoundaryCommand:
    """Boundary actuation for one step: inlet flow [veh/s] plus either an
    outlet flow [veh/s] or an outlet velocity [m/s]."""

    inlet: float
    outlet_kind: str  # "flow" or "velocity"
    outlet_value: float

    def __post_init__(self):
        if self.outlet_kind not in ("flow", "velocity"):
            raise ValueError(f"unknown outlet kind {self.outlet_kind!r}")
        if not (self.inlet >= 0.0 and self.outlet_value >= 0.0):
            raise ValueError("boundary commands must be nonnegative")


@dataclass
class Trajectory:
    """Closed-loop rollout record: N states, N-1 commands."""

    states: list
    commands: list
    grid: Grid
    cfl_violations: int = 0

    def arrays(self):
        """Stack the trajectory as (t[N], rho[N, M], v[N, M])."""
        t = np.array([s.t for s in self.states])
        rho = np.stack([s.rho for s in self.states])
        v = np.stack([s.v for s in self.states])
        return t, rho, v


def make_grid(L: float, T: float, dx: float, cfl_factor: float, c_max: float) -> Grid:
    """Build a grid with dt as the largest exact divisor of T satisfying
    dt <= cfl_factor * dx / c_max."""
    if c_max <= 0:
        raise ConfigError(f"c_max must be positive, got {c_max}")
    if not (0.0 < cfl_factor <= 1.0):
        raise ConfigError(f"cfl_factor must lie in (0, 1], got {cfl_factor}")
    if dx <= 0 or L <= 0 or T <= 0:
        raise ConfigError("L, T and dx must be positive")
    n_cells = L / dx
    if abs(n_cells - round(n_cells)) > 1e-9 * max(1.0, n_cells):
        raise ConfigError(f"dx={dx} does not divide L={L} into whole cells")
    M = int(round(n_cells)) + 1
    dt_max = cfl_factor * dx / c_max
    n_steps = int(math.ceil(T / dt_max - 1e-12))
    dt = T / n_steps
    return Grid(dx=dx, dt=dt, M=M, N=n_steps + 1, L=L, T=T,
                c_max=c_max, cfl_factor=cfl_factor)


def to_conserved(s: TrafficState, params: ModelParams) -> ConservedState:
    """Map (rho, v) to conservative variables; requires rho > 0 everywhere."""
    if np.any(s.rho <= 0.0):
        idx = int(np.argmax(s.rho <= 0.0))
        raise StateError(f"nonpositive density {s.rho[idx]} at node {idx}")
    u2 = s.rho * (s.v - equilibrium_velocity(s.rho, params))
    return ConservedState(u1=s.rho.copy(), u2=u2)


def from_conserved(c: ConservedState, params: ModelParams, t: float = 0.0) -> TrafficState:
    """Invert to_conserved; raises StateError on nonpositive u1 (blow-up signal)."""
    if np.any(c.u1 <= 0.0):
        idx = int(np.argmax(c.u1 <= 0.0))
        raise StateError(f"nonpositive density {c.u1[idx]} at node {idx}")
    v = c.u2 / c.u1 + equilibrium_velocity(c.u1, params)
    return TrafficState(rho=c.u1.copy(), v=v, t=t)


def _velocity_of(u1: np.ndarray, u2: np.ndarray, params: ModelParams) -> np.ndarray:
    # unchecked evaluation: transient half-states may leave [0, rho_m]
    return u2 / u1 + params.v_m * (1.0 - u1 / params.rho_m)


def flux(c: ConservedState, params: ModelParams):
    """Per-node flux pair (F1, F2) = (rho*v, u2*v)."""
    v = _velocity_of(c.u1, c.u2, params)
    return c.u1 * v, c.u2 * v


def source(c: ConservedState, params: ModelParams):
    """Per-node source pair (S1, S2) = (0, -u2/tau)."""
    s2 = np.zeros_like(c.u2) if math.isinf(params.tau) else -c.u2 / params.tau
    return np.zeros_like(c.u1), s2


def richtmyer_interior(c: ConservedState, grid: Grid, params: ModelParams):
    """One hyperbolic Richtmyer update of the interior nodes.

    Returns (u1_new, u2_new) for nodes 1..M-2 and the interface flux arrays
    (F1_half, F2_half) at the M-1 half nodes; the first/last entries of
    F1_half are the fluxes bounding the interior control volume, so the
    interior mass update telescopes exactly.
    """
    lam = grid.dt / grid.dx
    u1, u2 = c.u1, c.u2
    v = _velocity_of(u1, u2, params)
    f1, f2 = u1 * v, u2 * v

    h1 = 0.5 * (u1[:-1] + u1[1:]) - 0.5 * lam * (f1[1:] - f1[:-1])
    h2 = 0.5 * (u2[:-1] + u2[1:]) - 0.5 * lam * (f2[1:] - f2[:-1])
    if np.any(h1 <= 0.0) or not np.all(np.isfinite(h1)):
        idx = int(np.argmax(~((h1 > 0.0) & np.isfinite(h1))))
        raise BlowUpError(f"half-step density became inadmissible near node {idx}",
                          node=idx)
    vh = _velocity_of(h1, h2, params)
    f1_half, f2_half = h1 * vh, h2 * vh

    u1_new = u1[1:-1] - lam * (f1_half[1:] - f1_half[:-1])
    u2_new = u2[1:-1] - lam * (f2_half[1:] - f2_half[:-1])
    return u1_new, u2_new, f1_half, f2_half


def _solve_outlet_density_flow(w: float, q_cmd: float, params: ModelParams,
                               rho_guess: float) -> float:
    """Solve rho*(w + V(rho)) = q_cmd for the congested-branch root.

    Newton from rho_guess, safeguarded by bisection on the bracket between
    the flux maximizer and rho_m - eps; iterated to machine tolerance so
    steady states are exact fixed points.
    """
    v_m, rho_m = params.v_m, params.rho_m
    vp = equilibrium_velocity_slope(0.0, params)

    def g(rho):
        return rho * (w + equilibrium_velocity(rho, params, check=False))

    def gp(rho):
        return w + equilibrium_velocity(rho, params, check=False) + rho * vp

    # vertex of the concave flux-vs-density curve at fixed w
    rho_v = min(max((w + v_m) * rho_m / (2.0 * v_m), _RHO_EPS), rho_m - _RHO_EPS)
    lo, hi = rho_v, rho_m - _RHO_EPS
    g_lo, g_hi = g(lo), g(hi)
    if not (min(g_lo, g_hi) - 1e-12 <= q_cmd <= max(g_lo, g_hi) + 1e-12):
        raise BoundaryInfeasibleError(
            f"outlet flow {q_cmd:.6g} veh/s has no admissible congested root "
            f"(attainable range [{min(g_lo, g_hi):.6g}, {max(g_lo, g_hi):.6g}])")

    rho = min(max(rho_guess, lo), hi)
    for _ in range(60):
        f_val = g(rho) - q_cmd
        if f_val == 0.0:
            return rho
        # maintain bracket (g decreasing on the congested branch)
        if f_val > 0.0:
            lo = max(lo, rho)
        else:
            hi = min(hi, rho)
        d = gp(rho)
        step_ok = d != 0.0
        if step_ok:
            rho_new = rho - f_val / d
            step_ok = lo <= rho_new <= hi
        if not step_ok:
            rho_new = 0.5 * (lo + hi)
        if abs(rho_new - rho) <= 4.0 * np.finfo(float).eps * max(abs(rho_new), 1.0):
            return rho_new
        rho = rho_new
    return rho


def _invert_velocity(v_target: float, params: ModelParams) -> float:
    """Solve V(rho) = v_target through the model operations (Newton; exact in
    one step for the linear relation)."""
    rho = 0.5 * params.rho_m
    for _ in range(4):
        rho = rho - (equilibrium_velocity(rho, params, check=False) - v_target) / \
            equilibrium_velocity_slope(rho, params)
    return rho


def apply_boundary(rho: np.ndarray, v: np.ndarray, cmd: BoundaryCommand,
                   params: ModelParams, ss_assumed: SteadyState | None = None):
    """Overwrite boundary nodes of (rho, v) in place.

    Inlet: extrapolates the outgoing invariant v from the nearest interior
    node and imposes the flow constraint rho*v = cmd.inlet. Outlet:
    extrapolates w = v - V(rho) and imposes either the commanded flow
    (congested-branch root solve) or the commanded velocity.
    """
    # inlet node
    v_in = v[1]
    if v_in <= 1e-12:
        raise BoundaryInfeasibleError(
            f"inlet extrapolated velocity {v_in:.6g} m/s cannot carry flow")
    rho_in = cmd.inlet / v_in
    if not (0.0 < rho_in <= params.rho_m):
        raise BoundaryInfeasibleError(
            f"inlet flow {cmd.inlet:.6g} veh/s needs density {rho_in:.6g} "
            f"outside (0, {params.rho_m}]")
    rho[0], v[0] = rho_in, v_in

    # outlet node
    w_out = v[-2] - equilibrium_velocity(rho[-2], params, check=False)
    if cmd.outlet_kind == "flow":
        guess = ss_assumed.rho_star if ss_assumed is not None else rho[-2]
        rho_out = _solve_outlet_density_flow(w_out, cmd.outlet_value, params, guess)
        v_out = w_out + equilibrium_velocity(rho_out, params, check=False)
    else:
        v_out = cmd.outlet_value
        rho_out = _invert_velocity(v_out - w_out, params)
        if not (0.0 < rho_out <= params.rho_m):
            raise BoundaryInfeasibleError(
                f"outlet velocity {cmd.outlet_value:.6g} m/s needs density "
                f"{rho_out:.6g} outside (0, {params.rho_m}]")
    if v_out < 0.0:
        raise BoundaryInfeasibleError(f"outlet velocity {v_out:.6g} m/s negative")
    rho[-1], v[-1] = rho_out, v_out


def _check_admissible(rho: np.ndarray, v: np.ndarray, params: ModelParams, t: float):
    bad = ~(np.isfinite(rho) & np.isfinite(v) & (rho > 0.0)
            & (rho <= params.rho_m) & (v >= 0.0))
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise BlowUpError(
            f"state left the admissible region at node {idx}, t={t:.3f} s "
            f"(rho={rho[idx]:.6g}, v={v[idx]:.6g})", node=idx, time=t)


def lax_wendroff_step(s: TrafficState, cmd: BoundaryCommand, grid: Grid,
                      params: ModelParams,
                      ss_assumed: SteadyState | None = None) -> TrafficState:
    """Advance one time step: Richtmyer interior update, exact relaxation
    decay of u2, then boundary closure; validates the result."""
    c = to_conserved(s, params)
    try:
        u1_mid, u2_mid, _, _ = richtmyer_interior(c, grid, params)
    except BlowUpError as err:
        err.time = s.t
        raise
    if not math.isinf(params.tau):
        u2_mid = u2_mid * math.exp(-grid.dt / params.tau)

    rho = s.rho.copy()
    v = s.v.copy()
    if np.any(u1_mid <= 0.0) or not np.all(np.isfinite(u1_mid)):
        idx = 1 + int(np.argmax(~((u1_mid > 0.0) & np.isfinite(u1_mid))))
        raise BlowUpError(f"density became inadmissible at node {idx}",
                          node=idx, time=s.t)
    rho[1:-1] = u1_mid
    v[1:-1] = _velocity_of(u1_mid, u2_mid, params)
    apply_boundary(rho, v, cmd, params, ss_assumed)

    t_new = s.t + grid.dt
    _check_admissible(rho, v, params, t_new)
    return TrafficState(rho=rho, v=v, t=t_new)


def max_wave_speed(s: TrafficState, params: ModelParams) -> float:
    """Largest characteristic speed |v| or |v + rho*V'(rho)| over the nodes."""
    vp = equilibrium_velocity_slope(0.0, params)
    lam2 = s.v + s.rho * vp
    return float(max(np.max(np.abs(s.v)), np.max(np.abs(lam2))))


def simulate(init: TrafficState, controller, grid: Grid, params: ModelParams,
             ss_assumed: SteadyState | None = None) -> Trajectory:
    """Closed-loop rollout of N-1 steps.

    `controller` is queried once per step with the full current state and
    must return a BoundaryCommand. Blow-up errors are re-raised with the
    step index attached.
    """
    if len(init.rho) != grid.M or len(init.v) != grid.M:
        raise ConfigError(f"initial state has {len(init.rho)} nodes, grid has {grid.M}")
    states = [init.copy()]
    commands = []
    cfl_violations = 0
    state = states[0]
    for step in range(grid.N - 1):
        cmd = controller(state)
        try:
            state = lax_wendroff_step(state, cmd, grid, params, ss_assumed)
        except BlowUpError as err:
            err.step = step
            raise
        if max_wave_speed(state, params) > grid.c_max * (1.0 + 1e-12):
            cfl_violations += 1
        states.append(state)
        commands.append(cmd)
    return Trajectory(states=states, commands=commands, grid=grid,
                      cfl_violations=cfl_violations)
