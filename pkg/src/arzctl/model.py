"""Physical model of a freeway segment: parameters, fundamental diagram,
reference steady states and the characteristic structure around them.

All quantities are SI internally (veh/m, m/s, veh/s, s, m). Unit
conversions to veh/km, km/h etc. happen only at the I/O boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelParams",
    "SteadyState",
    "LinearCoeffs",
    "equilibrium_velocity",
    "equilibrium_velocity_slope",
    "make_steady_state",
    "is_congested",
    "linearize",
]


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the traffic model.

    v_m: free-flow (maximum) speed [m/s]
    rho_m: jam density [veh/m]
    tau: driver relaxation time [s] (math.inf disables relaxation)
    L: segment length [m]
    """

    v_m: float
    rho_m: float
    tau: float
    L: float

    def __post_init__(self):
        if not (self.v_m > 0 and self.rho_m > 0 and self.tau > 0 and self.L > 0):
            raise ValueError(
                f"all model parameters must be positive, got "
                f"v_m={self.v_m}, rho_m={self.rho_m}, tau={self.tau}, L={self.L}"
            )


@dataclass(frozen=True)
class SteadyState:
    """A reference equilibrium (rho*, v*) and its derived quantities.

    rho_star: reference density [veh/m]
    v_star: reference speed [m/s], equals the equilibrium speed at rho_star
    q_star: reference flow [veh/s]
    lambda1: first characteristic speed [m/s], always v_star > 0
    lambda2: second characteristic speed [m/s], negative in congestion
    """

    rho_star: float
    v_star: float
    q_star: float
    lambda1: float
    lambda2: float


@dataclass(frozen=True)
class LinearCoeffs:
    """Coefficients of the dynamics linearized around a congested steady state,
    written in characteristic (Riemann) coordinates.

    The downstream-traveling coordinate is the flow-like combination
    z1 = q_dev - g_p * v_dev, self-damped at rate 1/tau; the upstream-traveling
    coordinate is the velocity deviation itself.  After the exponential
    rescaling w = z1 * exp(x / (tau v*)) the system is two advection equations
    with one-directional in-domain coupling c(x) * w driving the velocity
    coordinate, where c(x) = Vp / (tau v*) * exp(-x / (tau v*)).

    lambda1, lambda2: advection speeds [m/s]
    coupling_scale: c(0) = Vp / (tau v*) [1/(veh s) scale]
    coupling_rate: decay rate 1/(tau v*) of the coupling in x [1/m]
    inlet_reflection: ratio z1(0)/v_dev(0) implied by a constant-flux inlet,
        equals -g_p = -lambda2/Vp [veh/m]
    g_p: the collocated proportional gain lambda2/Vp = rho* + v*/Vp [veh/m]
    Vp: slope of the equilibrium speed at rho* [m/s per veh/m]
    ss, params: the steady state and model this linearization belongs to
    """

    lambda1: float
    lambda2: float
    coupling_scale: float
    coupling_rate: float
    inlet_reflection: float
    g_p: float
    Vp: float
    ss: SteadyState
    params: ModelParams

    def coupling(self, x):
        """In-domain coupling coefficient c(x), vectorized over x."""
        return self.coupling_scale * np.exp(-self.coupling_rate * np.asarray(x, dtype=float))


def equilibrium_velocity(rho, params: ModelParams, check: bool = True):
    """Equilibrium speed V(rho) = v_m (1 - rho/rho_m), the linear speed-density
    relation. Accepts scalars or arrays; rho must lie in [0, rho_m] unless
    check=False (solver internals evaluate transient out-of-range states)."""
    r = np.asarray(rho, dtype=float)
    if check and (np.any(r < 0) or np.any(r > params.rho_m)):
        raise ValueError(f"density outside [0, rho_m={params.rho_m}]")
    v = params.v_m * (1.0 - r / params.rho_m)
    return float(v) if np.isscalar(rho) or r.ndim == 0 else v


def equilibrium_velocity_slope(rho, params: ModelParams) -> float:
    """Slope V'(rho) = -v_m/rho_m, constant for the linear relation."""
    return -params.v_m / params.rho_m


def make_steady_state(rho_star: float, params: ModelParams) -> SteadyState:
    """Build the reference steady state at density rho_star in (0, rho_m)."""
    if not (0.0 < rho_star < params.rho_m):
        raise ValueError(f"rho_star={rho_star} outside (0, rho_m={params.rho_m})")
    v_star = equilibrium_velocity(rho_star, params)
    vp = equilibrium_velocity_slope(rho_star, params)
    return SteadyState(
        rho_star=rho_star,
        v_star=v_star,
        q_star=rho_star * v_star,
        lambda1=v_star,
        lambda2=v_star + rho_star * vp,
    )


def is_congested(ss: SteadyState) -> bool:
    """True iff the second characteristic travels upstream (lambda2 < 0)."""
    return ss.lambda2 < 0.0


def linearize(ss: SteadyState, params: ModelParams) -> LinearCoeffs:
    """Linearize the dynamics around a congested steady state.

    Raises ValueError for a free-flow steady state (lambda2 >= 0), where the
    boundary structure assumed by the controllers does not apply.
    """
    if not is_congested(ss):
        raise ValueError(
            f"steady state with lambda2={ss.lambda2} >= 0 is free-flow; "
            "linearized boundary-control analysis requires congestion"
        )
    vp = equilibrium_velocity_slope(ss.rho_star, params)
    g_p = ss.lambda2 / vp  # equals rho* + v*/V'(rho*)
    tau_v = params.tau * ss.v_star
    rate = 0.0 if math.isinf(tau_v) else 1.0 / tau_v
    scale = vp * rate
    return LinearCoeffs(
        lambda1=ss.lambda1,
        lambda2=ss.lambda2,
        coupling_scale=scale,
        coupling_rate=rate,
        inlet_reflection=-g_p,
        g_p=g_p,
        Vp=vp,
        ss=ss,
        params=params,
    )
