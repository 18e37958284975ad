"""Shared fixtures: the reference freeway setup used across the studies."""

import numpy as np
import pytest

from arzctl import ModelParams, TrafficState, make_grid, make_steady_state
from arzctl.control import paper_initial_deviations


@pytest.fixture(scope="session")
def params():
    """Reference segment: v_m=40 m/s, rho_m=160 veh/km, tau=60 s, L=500 m."""
    return ModelParams(v_m=40.0, rho_m=0.160, tau=60.0, L=500.0)


@pytest.fixture(scope="session")
def ss(params):
    """Congested reference state at 120 veh/km."""
    return make_steady_state(0.120, params)


@pytest.fixture(scope="session")
def grid(params):
    """Default solver grid: dx=10 m, cfl 0.8 against v_m, T=240 s."""
    return make_grid(params.L, 240.0, 10.0, 0.8, params.v_m)


@pytest.fixture()
def paper_init(ss, grid):
    """Sinusoidal initial condition around the reference state."""
    rho_dev, v_dev = paper_initial_deviations(ss, grid.x)
    return TrafficState(rho=ss.rho_star + rho_dev, v=ss.v_star + v_dev, t=0.0)


def combined_l2_ratio(states, ss, dx):
    """Relative combined deviation norm of the last state over the first."""

    def eta(s):
        return np.sqrt(np.sum(((s.rho - ss.rho_star) / ss.rho_star) ** 2) * dx
                       + np.sum(((s.v - ss.v_star) / ss.v_star) ** 2) * dx)

    return eta(states[-1]) / eta(states[0])
