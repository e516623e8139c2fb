"""Shared toy systems for the test suite.

Rules are module-level jitted functions so each compiles once per session.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from numba import njit

from basinscout import SystemDefinition

# First calls into jitted kernels pay one-off compilation; wall-clock
# deadlines are meaningless there.
settings.register_profile(
    "jit", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("jit")


@njit(cache=True)
def _halving_rule(y, p, t):
    out = np.empty(1)
    out[0] = 0.5 * y[0]
    return out


@njit(cache=True)
def _doubling_rule(y, p, t):
    out = np.empty(1)
    out[0] = 2.0 * y[0]
    return out


@njit(cache=True)
def _affine1d_rule(y, p, t):
    # x -> a*x + b
    out = np.empty(1)
    out[0] = p[0] * y[0] + p[1]
    return out


@njit(cache=True)
def _flip_rule(y, p, t):
    out = np.empty(1)
    out[0] = -y[0]
    return out


@njit(cache=True)
def _two_wells_map_rule(y, p, t):
    # gradient-like step toward the wells at -1 and +1
    out = np.empty(1)
    out[0] = y[0] + 0.3 * (y[0] - y[0] ** 3)
    return out


@njit(cache=True)
def _two_wells_ode_rule(y, p, t):
    out = np.empty(1)
    out[0] = y[0] - y[0] ** 3
    return out


@njit(cache=True)
def _spiral_sink_rule(y, p, t):
    # contraction with rotation toward p = (cx, cy)
    out = np.empty(2)
    dx = y[0] - p[0]
    dy = y[1] - p[1]
    out[0] = p[0] + 0.6 * (0.8 * dx - 0.6 * dy)
    out[1] = p[1] + 0.6 * (0.6 * dx + 0.8 * dy)
    return out


@njit(cache=True)
def _exp_rule(y, p, t):
    # dx/dt = a*x
    out = np.empty(1)
    out[0] = p[0] * y[0]
    return out


@njit(cache=True)
def _zero_rule(y, p, t):
    return np.zeros(y.shape[0])


@njit(cache=True)
def _rotation_rule(y, p, t):
    out = np.empty(2)
    out[0] = -y[1]
    out[1] = y[0]
    return out


@njit(cache=True)
def _constant_field_rule(y, p, t):
    out = np.empty(2)
    out[0] = p[0]
    out[1] = p[1]
    return out


@njit(cache=True)
def _forced_linear_rule(y, p, t):
    # dx = v, dv = -x - 0.2 v + cos(t): unique periodic attractor
    out = np.empty(2)
    out[0] = y[1]
    out[1] = -y[0] - 0.2 * y[1] + math.cos(t)
    return out


@pytest.fixture(scope="session")
def halving_map():
    return SystemDefinition(kind="map", rule=_halving_rule, params=np.zeros(1),
                            dimension=1, name="halving")


@pytest.fixture(scope="session")
def doubling_map():
    return SystemDefinition(kind="map", rule=_doubling_rule, params=np.zeros(1),
                            dimension=1, name="doubling")


@pytest.fixture(scope="session")
def flip_map():
    return SystemDefinition(kind="map", rule=_flip_rule, params=np.zeros(1),
                            dimension=1, name="flip")


@pytest.fixture(scope="session")
def two_wells_map():
    return SystemDefinition(kind="map", rule=_two_wells_map_rule,
                            params=np.zeros(1), dimension=1, name="two_wells_map")


@pytest.fixture(scope="session")
def two_wells_ode():
    return SystemDefinition(kind="ode", rule=_two_wells_ode_rule,
                            params=np.zeros(1), dimension=1, name="two_wells_ode")


@pytest.fixture(scope="session")
def spiral_sink_map():
    return SystemDefinition(kind="map", rule=_spiral_sink_rule,
                            params=np.array([0.3, -0.4]), dimension=2,
                            name="spiral_sink")


def make_affine_map(a: float, b: float) -> SystemDefinition:
    return SystemDefinition(kind="map", rule=_affine1d_rule,
                            params=np.array([a, b]), dimension=1, name="affine")


def make_exp_ode(a: float = 1.0) -> SystemDefinition:
    return SystemDefinition(kind="ode", rule=_exp_rule, params=np.array([a]),
                            dimension=1, name="exp")


def make_zero_ode(dim: int = 2) -> SystemDefinition:
    return SystemDefinition(kind="ode", rule=_zero_rule, params=np.zeros(1),
                            dimension=dim, name="zero")


def make_rotation_ode() -> SystemDefinition:
    return SystemDefinition(kind="ode", rule=_rotation_rule, params=np.zeros(1),
                            dimension=2, name="rotation")


def make_constant_field(fx: float, fy: float) -> SystemDefinition:
    return SystemDefinition(kind="ode", rule=_constant_field_rule,
                            params=np.array([fx, fy]), dimension=2,
                            name="constant_field")


def make_forced_linear() -> SystemDefinition:
    return SystemDefinition(kind="ode", rule=_forced_linear_rule,
                            params=np.zeros(1), dimension=2, name="forced_linear")
