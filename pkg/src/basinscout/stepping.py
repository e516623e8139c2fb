"""Time stepping: discrete maps, RK4 / Dormand-Prince ODE integration,
stroboscopic and plane-crossing return maps, projections, and the automatic
step-size heuristic.

All steppers are pure: they allocate their own work arrays, never touch
shared data, and are safe to run on many trajectories concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numba import njit
from numba.core.registry import CPUDispatcher

from .errors import AutoDtFailed, ConfigurationError, DivergedNumerically
from .grid import Grid

MODE_MAP = 0
MODE_ODE = 1
MODE_STROBO = 2
MODE_POINCARE = 3

METHOD_RK4 = 0
METHOD_DP5 = 1

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_NO_CROSSING = 2
STATUS_UNDERFLOW = 3

_METHOD_CODES = {"rk4": METHOD_RK4, "dp5": METHOD_DP5}
_DIRECTION_CODES = {"+": 1, "-": -1, "both": 0}


@dataclass(frozen=True)
class Stroboscopic:
    """Sample a periodically forced flow once per forcing period."""

    period: float

    def __post_init__(self):
        if not self.period > 0:
            raise ConfigurationError(f"stroboscopic period must be > 0, got {self.period}")


@dataclass(frozen=True)
class PoincarePlane:
    """Return map on the plane ``state[axis] == offset``.

    `direction` is "+" for upward crossings, "-" for downward, "both" for any.
    """

    axis: int
    offset: float = 0.0
    direction: str = "+"

    def __post_init__(self):
        if self.axis < 0:
            raise ConfigurationError(f"plane axis must be >= 0, got {self.axis}")
        if self.direction not in _DIRECTION_CODES:
            raise ConfigurationError(
                f"direction must be one of {sorted(_DIRECTION_CODES)}, got {self.direction!r}"
            )

    @property
    def direction_code(self) -> int:
        return _DIRECTION_CODES[self.direction]


@dataclass
class SystemDefinition:
    """A dynamical system: evolution rule, stepping mode, optional projection.

    `rule(state, params, t)` returns the next state for maps or the time
    derivative for ODEs. Rules are compiled with numba on first use; plain
    Python functions are accepted as long as numba can handle them.
    """

    kind: str
    rule: Callable
    params: np.ndarray
    dimension: int
    wrapper: Stroboscopic | PoincarePlane | None = None
    projection: tuple[int, ...] | None = None
    fill: np.ndarray | None = None
    name: str = ""
    _dispatcher: CPUDispatcher | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("map", "ode"):
            raise ConfigurationError(f"kind must be 'map' or 'ode', got {self.kind!r}")
        if self.dimension < 1:
            raise ConfigurationError(f"dimension must be >= 1, got {self.dimension}")
        self.params = np.asarray(self.params, dtype=float).reshape(-1)
        if self.wrapper is not None and self.kind != "ode":
            raise ConfigurationError("stroboscopic/plane-crossing wrappers require an ODE")
        if isinstance(self.wrapper, PoincarePlane) and self.wrapper.axis >= self.dimension:
            raise ConfigurationError(
                f"plane axis {self.wrapper.axis} outside state dimension {self.dimension}"
            )
        if self.projection is not None:
            proj = tuple(int(i) for i in self.projection)
            if len(set(proj)) != len(proj):
                raise ConfigurationError(f"projection indices must be distinct, got {proj}")
            if any(i < 0 or i >= self.dimension for i in proj):
                raise ConfigurationError(
                    f"projection indices must lie in [0, {self.dimension}), got {proj}"
                )
            self.projection = proj
        if self.fill is None:
            self.fill = np.zeros(self.dimension)
        else:
            self.fill = np.asarray(self.fill, dtype=float).reshape(-1)
            if self.fill.shape != (self.dimension,):
                raise ConfigurationError(
                    f"fill needs {self.dimension} entries, got {self.fill.shape[0]}"
                )

    @property
    def grid_dimension(self) -> int:
        """Dimension of the observed (possibly projected) space."""
        return len(self.projection) if self.projection is not None else self.dimension

    @property
    def projection_indices(self) -> np.ndarray:
        if self.projection is None:
            return np.arange(self.dimension, dtype=np.int64)
        return np.array(self.projection, dtype=np.int64)

    @property
    def mode(self) -> int:
        if self.kind == "map":
            return MODE_MAP
        if isinstance(self.wrapper, Stroboscopic):
            return MODE_STROBO
        if isinstance(self.wrapper, PoincarePlane):
            return MODE_POINCARE
        return MODE_ODE

    def prepared_rule(self) -> CPUDispatcher:
        """Numba dispatcher for the rule, compiling and probing it once."""
        if self._dispatcher is None:
            fn = self.rule
            if not isinstance(fn, CPUDispatcher):
                fn = njit(cache=False)(fn)
            try:
                out = fn(self.fill.copy(), self.params, 0.0)
            except Exception as exc:  # numba typing errors carry long traces
                raise ConfigurationError(
                    f"rule of system {self.name or '<anonymous>'} is not numba-compilable "
                    f"with signature rule(state, params, t): {exc}"
                ) from exc
            out = np.asarray(out)
            if out.shape != (self.dimension,):
                raise ConfigurationError(
                    f"rule returned shape {out.shape}, expected ({self.dimension},)"
                )
            self._dispatcher = fn
        return self._dispatcher

    def lift(self, grid_point: Sequence[float]) -> np.ndarray:
        """Full-space state for a grid point: fill values plus observed coords."""
        state = self.fill.copy()
        state[self.projection_indices] = np.asarray(grid_point, dtype=float)
        return state


@dataclass(frozen=True)
class StepperConfig:
    """Integrator choice and step control.

    `dt` is the machine's time step for plain ODEs and the inner step for
    return-map wrappers; None means "derive it with auto_dt" where a grid is
    available. Tolerances only apply to the adaptive method.
    """

    method: str = "dp5"
    dt: float | None = None
    abstol: float = 1e-9
    reltol: float = 1e-9
    max_step: float | None = None
    poincare_max_steps: int = 100_000

    def __post_init__(self):
        if self.method not in _METHOD_CODES:
            raise ConfigurationError(
                f"method must be one of {sorted(_METHOD_CODES)}, got {self.method!r}"
            )
        if self.dt is not None and not self.dt > 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if not (self.abstol > 0 and self.reltol > 0):
            raise ConfigurationError("tolerances must be > 0")
        if self.max_step is not None and not self.max_step > 0:
            raise ConfigurationError(f"max_step must be > 0, got {self.max_step}")
        if self.poincare_max_steps < 1:
            raise ConfigurationError("poincare_max_steps must be >= 1")

    @property
    def method_code(self) -> int:
        return _METHOD_CODES[self.method]


@njit(cache=True)
def _rk4_span(rule, p, y, t, span, max_h):
    """Classical RK4 over [t, t+span] in equal substeps of at most max_h."""
    n = 1
    if max_h > 0.0 and span > max_h:
        n = int(math.ceil(span / max_h))
    h = span / n
    for i in range(n):
        ti = t + i * h
        k1 = rule(y, p, ti)
        k2 = rule(y + 0.5 * h * k1, p, ti + 0.5 * h)
        k3 = rule(y + 0.5 * h * k2, p, ti + 0.5 * h)
        k4 = rule(y + h * k3, p, ti + h)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


@njit(cache=True)
def _dp5_span(rule, p, y, t, span, atol, rtol, h0):
    """Dormand-Prince 5(4) from t to exactly t+span; returns (y, ok, h_next).

    Embedded 4th-order error estimate with step rejection; the error norm is
    the RMS of componentwise errors scaled by atol + rtol*|y|. `h0` seeds the
    step size (pass 0 to start from the full span); the returned h_next lets
    a caller stepping the same trajectory repeatedly skip the warm-up
    rejections of the next call.
    """
    n = y.shape[0]
    tend = t + span
    h = span
    if 0.0 < h0 < span:
        h = h0
    y = y.copy()
    ok = True
    h_next = 0.0
    while True:
        last = False
        if h >= tend - t:
            h = tend - t
            last = True
        k1 = rule(y, p, t)
        k2 = rule(y + h * (0.2 * k1), p, t + 0.2 * h)
        k3 = rule(y + h * (0.075 * k1 + 0.225 * k2), p, t + 0.3 * h)
        k4 = rule(y + h * ((44.0 / 45.0) * k1 + (-56.0 / 15.0) * k2 + (32.0 / 9.0) * k3),
                  p, t + 0.8 * h)
        k5 = rule(y + h * ((19372.0 / 6561.0) * k1 + (-25360.0 / 2187.0) * k2
                           + (64448.0 / 6561.0) * k3 + (-212.0 / 729.0) * k4),
                  p, t + (8.0 / 9.0) * h)
        k6 = rule(y + h * ((9017.0 / 3168.0) * k1 + (-355.0 / 33.0) * k2
                           + (46732.0 / 5247.0) * k3 + (49.0 / 176.0) * k4
                           + (-5103.0 / 18656.0) * k5),
                  p, t + h)
        y5 = y + h * ((35.0 / 384.0) * k1 + (500.0 / 1113.0) * k3 + (125.0 / 192.0) * k4
                      + (-2187.0 / 6784.0) * k5 + (11.0 / 84.0) * k6)
        k7 = rule(y5, p, t + h)

        err = 0.0
        for i in range(n):
            e = h * ((71.0 / 57600.0) * k1[i] + (-71.0 / 16695.0) * k3[i]
                     + (71.0 / 1920.0) * k4[i] + (-17253.0 / 339200.0) * k5[i]
                     + (22.0 / 525.0) * k6[i] + (-1.0 / 40.0) * k7[i])
            sc = atol + rtol * max(abs(y[i]), abs(y5[i]))
            e = e / sc
            err += e * e
        err = math.sqrt(err / n)

        if math.isfinite(err) and err <= 1.0:
            t = t + h
            y = y5
            if err == 0.0:
                fac = 5.0
            else:
                fac = min(5.0, max(0.2, 0.9 * err ** -0.2))
            # carry the largest suggestion, not the span-clipped final step
            if h * fac > h_next:
                h_next = h * fac
            h = h * fac
            if last:
                break
        else:
            if math.isfinite(err):
                h = h * max(0.2, 0.9 * err ** -0.2)
            else:
                h = h * 0.2
            if t + h == t:
                ok = False
                break
    return y, ok, h_next


@njit(cache=True)
def _advance_span(rule, p, y, t, span, method, inner_h, atol, rtol, h0):
    """Advance an ODE by exactly `span`; returns (y, ok, h_next)."""
    if method == METHOD_RK4:
        return _rk4_span(rule, p, y, t, span, inner_h), True, 0.0
    return _dp5_span(rule, p, y, t, span, atol, rtol, h0)


@njit(cache=True)
def _all_finite(y):
    for i in range(y.shape[0]):
        if not math.isfinite(y[i]):
            return False
    return True


@njit(cache=True)
def _advance(rule, p, y, t, mode, method, dt, period, pax, poff, pdir,
             atol, rtol, max_h, pmax, h0):
    """One machine step of the wrapped system; returns (y, t, status, h_next).

    MODE_MAP applies the rule once, MODE_ODE advances dt, MODE_STROBO
    advances one period, MODE_POINCARE advances to the next configured plane
    crossing (detected between chunks of size dt, then refined by bisection).
    `h0`/`h_next` carry the adaptive method's step size between consecutive
    calls on the same trajectory; pass 0 when stepping cold.
    """
    if mode == MODE_MAP:
        y = rule(y, p, t)
        t = t + 1.0
        if not _all_finite(y):
            return y, t, STATUS_NONFINITE, 0.0
        return y, t, STATUS_OK, 0.0

    if mode == MODE_ODE:
        inner = max_h if max_h > 0.0 else dt
        y2, ok, hn = _advance_span(rule, p, y, t, dt, method, inner, atol, rtol, h0)
        t = t + dt
        if not ok:
            return y2, t, STATUS_UNDERFLOW, hn
        if not _all_finite(y2):
            return y2, t, STATUS_NONFINITE, hn
        return y2, t, STATUS_OK, hn

    if mode == MODE_STROBO:
        inner = dt
        if max_h > 0.0 and max_h < inner:
            inner = max_h
        y2, ok, hn = _advance_span(rule, p, y, t, period, method, inner, atol,
                                   rtol, h0)
        t = t + period
        if not ok:
            return y2, t, STATUS_UNDERFLOW, hn
        if not _all_finite(y2):
            return y2, t, STATUS_NONFINITE, hn
        return y2, t, STATUS_OK, hn

    # MODE_POINCARE: march in chunks of dt, bisect the bracketing chunk.
    tol = 1e-9 * max(1.0, abs(poff))
    arm = 100.0 * tol
    inner = dt
    if 0.0 < max_h < inner:
        inner = max_h
    f_prev = y[pax] - poff
    armed = abs(f_prev) > arm
    yc = y.copy()
    tc = t
    hc = h0
    for _ in range(pmax):
        y2, ok, hn = _advance_span(rule, p, yc, tc, dt, method, inner, atol, rtol, hc)
        if hn > 0.0:
            hc = hn
        if not ok:
            return y2, tc + dt, STATUS_UNDERFLOW, hc
        if not _all_finite(y2):
            return y2, tc + dt, STATUS_NONFINITE, hc
        f = y2[pax] - poff
        if not armed:
            if abs(f) > arm:
                armed = True
        elif ((pdir >= 0 and f_prev < 0.0 <= f)
              or (pdir <= 0 and f_prev > 0.0 >= f)):
            # Bisect inside [tc, tc+dt] starting from the pre-chunk state.
            s_lo = yc
            t_lo = tc
            f_lo = f_prev
            span = dt
            s_mid = y2
            f_mid = f
            for _ in range(200):
                if abs(f_mid) <= tol:
                    break
                half = 0.5 * span
                hb = half
                if 0.0 < max_h < hb:
                    hb = max_h
                s_mid, ok, _hb = _advance_span(rule, p, s_lo, t_lo, half,
                                               method, hb, atol, rtol, 0.0)
                if not ok or not _all_finite(s_mid):
                    return s_mid, t_lo + half, STATUS_NONFINITE, hc
                f_mid = s_mid[pax] - poff
                crossed = ((pdir >= 0 and f_lo < 0.0 <= f_mid)
                           or (pdir <= 0 and f_lo > 0.0 >= f_mid))
                if crossed:
                    span = half
                else:
                    s_lo = s_mid
                    t_lo = t_lo + half
                    f_lo = f_mid
                    span = half
                    if span <= 1e-15 * max(1.0, abs(t_lo)):
                        break
            return s_mid, t_lo + span, STATUS_OK, hc
        yc = y2
        tc = tc + dt
        f_prev = f
    return yc, tc, STATUS_NO_CROSSING, hc


def step(system: SystemDefinition, state: Sequence[float], t: float = 0.0,
         cfg: StepperConfig | None = None) -> tuple[np.ndarray, float]:
    """One machine step of `system` from (state, t); returns (state', t').

    For maps this is one rule application; for ODEs an advance of exactly dt;
    for wrapped systems one period or one plane crossing. Raises
    DivergedNumerically when the state goes non-finite or the adaptive step
    underflows, and ConfigurationError when dt is needed but missing.
    """
    cfg = cfg or StepperConfig()
    y = np.asarray(state, dtype=float).copy()
    if y.shape != (system.dimension,):
        raise ConfigurationError(
            f"state has shape {y.shape}, system dimension is {system.dimension}"
        )
    if not np.all(np.isfinite(y)):
        raise DivergedNumerically("initial state is not finite")
    mode = system.mode
    dt = cfg.dt if cfg.dt is not None else 0.0
    if mode in (MODE_ODE, MODE_POINCARE) and not dt > 0:
        raise ConfigurationError("this system needs an explicit dt (or auto_dt with a grid)")
    if mode == MODE_STROBO and not dt > 0:
        dt = system.wrapper.period  # inner RK4 substep defaults to one period
    period = system.wrapper.period if mode == MODE_STROBO else 0.0
    if mode == MODE_POINCARE:
        pax, poff, pdir = (system.wrapper.axis, system.wrapper.offset,
                           system.wrapper.direction_code)
    else:
        pax, poff, pdir = 0, 0.0, 0
    rule = system.prepared_rule()
    y2, t2, status, _h = _advance(
        rule, system.params, y, float(t), mode, cfg.method_code, dt, period,
        pax, poff, pdir, cfg.abstol, cfg.reltol,
        cfg.max_step if cfg.max_step is not None else -1.0,
        cfg.poincare_max_steps, 0.0,
    )
    if status == STATUS_NONFINITE:
        raise DivergedNumerically("state became non-finite during the step")
    if status == STATUS_UNDERFLOW:
        raise DivergedNumerically("adaptive step size underflowed")
    if status == STATUS_NO_CROSSING:
        raise DivergedNumerically(
            f"no plane crossing within {cfg.poincare_max_steps} inner steps"
        )
    return y2, t2


def project(state: Sequence[float], projection: Sequence[int]) -> np.ndarray:
    """Selected coordinates of `state`, in projection order."""
    s = np.asarray(state, dtype=float)
    idx = [int(i) for i in projection]
    if any(i < 0 or i >= s.shape[0] for i in idx):
        raise ConfigurationError(f"projection {idx} outside state of dimension {s.shape[0]}")
    return s[idx]


def auto_dt(system: SystemDefinition, grid: Grid, n_samples: int = 5000,
            seed: int = 0) -> float:
    """Step size of ten average cell-crossing times.

    Samples seeded pseudo-random cell centers (unobserved coordinates at the
    system's fill values), measures the mean speed |f| there, and returns
    10 * mean_axis_step / mean_speed. Near-stationary samples (|f| < 1e-12)
    are discarded; if every sample is discarded the heuristic fails and the
    caller must supply dt.
    """
    if system.kind != "ode":
        raise ConfigurationError("auto_dt only applies to ODE systems")
    if grid.ndim != system.grid_dimension:
        raise ConfigurationError(
            f"grid has {grid.ndim} axes but the system observes {system.grid_dimension}"
        )
    rule = system.prepared_rule()
    rng = np.random.default_rng(seed)
    lows, steps = grid.lows, grid.steps
    lengths = grid.lengths
    idx = np.column_stack([rng.integers(0, lengths[d], size=n_samples)
                           for d in range(grid.ndim)])
    speeds = np.empty(n_samples)
    state = system.fill.copy()
    proj = system.projection_indices
    for i in range(n_samples):
        state[proj] = lows + idx[i] * steps
        f = rule(state, system.params, 0.0)
        speeds[i] = math.sqrt(float(np.dot(f, f)))
    kept = speeds[speeds >= 1e-12]
    if kept.size == 0:
        raise AutoDtFailed(
            "all sampled cell centers are near-stationary; supply dt explicitly"
        )
    mean_step = float(np.mean(steps))
    return 10.0 * mean_step / float(np.mean(kept))


def resolve_stepper(system: SystemDefinition, grid: Grid,
                    cfg: StepperConfig | None, seed: int = 0) -> StepperConfig:
    """Fill in dt (via auto_dt) where the configuration left it open."""
    cfg = cfg or StepperConfig()
    if system.kind == "ode" and cfg.dt is None:
        return replace(cfg, dt=auto_dt(system, grid, seed=seed))
    return cfg
