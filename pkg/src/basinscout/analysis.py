"""Post-processing of label arrays and the naive-baseline comparison."""

from __future__ import annotations

import concurrent.futures
import math
import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from .engine import AttractorStore, BasinsResult, _pack_run_params, basins_of_attraction
from .errors import ConfigurationError
from .fsm import RecurrenceParams
from .grid import Grid
from .stepping import (
    MODE_MAP,
    MODE_POINCARE,
    MODE_STROBO,
    STATUS_OK,
    StepperConfig,
    SystemDefinition,
    _advance,
    resolve_stepper,
)


@dataclass(frozen=True)
class FractionReport:
    """Share of grid cells per label; counts are exact, fractions derived."""

    counts: dict[int, int]
    total: int

    @property
    def fractions(self) -> dict[int, float]:
        return {k: v / self.total for k, v in self.counts.items()}

    def of(self, label: int) -> float:
        return self.counts.get(label, 0) / self.total


@dataclass(frozen=True)
class BenchmarkReport:
    method: str
    seconds: float
    grid_size: int
    agreement: float

    def as_dict(self) -> dict:
        return {"method": self.method, "seconds": self.seconds,
                "grid_size": self.grid_size, "agreement": self.agreement}


def basin_fractions(basins: np.ndarray) -> FractionReport:
    """Label counts divided by the total cell count."""
    arr = np.asarray(basins)
    if arr.size == 0:
        raise ConfigurationError("cannot take fractions of an empty array")
    values, counts = np.unique(arr, return_counts=True)
    return FractionReport(
        counts={int(v): int(c) for v, c in zip(values, counts)},
        total=int(arr.size),
    )


@njit(nogil=True)
def _naive_range(rule, sysp, labels, start, stop, lows, gsteps, lengths, proj,
                 fill, fixed_pts, speed_tol, pos_tol2, max_steps, is_map, ip, fp):
    mode, method = ip[0], ip[1]
    pax, pdir, pmax = ip[8], ip[9], ip[10]
    dt, period, poff, atol, rtol, max_h = fp[0], fp[1], fp[2], fp[3], fp[4], fp[5]

    gdim = lows.shape[0]
    dim = fill.shape[0]
    n_fp = fixed_pts.shape[0]

    for flat in range(start, stop):
        y = fill.copy()
        rem = flat
        for d in range(gdim - 1, -1, -1):
            i = rem % lengths[d]
            rem //= lengths[d]
            y[proj[d]] = lows[d] + i * gsteps[d]
        t = 0.0
        label = -1
        h_carry = 0.0
        for _ in range(max_steps + 1):
            f = rule(y, sysp, t)
            speed = 0.0
            for c in range(dim):
                v = f[c] - y[c] if is_map else f[c]
                speed += v * v
            if math.sqrt(speed) < speed_tol:
                best_d2 = np.inf
                best = -1
                for k in range(n_fp):
                    d2 = 0.0
                    for c in range(dim):
                        dd = y[c] - fixed_pts[k, c]
                        d2 += dd * dd
                    if d2 < best_d2:
                        best_d2 = d2
                        best = k + 1
                if best_d2 < pos_tol2:
                    label = best
                    break
            y, t, status, h_carry = _advance(rule, sysp, y, t, mode, method,
                                             dt, period, pax, poff, pdir,
                                             atol, rtol, max_h, pmax, h_carry)
            if status != STATUS_OK:
                break
        labels[flat] = label


def naive_basins_fixed_points(system: SystemDefinition, grid: Grid,
                              fixed_points: np.ndarray,
                              speed_tol: float = 1e-3, pos_tol: float = 0.1,
                              max_time: float = 1000.0,
                              stepper: StepperConfig | None = None,
                              threads: int = 1) -> np.ndarray:
    """Baseline labeling: integrate every cell to convergence, then match.

    A cell gets the 1-based index of the nearest supplied fixed point once
    the motion is slower than `speed_tol` and the state is within `pos_tol`
    of that point; cells still unmatched after `max_time` get -1.
    """
    fixed_points = np.atleast_2d(np.asarray(fixed_points, dtype=float))
    if fixed_points.size == 0:
        raise ConfigurationError("the naive method needs at least one fixed point")
    if fixed_points.shape[1] != system.dimension:
        raise ConfigurationError(
            f"fixed points have dimension {fixed_points.shape[1]}, "
            f"system has {system.dimension}"
        )
    if not (speed_tol > 0 and pos_tol > 0 and max_time > 0):
        raise ConfigurationError("tolerances and max_time must be > 0")
    if grid.ndim != system.grid_dimension:
        raise ConfigurationError(
            f"grid has {grid.ndim} axes but the system observes {system.grid_dimension}"
        )
    if system.mode == MODE_POINCARE:
        raise ConfigurationError("the naive method does not support plane return maps")
    cfg = resolve_stepper(system, grid, stepper)
    ip, fp = _pack_run_params(system, RecurrenceParams(), cfg)
    rule = system.prepared_rule()

    if system.mode == MODE_MAP:
        step_duration = 1.0
    elif system.mode == MODE_STROBO:
        step_duration = system.wrapper.period
    else:
        step_duration = cfg.dt
    max_steps = int(math.ceil(max_time / step_duration))

    labels = np.full(grid.size, -1, dtype=np.int32)

    def run_range(start: int, stop: int) -> None:
        _naive_range(rule, system.params, labels, start, stop, grid.lows,
                     grid.steps, grid.lengths, system.projection_indices,
                     system.fill, fixed_points, speed_tol, pos_tol ** 2,
                     max_steps, system.mode == MODE_MAP, ip, fp)

    if threads <= 1:
        run_range(0, grid.size)
    else:
        run_range(0, 0)
        bounds = np.linspace(0, grid.size, threads + 1).astype(np.int64)
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_range, int(bounds[i]), int(bounds[i + 1]))
                       for i in range(threads)]
            for f in futures:
                f.result()
    return labels.reshape(grid.shape)


def align_naive_labels(naive: np.ndarray, fixed_points: np.ndarray,
                       attractors: AttractorStore) -> np.ndarray:
    """Relabel naive output so fixed-point indices match attractor ids.

    Fixed point j maps to the attractor whose stored points come closest to
    it; -1 stays -1. Needed because the recurrence sweep numbers attractors
    in discovery order while the naive method numbers its input list.
    """
    mapping = {-1: -1}
    for j in range(fixed_points.shape[0]):
        best_id, best_d = -1, np.inf
        for k in attractors.ids():
            d = float(np.min(np.linalg.norm(attractors.points(k) - fixed_points[j],
                                            axis=1)))
            if d < best_d:
                best_d, best_id = d, k
        mapping[j + 1] = best_id
    out = np.full_like(naive, -1)
    for src, dst in mapping.items():
        out[naive == src] = dst
    return out


def label_agreement(a: np.ndarray, b: np.ndarray) -> float:
    """Fraction of cells on which two label arrays agree."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ConfigurationError(f"label arrays differ in shape: {a.shape} vs {b.shape}")
    return float(np.mean(a == b))


def benchmark_compare(system: SystemDefinition, grid: Grid,
                      fixed_points: np.ndarray,
                      params: RecurrenceParams | None = None,
                      stepper: StepperConfig | None = None,
                      speed_tol: float = 1e-3, pos_tol: float = 0.1,
                      max_time: float = 1000.0,
                      threads: int = 1) -> tuple[BenchmarkReport, BenchmarkReport]:
    """Wall-time comparison of the recurrence sweep against the naive method.

    Deliberately unfavorable to the sweep: its timing includes attractor
    discovery, while the naive method gets the fixed points for free. Both
    kernels are warmed on a tiny grid first so compilation stays out of the
    clock.
    """
    params = params or RecurrenceParams()
    cfg = resolve_stepper(system, grid, stepper)

    warm_grid = Grid.from_ranges([(a.lo, a.hi, 4) for a in grid.axes])
    basins_of_attraction(system, warm_grid, params, cfg)
    naive_basins_fixed_points(system, warm_grid, fixed_points, speed_tol,
                              pos_tol, max_time, cfg, threads)

    t0 = time.perf_counter()
    rec = basins_of_attraction(system, grid, params, cfg)
    t_rec = time.perf_counter() - t0

    t0 = time.perf_counter()
    naive = naive_basins_fixed_points(system, grid, fixed_points, speed_tol,
                                      pos_tol, max_time, cfg, threads)
    t_naive = time.perf_counter() - t0

    aligned = align_naive_labels(naive, fixed_points, rec.attractors)
    agreement = label_agreement(rec.basins, aligned)
    return (
        BenchmarkReport("recurrence", t_rec, grid.size, agreement),
        BenchmarkReport("naive", t_naive, grid.size, agreement),
    )
