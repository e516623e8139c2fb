"""Per-initial-condition runs, the full-grid sweep, and the refinement mode.

The sweep walks the grid in row-major order. Each still-unknown cell becomes
an initial condition whose trajectory drives the recurrence machine; the
machine's verdict labels the cell, and everything the run learned (attractor
cells, basin labels) stays in the shared cell store so later runs finish
faster. The sweep itself is strictly sequential: every run reads and writes
the one store. Refinement, by contrast, is independent per cell and may be
spread over worker threads.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigurationError, ConsistencyError
from .fsm import (
    ACT_MARK,
    ACT_NEW_ATTRACTOR,
    ACT_RECODE,
    ATT_SEARCH,
    INPUT_OUTSIDE,
    NO_PREV,
    WARN_ATTRACTOR_COLLISION,
    WARN_HORIZON,
    WARN_NO_CROSSING,
    WARN_NUMERICAL,
    RecurrenceParams,
    fsm_transition,
)
from .grid import CODE_UNKNOWN, CellStore, Grid
from .stepping import (
    MODE_POINCARE,
    MODE_STROBO,
    STATUS_NO_CROSSING,
    STATUS_OK,
    StepperConfig,
    SystemDefinition,
    _advance,
    resolve_stepper,
)


class AttractorStore:
    """Attractor id -> array of full-state-space points, ids consecutive from 1."""

    def __init__(self, points: dict[int, np.ndarray] | None = None):
        self._points: dict[int, list[np.ndarray]] = {}
        if points:
            for k, pts in points.items():
                self.add_points(int(k), pts)

    def add_points(self, k: int, pts: np.ndarray) -> None:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if pts.size == 0:
            return
        self._points.setdefault(int(k), []).append(pts)

    def points(self, k: int) -> np.ndarray:
        chunks = self._points.get(int(k))
        if not chunks:
            raise KeyError(k)
        return np.vstack(chunks)

    def ids(self) -> list[int]:
        return sorted(self._points)

    @property
    def count(self) -> int:
        return len(self._points)

    def __len__(self) -> int:
        return len(self._points)

    def __contains__(self, k: int) -> bool:
        return int(k) in self._points

    def items(self):
        for k in self.ids():
            yield k, self.points(k)

    def dimension(self) -> int:
        for k in self._points:
            return self.points(k).shape[1]
        raise ConfigurationError("attractor store is empty")

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        """All points stacked plus per-id offsets, for the compiled kernels."""
        ids = self.ids()
        if ids != list(range(1, len(ids) + 1)):
            raise ConsistencyError(f"attractor ids must be consecutive from 1, got {ids}")
        arrays = [self.points(k) for k in ids]
        offsets = np.zeros(len(ids) + 1, dtype=np.int64)
        for i, a in enumerate(arrays):
            offsets[i + 1] = offsets[i] + a.shape[0]
        return np.vstack(arrays), offsets


@dataclass
class BasinsResult:
    """Outcome of a full sweep: decoded labels plus everything needed to redo it."""

    basins: np.ndarray
    attractors: AttractorStore
    params: RecurrenceParams
    stepper: StepperConfig
    grid: Grid
    iterations_used: int
    warnings: dict[str, int]
    store: CellStore = field(repr=False, default=None)  # type: ignore[assignment]

    def validate(self) -> None:
        ids = set(np.unique(self.basins).tolist()) - {-1}
        known = set(self.attractors.ids())
        if not ids <= known:
            raise ConsistencyError(f"labels {sorted(ids - known)} have no attractor points")
        for k in known:
            if self.attractors.points(k).shape[0] == 0:
                raise ConsistencyError(f"attractor {k} has no points")


def _pack_run_params(system: SystemDefinition, params: RecurrenceParams,
                     cfg: StepperConfig) -> tuple[np.ndarray, np.ndarray]:
    mode = system.mode
    period = system.wrapper.period if mode == MODE_STROBO else 0.0
    if mode == MODE_POINCARE:
        pax, poff, pdir = (system.wrapper.axis, system.wrapper.offset,
                           system.wrapper.direction_code)
    else:
        pax, poff, pdir = 0, 0.0, 0
    ip = np.array(
        [mode, cfg.method_code, params.mx_chk_att, params.mx_chk_fnd_att,
         params.mx_chk_loc_att, params.mx_chk_lost, params.mx_chk_hit_bas,
         params.horizon, pax, pdir, cfg.poincare_max_steps],
        dtype=np.int64,
    )
    fp = np.array(
        [cfg.dt if cfg.dt is not None else 0.0, period, poff,
         cfg.abstol, cfg.reltol,
         cfg.max_step if cfg.max_step is not None else -1.0],
        dtype=np.float64,
    )
    return ip, fp


@njit
def _run_ic(rule, codes, lows, gsteps, lengths, y0, t0, sysp, proj, ip, fp,
            visited, ic_flat, att_count):
    """Drive one initial condition to a verdict; mutates `codes` in place.

    Returns (label, steps, warn_mask, new_attractor_points, att_count). The
    points array is empty unless this run discovered a new attractor, in
    which case its id is the returned att_count.
    """
    mode, method = ip[0], ip[1]
    mx_att, mx_fnd, mx_loc, mx_lost, mx_hit = ip[2], ip[3], ip[4], ip[5], ip[6]
    horizon = ip[7]
    pax, pdir, pmax = ip[8], ip[9], ip[10]
    dt, period, poff, atol, rtol, max_h = fp[0], fp[1], fp[2], fp[3], fp[4], fp[5]

    gdim = lows.shape[0]
    dim = y0.shape[0]
    y = y0.copy()
    t = t0
    state = ATT_SEARCH
    cnt = 0
    lost_cnt = 0
    prev_code = NO_PREV
    att_code = 0
    nvis = 0
    pts = np.empty((0, dim))
    npts = 0
    cap = 0
    steps = 0
    warn_mask = 0
    label = -1
    h_carry = 0.0

    while True:
        y, t, status, h_carry = _advance(rule, sysp, y, t, mode, method, dt,
                                         period, pax, poff, pdir, atol, rtol,
                                         max_h, pmax, h_carry)
        steps += 1
        if status != STATUS_OK:
            if status == STATUS_NO_CROSSING:
                warn_mask |= WARN_NO_CROSSING
            else:
                warn_mask |= WARN_NUMERICAL
            label = -1
            break

        flat = 0
        inside = True
        for d in range(gdim):
            u = (y[proj[d]] - lows[d]) / gsteps[d] + 0.5
            i = int(np.floor(u))
            if i < 0 or i >= lengths[d]:
                inside = False
                break
            flat = flat * lengths[d] + i
        if inside:
            raw = codes[flat]
            inp = 1 if raw == -1 else raw
        else:
            flat = -1
            raw = -2
            inp = INPUT_OUTSIDE

        (state, cnt, lost_cnt, prev_code, att_code, att_count, action,
         halted, hlabel, w) = fsm_transition(
            state, cnt, lost_cnt, prev_code, att_code, att_count, inp,
            mx_att, mx_fnd, mx_loc, mx_lost, mx_hit)
        warn_mask |= w

        if action == ACT_MARK:
            if raw != -1:
                codes[flat] = 0
                visited[nvis] = flat
                nvis += 1
        elif action == ACT_NEW_ATTRACTOR or action == ACT_RECODE:
            if raw != -1:
                codes[flat] = att_code
                if npts == cap:
                    cap = 256 if cap == 0 else cap * 2
                    grown = np.empty((cap, dim))
                    grown[:npts] = pts[:npts]
                    pts = grown
                pts[npts] = y
                npts += 1

        if halted:
            label = hlabel
            break
        if steps >= horizon:
            warn_mask |= WARN_HORIZON
            label = -1
            break

    for i in range(nvis):
        v = visited[i]
        if codes[v] == 0:
            codes[v] = 1
    if codes[ic_flat] == 1:
        codes[ic_flat] = label
    return label, steps, warn_mask, pts[:npts], att_count


_WARN_KEYS = (
    (WARN_ATTRACTOR_COLLISION, "attractor_collisions"),
    (WARN_HORIZON, "horizon_hits"),
    (WARN_NUMERICAL, "numerical_failures"),
    (WARN_NO_CROSSING, "no_crossing"),
)


def _check_geometry(system: SystemDefinition, grid: Grid) -> None:
    if grid.ndim != system.grid_dimension:
        raise ConfigurationError(
            f"grid has {grid.ndim} axes but the system observes "
            f"{system.grid_dimension} coordinates"
        )


def process_initial_condition(system: SystemDefinition, store: CellStore,
                              ic, params: RecurrenceParams,
                              attractors: AttractorStore,
                              stepper: StepperConfig | None = None) -> int:
    """Run the machine for one initial condition; returns the final label.

    `ic` is a grid index whose cell must still be unknown. The store and the
    attractor collection are updated in place; no transient marks survive.
    """
    grid = store.grid
    _check_geometry(system, grid)
    ic_flat = grid.ravel(ic)
    if store.codes[ic_flat] != CODE_UNKNOWN:
        raise ConfigurationError(
            f"initial condition {tuple(ic)} has code {store.codes[ic_flat]}, expected 1"
        )
    cfg = resolve_stepper(system, grid, stepper)
    ip, fp = _pack_run_params(system, params, cfg)
    rule = system.prepared_rule()
    visited = np.empty(grid.size, dtype=np.int64)
    y0 = system.lift(grid.cell_center(ic))
    label, _steps, _warn, pts, att_count = _run_ic(
        rule, store.codes, grid.lows, grid.steps, grid.lengths, y0, 0.0,
        system.params, system.projection_indices, ip, fp, visited, ic_flat,
        store.attractor_count,
    )
    if pts.shape[0]:
        attractors.add_points(att_count, pts)
    store.attractor_count = int(att_count)
    return int(label)


def basins_of_attraction(system: SystemDefinition, grid: Grid,
                         params: RecurrenceParams | None = None,
                         stepper: StepperConfig | None = None,
                         seed: int = 0) -> BasinsResult:
    """Locate every attractor reachable from the grid and label every cell.

    Sweeps cells in row-major order, running the recurrence machine from each
    cell whose content is still unknown. Deterministic: the same system, grid
    and parameters give byte-identical output.
    """
    params = params or RecurrenceParams()
    _check_geometry(system, grid)
    cfg = resolve_stepper(system, grid, stepper, seed=seed)
    if system.kind == "ode" and not (cfg.dt and cfg.dt > 0):
        raise ConfigurationError("ODE systems need dt (explicit or via auto_dt)")
    ip, fp = _pack_run_params(system, params, cfg)
    rule = system.prepared_rule()

    store = CellStore(grid)
    attractors = AttractorStore()
    codes = store.codes
    lows, gsteps, lengths = grid.lows, grid.steps, grid.lengths
    proj = system.projection_indices
    fill = system.fill
    visited = np.empty(grid.size, dtype=np.int64)

    total_steps = 0
    warn_runs = {name: 0 for _, name in _WARN_KEYS}
    att_count = 0

    for flat, idx in enumerate(np.ndindex(grid.shape)):
        if codes[flat] != CODE_UNKNOWN:
            continue
        y0 = fill.copy()
        y0[proj] = lows + np.asarray(idx) * gsteps
        label, steps, warn, pts, att_count = _run_ic(
            rule, codes, lows, gsteps, lengths, y0, 0.0, system.params, proj,
            ip, fp, visited, flat, att_count,
        )
        total_steps += int(steps)
        if warn:
            for bit, name in _WARN_KEYS:
                if warn & bit:
                    warn_runs[name] += 1
        if pts.shape[0]:
            attractors.add_points(int(att_count), pts)

    store.attractor_count = int(att_count)
    result = BasinsResult(
        basins=decode_basins(store),
        attractors=attractors,
        params=params,
        stepper=cfg,
        grid=grid,
        iterations_used=total_steps,
        warnings={k: v for k, v in warn_runs.items() if v},
        store=store,
    )
    result.validate()
    return result


def decode_basins(store: CellStore) -> np.ndarray:
    """User-facing label array: even/odd codes collapse to the attractor id.

    Requires a completed store: transient marks must be gone and, after a
    full sweep, no unknown cells remain either.
    """
    codes = store.codes
    if np.any(codes == 0):
        raise ConsistencyError("transient marks survived the sweep")
    if np.any(codes == 1):
        raise ConsistencyError("unknown cells survived a completed sweep")
    return (codes // 2).astype(np.int32).reshape(store.grid.shape)


@njit(nogil=True)
def _refine_range(rule, sysp, labels, start, stop, lows, gsteps, lengths,
                  proj, fill, att_pts, att_off, eps2, ip, fp):
    mode, method = ip[0], ip[1]
    mx_lost = ip[5]
    horizon = ip[7]
    pax, pdir, pmax = ip[8], ip[9], ip[10]
    dt, period, poff, atol, rtol, max_h = fp[0], fp[1], fp[2], fp[3], fp[4], fp[5]

    gdim = lows.shape[0]
    dim = fill.shape[0]
    n_att = att_off.shape[0] - 1

    for flat in range(start, stop):
        y = fill.copy()
        rem = flat
        for d in range(gdim - 1, -1, -1):
            i = rem % lengths[d]
            rem //= lengths[d]
            y[proj[d]] = lows[d] + i * gsteps[d]
        t = 0.0
        label = -1
        out_run = 0
        h_carry = 0.0
        for _ in range(horizon):
            best_d2 = np.inf
            best_id = -1
            for k in range(n_att):
                for j in range(att_off[k], att_off[k + 1]):
                    d2 = 0.0
                    for c in range(dim):
                        dd = y[c] - att_pts[j, c]
                        d2 += dd * dd
                    if d2 < best_d2:
                        best_d2 = d2
                        best_id = k + 1
            if best_d2 < eps2:
                label = best_id
                break
            y, t, status, h_carry = _advance(rule, sysp, y, t, mode, method,
                                             dt, period, pax, poff, pdir,
                                             atol, rtol, max_h, pmax, h_carry)
            if status != STATUS_OK:
                break
            inside = True
            for d in range(gdim):
                u = (y[proj[d]] - lows[d]) / gsteps[d] + 0.5
                i = int(np.floor(u))
                if i < 0 or i >= lengths[d]:
                    inside = False
                    break
            if inside:
                out_run = 0
            else:
                out_run += 1
                if out_run >= mx_lost:
                    break
        labels[flat] = label


def default_refine_eps(coarse_grid: Grid) -> float:
    """Matching threshold when chaining refinement after a coarse sweep."""
    return float(np.max(coarse_grid.steps))


def refine_with_attractors(system: SystemDefinition, grid: Grid,
                           attractors: AttractorStore, eps: float,
                           params: RecurrenceParams | None = None,
                           stepper: StepperConfig | None = None,
                           threads: int = 1) -> np.ndarray:
    """Label cells by integrating until the trajectory comes within `eps`
    (full-state Euclidean distance) of a known attractor point.

    No recurrence detection and no cell marking: cells are independent, so
    the work may be split over `threads` workers. Cells whose trajectory
    stays outside the grid for mx_chk_lost consecutive steps, or that exhaust
    the horizon, are labeled -1. The closest attractor wins; on an exact tie
    the lower id does.
    """
    params = params or RecurrenceParams()
    _check_geometry(system, grid)
    if len(attractors) == 0:
        raise ConfigurationError("refinement needs a nonempty attractor store")
    if not eps > 0:
        raise ConfigurationError(f"eps must be > 0, got {eps}")
    att_pts, att_off = attractors.packed()
    if att_pts.shape[1] != system.dimension:
        raise ConfigurationError(
            f"attractor points have dimension {att_pts.shape[1]}, "
            f"system has {system.dimension}"
        )
    cfg = resolve_stepper(system, grid, stepper)
    ip, fp = _pack_run_params(system, params, cfg)
    rule = system.prepared_rule()

    labels = np.full(grid.size, -1, dtype=np.int32)
    eps2 = float(eps) ** 2

    def run_range(start: int, stop: int) -> None:
        _refine_range(rule, system.params, labels, start, stop, grid.lows,
                      grid.steps, grid.lengths, system.projection_indices,
                      system.fill, att_pts, att_off, eps2, ip, fp)

    if threads <= 1:
        run_range(0, grid.size)
    else:
        run_range(0, 0)  # compile before the pool shares the dispatcher
        bounds = np.linspace(0, grid.size, threads + 1).astype(np.int64)
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_range, int(bounds[i]), int(bounds[i + 1]))
                       for i in range(threads)]
            for f in futures:
                f.result()
    return labels.reshape(grid.shape)
