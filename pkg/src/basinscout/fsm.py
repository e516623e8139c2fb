"""The five-state machine that turns a stream of cell codes into basin labels.

The machine consumes one input per trajectory step: the code of the cell the
trajectory just landed in, or OUTSIDE when the point left the grid. Its
transition logic lives in one pure function, :func:`fsm_transition`, which is
compiled and shared by the fast sweep kernel and by the Python-level
:class:`StateMachine` used in unit tests.

States:

* ``ATT_SEARCH``  marking unvisited cells and counting recurrences,
* ``ATT_FOUND``   a new attractor was declared; flood its cells,
* ``ATT_HIT``     riding along cells of an already known attractor,
* ``BAS_HIT``     riding along cells of an already known basin,
* ``lost``        outside the grid; represented by ``lost_cnt > 0`` so the
  interrupted state and its counter stay frozen until the trajectory returns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigurationError, ConsistencyError
from .grid import CODE_DIVERGED, CODE_MARKED, CODE_UNKNOWN, CellStore

ATT_SEARCH = 0
ATT_FOUND = 1
ATT_HIT = 2
BAS_HIT = 3
LOST = 4

STATE_NAMES = {
    ATT_SEARCH: "att_search",
    ATT_FOUND: "att_found",
    ATT_HIT: "att_hit",
    BAS_HIT: "bas_hit",
    LOST: "lost",
}

# Machine inputs are cell codes; two sentinels extend the domain.
INPUT_OUTSIDE = -2
NO_PREV = -3

# Actions the caller must apply to the cell store after a transition.
ACT_NONE = 0
ACT_MARK = 1  # write code 0 into the current cell, remember it
ACT_RECODE = 2  # write the current attractor's even code, record the point
ACT_NEW_ATTRACTOR = 3  # allocate an id, then behave like ACT_RECODE

# Warning bits accumulated over a run.
WARN_ATTRACTOR_COLLISION = 1
WARN_HORIZON = 2
WARN_NUMERICAL = 4
WARN_NO_CROSSING = 8


@dataclass
class RecurrenceParams:
    """Counter thresholds of the recurrence machine plus the step safety cap.

    Defaults work for most systems; raise ``mx_chk_att`` when attractors sit
    very close together, ``mx_chk_hit_bas`` for strongly fractal boundaries,
    and the find/locate pair for chaotic attractors.
    """

    mx_chk_att: int = 2
    mx_chk_fnd_att: int = 100
    mx_chk_loc_att: int = 100
    mx_chk_lost: int = 20
    mx_chk_hit_bas: int = 10
    horizon: int = 1_000_000

    def __post_init__(self):
        for name in ("mx_chk_att", "mx_chk_fnd_att", "mx_chk_loc_att",
                     "mx_chk_lost", "mx_chk_hit_bas"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigurationError(f"{name} must be an integer >= 1, got {v!r}")
        if self.horizon <= self.mx_chk_fnd_att + self.mx_chk_loc_att:
            raise ConfigurationError(
                "horizon must exceed mx_chk_fnd_att + mx_chk_loc_att "
                f"({self.mx_chk_fnd_att + self.mx_chk_loc_att}), got {self.horizon}"
            )

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.mx_chk_att, self.mx_chk_fnd_att, self.mx_chk_loc_att,
             self.mx_chk_lost, self.mx_chk_hit_bas, self.horizon],
            dtype=np.int64,
        )


@njit(cache=True)
def fsm_transition(state, cnt, lost_cnt, prev_code, att_code, att_count, inp,
                   mx_chk_att, mx_chk_fnd_att, mx_chk_loc_att, mx_chk_lost,
                   mx_chk_hit_bas):
    """One pure machine transition; no cell store access.

    `inp` is the code of the current cell (1 unknown, 0 marked, even
    attractor, odd >= 3 basin) or INPUT_OUTSIDE. Diverged cells (-1) must be
    presented as unknown by the caller. Returns

        (state, cnt, lost_cnt, prev_code, att_code, att_count,
         action, halted, label, warn)

    While outside the grid only `lost_cnt` moves: the interrupted state, its
    counter and the last in-grid input stay frozen so a brief excursion is
    transparent.
    """
    action = ACT_NONE
    halted = False
    label = 0
    warn = 0

    if inp == INPUT_OUTSIDE:
        lost_cnt += 1
        if lost_cnt >= mx_chk_lost:
            halted = True
            label = -1
        return (state, cnt, lost_cnt, prev_code, att_code, att_count,
                action, halted, label, warn)

    lost_cnt = 0

    if state == ATT_SEARCH:
        if inp == 1:
            cnt = 0
            action = ACT_MARK
        elif inp == 0:
            cnt += 1
            if cnt >= mx_chk_fnd_att:
                att_count += 1
                att_code = 2 * att_count
                state = ATT_FOUND
                cnt = 0
                action = ACT_NEW_ATTRACTOR
        elif inp % 2 == 0:
            state = ATT_HIT
            cnt = 0
        else:
            state = BAS_HIT
            cnt = 0
    elif state == ATT_FOUND:
        if inp == att_code:
            cnt += 1
            if cnt >= mx_chk_loc_att:
                halted = True
                label = att_code + 1
        elif inp >= 2 and inp % 2 == 0:
            # A different attractor's cell; leave it untouched.
            cnt = 0
            warn = WARN_ATTRACTOR_COLLISION
        else:
            cnt = 0
            action = ACT_RECODE
    elif state == ATT_HIT:
        if inp >= 2 and inp % 2 == 0:
            if inp == prev_code:
                cnt += 1
                if cnt >= mx_chk_att:
                    halted = True
                    label = inp + 1
            else:
                cnt = 0
        elif inp == 1:
            state = ATT_SEARCH
            cnt = 0
            action = ACT_MARK
        elif inp == 0:
            state = ATT_SEARCH
            cnt = 0
        else:
            state = BAS_HIT
            cnt = 0
    else:  # BAS_HIT
        if inp >= 3 and inp % 2 == 1:
            if inp == prev_code:
                cnt += 1
                if cnt >= mx_chk_hit_bas:
                    halted = True
                    label = inp
            else:
                cnt = 0
        elif inp == 1:
            state = ATT_SEARCH
            cnt = 0
            action = ACT_MARK
        elif inp == 0:
            state = ATT_SEARCH
            cnt = 0
        else:
            state = ATT_HIT
            cnt = 0

    prev_code = inp
    return (state, cnt, lost_cnt, prev_code, att_code, att_count,
            action, halted, label, warn)


@dataclass
class StateMachine:
    """Python-level machine over a CellStore; mirrors the sweep kernel.

    Suitable for unit tests and small runs. `machine_step` consumes the raw
    cell code (or INPUT_OUTSIDE) together with the current full-space point
    and applies the resulting action to the store.
    """

    store: CellStore
    params: RecurrenceParams
    ic_flat: int
    state: int = ATT_SEARCH
    cnt: int = 0
    lost_cnt: int = 0
    prev_code: int = NO_PREV
    att_code: int = 0
    visited: list[int] = field(default_factory=list)
    new_points: list[np.ndarray] = field(default_factory=list)
    warn: int = 0
    halted: bool = False

    @property
    def effective_state(self) -> str:
        """State name as seen from outside; `lost` while off the grid."""
        return "lost" if self.lost_cnt > 0 else STATE_NAMES[self.state]

    @property
    def saved_cnt(self) -> int:
        """Frozen counter of the interrupted state while lost."""
        return self.cnt if self.lost_cnt > 0 else 0

    @property
    def current_attractor(self) -> int | None:
        return self.att_code // 2 if self.att_code else None

    def machine_step(self, flat_cell: int, point: np.ndarray | None = None) -> int | None:
        """Feed one input; returns the final label on halt, else None.

        `flat_cell` is the flat index of the cell the trajectory landed in,
        or -1 for outside. The store is consulted for the raw code; diverged
        cells act as unknown but are never written to.
        """
        if self.halted:
            raise ConsistencyError("machine already halted")
        p = self.params
        if flat_cell < 0:
            raw = INPUT_OUTSIDE
            inp = INPUT_OUTSIDE
        else:
            raw = int(self.store.codes[flat_cell])
            if raw == CODE_MARKED and flat_cell not in self.visited:
                raise ConsistencyError(
                    f"cell {flat_cell} carries a transient mark from another run"
                )
            inp = CODE_UNKNOWN if raw == CODE_DIVERGED else raw

        (self.state, self.cnt, self.lost_cnt, self.prev_code, self.att_code,
         self.store.attractor_count, action, halted, label, warn) = fsm_transition(
            self.state, self.cnt, self.lost_cnt, self.prev_code, self.att_code,
            self.store.attractor_count, inp,
            p.mx_chk_att, p.mx_chk_fnd_att, p.mx_chk_loc_att,
            p.mx_chk_lost, p.mx_chk_hit_bas,
        )
        self.warn |= warn

        if action == ACT_MARK and raw != CODE_DIVERGED:
            self.store.codes[flat_cell] = CODE_MARKED
            self.visited.append(flat_cell)
        elif action == ACT_NEW_ATTRACTOR:
            self.store.codes[flat_cell] = self.att_code
            if flat_cell in self.visited:
                self.visited.remove(flat_cell)
            if point is not None:
                self.new_points.append(np.array(point, dtype=float))
        elif action == ACT_RECODE and raw != CODE_DIVERGED:
            self.store.codes[flat_cell] = self.att_code
            if flat_cell in self.visited:
                self.visited.remove(flat_cell)
            if point is not None:
                self.new_points.append(np.array(point, dtype=float))

        if halted:
            self.finish(label)
            return label
        return None

    def finish(self, label: int) -> None:
        """Erase transient marks and stamp the initial-condition cell."""
        for v in self.visited:
            if self.store.codes[v] == CODE_MARKED:
                self.store.codes[v] = CODE_UNKNOWN
        self.visited.clear()
        if self.store.codes[self.ic_flat] == CODE_UNKNOWN:
            self.store.codes[self.ic_flat] = label
        self.halted = True
