"""Acceptance gate: one test per criterion, one printed verdict line each.

Criteria 2, 3, 5, 6 reproduce full scenario runs and take minutes; they are
marked `acceptance` so `-m "not acceptance"` gives a quick suite.
"""

import math
import time

import numpy as np
import pytest

from basinscout import (
    Grid,
    RecurrenceParams,
    StepperConfig,
    basin_fractions,
    basins_of_attraction,
    benchmark_compare,
    code_of_attractor,
    code_of_basin,
    default_refine_eps,
    default_scenario,
    id_of_code,
    label_agreement,
    magnet_equilibria,
    make_system,
    refine_with_attractors,
    step,
)
from basinscout.fsm import (
    ACT_MARK,
    ACT_NEW_ATTRACTOR,
    ACT_NONE,
    ACT_RECODE,
    ATT_FOUND,
    ATT_HIT,
    ATT_SEARCH,
    BAS_HIT,
    INPUT_OUTSIDE,
    NO_PREV,
    fsm_transition,
)
from conftest import make_affine_map, make_exp_ode


def report(criterion: int, name: str, ok: bool, detail: str) -> None:
    verdict = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {criterion} [{name}]: {verdict} — {detail}")
    assert ok, f"criterion {criterion} ({name}): {detail}"


# --- criterion 1: the full transition table ---------------------------------

T = RecurrenceParams()  # reference thresholds: 2 / 100 / 100 / 20 / 10

# (case, state, cnt, lost, prev, att_code, att_count, input,
#  exp_state, exp_cnt, exp_lost, exp_action, exp_halt, exp_label)
TRANSITION_TABLE = [
    ("search: unknown marks", ATT_SEARCH, 0, 0, NO_PREV, 0, 0, 1,
     ATT_SEARCH, 0, 0, ACT_MARK, False, None),
    ("search: unknown resets count", ATT_SEARCH, 7, 0, 0, 0, 0, 1,
     ATT_SEARCH, 0, 0, ACT_MARK, False, None),
    ("search: recurrence counts", ATT_SEARCH, 5, 0, 0, 0, 0, 0,
     ATT_SEARCH, 6, 0, ACT_NONE, False, None),
    ("search: recurrence threshold finds attractor", ATT_SEARCH, 99, 0, 0, 0, 0, 0,
     ATT_FOUND, 0, 0, ACT_NEW_ATTRACTOR, False, None),
    ("search: attractor cell switches to att_hit", ATT_SEARCH, 3, 0, 0, 0, 1, 2,
     ATT_HIT, 0, 0, ACT_NONE, False, None),
    ("search: basin cell switches to bas_hit", ATT_SEARCH, 3, 0, 0, 0, 1, 3,
     BAS_HIT, 0, 0, ACT_NONE, False, None),
    ("search: outside holds the counter", ATT_SEARCH, 7, 0, 0, 0, 0, INPUT_OUTSIDE,
     ATT_SEARCH, 7, 1, ACT_NONE, False, None),
    ("found: unknown recoded", ATT_FOUND, 5, 0, 2, 2, 1, 1,
     ATT_FOUND, 0, 0, ACT_RECODE, False, None),
    ("found: mark recoded", ATT_FOUND, 5, 0, 2, 2, 1, 0,
     ATT_FOUND, 0, 0, ACT_RECODE, False, None),
    ("found: basin recoded", ATT_FOUND, 5, 0, 2, 2, 1, 5,
     ATT_FOUND, 0, 0, ACT_RECODE, False, None),
    ("found: own cells count toward done", ATT_FOUND, 5, 0, 2, 2, 1, 2,
     ATT_FOUND, 6, 0, ACT_NONE, False, None),
    ("found: location threshold halts odd", ATT_FOUND, 99, 0, 2, 2, 1, 2,
     ATT_FOUND, 100, 0, ACT_NONE, True, 3),
    ("found: other attractor left untouched", ATT_FOUND, 5, 0, 2, 2, 2, 4,
     ATT_FOUND, 0, 0, ACT_NONE, False, None),
    ("found: outside holds the counter", ATT_FOUND, 5, 0, 2, 2, 1, INPUT_OUTSIDE,
     ATT_FOUND, 5, 1, ACT_NONE, False, None),
    ("hit: same attractor counts", ATT_HIT, 0, 0, 4, 0, 2, 4,
     ATT_HIT, 1, 0, ACT_NONE, False, None),
    ("hit: reaching mx_chk_att halts odd", ATT_HIT, 1, 0, 4, 0, 2, 4,
     ATT_HIT, 2, 0, ACT_NONE, True, 5),
    ("hit: different attractor resets", ATT_HIT, 1, 0, 4, 0, 3, 6,
     ATT_HIT, 0, 0, ACT_NONE, False, None),
    ("hit: unknown returns to search and marks", ATT_HIT, 1, 0, 4, 0, 2, 1,
     ATT_SEARCH, 0, 0, ACT_MARK, False, None),
    ("hit: mark returns to search", ATT_HIT, 1, 0, 4, 0, 2, 0,
     ATT_SEARCH, 0, 0, ACT_NONE, False, None),
    ("hit: basin switches to bas_hit", ATT_HIT, 1, 0, 4, 0, 2, 3,
     BAS_HIT, 0, 0, ACT_NONE, False, None),
    ("hit: outside holds the counter", ATT_HIT, 1, 0, 4, 0, 2, INPUT_OUTSIDE,
     ATT_HIT, 1, 1, ACT_NONE, False, None),
    ("bas: same basin counts", BAS_HIT, 3, 0, 3, 0, 1, 3,
     BAS_HIT, 4, 0, ACT_NONE, False, None),
    ("bas: reaching mx_chk_hit_bas halts", BAS_HIT, 9, 0, 3, 0, 1, 3,
     BAS_HIT, 10, 0, ACT_NONE, True, 3),
    ("bas: different basin resets", BAS_HIT, 4, 0, 3, 0, 2, 5,
     BAS_HIT, 0, 0, ACT_NONE, False, None),
    ("bas: unknown returns to search and marks", BAS_HIT, 4, 0, 3, 0, 1, 1,
     ATT_SEARCH, 0, 0, ACT_MARK, False, None),
    ("bas: mark returns to search", BAS_HIT, 4, 0, 3, 0, 1, 0,
     ATT_SEARCH, 0, 0, ACT_NONE, False, None),
    ("bas: attractor switches to att_hit", BAS_HIT, 4, 0, 3, 0, 1, 2,
     ATT_HIT, 0, 0, ACT_NONE, False, None),
    ("bas: outside holds the counter", BAS_HIT, 4, 0, 3, 0, 1, INPUT_OUTSIDE,
     BAS_HIT, 4, 1, ACT_NONE, False, None),
    ("lost: outside keeps counting", ATT_SEARCH, 7, 3, 0, 0, 0, INPUT_OUTSIDE,
     ATT_SEARCH, 7, 4, ACT_NONE, False, None),
    ("lost: mx_chk_lost halts diverged", BAS_HIT, 7, 19, 3, 0, 1, INPUT_OUTSIDE,
     BAS_HIT, 7, 20, ACT_NONE, True, -1),
    ("lost: return resumes held count (search)", ATT_SEARCH, 7, 5, 0, 0, 0, 0,
     ATT_SEARCH, 8, 0, ACT_NONE, False, None),
    ("lost: return resumes held count (basin)", BAS_HIT, 7, 5, 3, 0, 1, 3,
     BAS_HIT, 8, 0, ACT_NONE, False, None),
    ("lost: return resumes held count (attractor)", ATT_HIT, 1, 5, 4, 0, 2, 4,
     ATT_HIT, 2, 0, ACT_NONE, True, 5),
]


def test_criterion_1_fsm_transition_suite():
    args = (T.mx_chk_att, T.mx_chk_fnd_att, T.mx_chk_loc_att,
            T.mx_chk_lost, T.mx_chk_hit_bas)
    fsm_transition(ATT_SEARCH, 0, 0, NO_PREV, 0, 0, 1, *args)  # warm compile

    failures = []
    t0 = time.perf_counter()
    for row in TRANSITION_TABLE:
        (case, state, cnt, lost, prev, att_code, att_count, inp,
         exp_state, exp_cnt, exp_lost, exp_action, exp_halt, exp_label) = row
        out = fsm_transition(state, cnt, lost, prev, att_code, att_count,
                             inp, *args)
        got = (out[0], out[1], out[2], out[6], bool(out[7]),
               out[8] if out[7] else None)
        want = (exp_state, exp_cnt, exp_lost, exp_action, exp_halt, exp_label)
        if got != want:
            failures.append(f"{case}: got {got}, want {want}")
    elapsed = time.perf_counter() - t0
    detail = (f"{len(TRANSITION_TABLE)} transitions, "
              f"{len(failures)} failures, {elapsed * 1000:.1f} ms")
    if failures:
        detail += " | " + "; ".join(failures[:5])
    report(1, "fsm-transition-suite", not failures and elapsed < 1.0, detail)


# --- criterion 2: Lorenz84 reproduction --------------------------------------

@pytest.mark.acceptance
@pytest.mark.slow
def test_criterion_2_lorenz84_reproduction():
    system = make_system("lorenz84")
    sc = default_scenario("lorenz84")
    t0 = time.perf_counter()
    res = basins_of_attraction(system, sc.grid, sc.recurrence, sc.stepper)
    elapsed = time.perf_counter() - t0

    ids = res.attractors.ids()
    diags = sorted(
        float(np.linalg.norm(res.attractors.points(k).max(0)
                             - res.attractors.points(k).min(0)))
        for k in ids
    )
    cell_diag = float(np.linalg.norm(sc.grid.steps))
    fractions = basin_fractions(res.basins).fractions
    basin_fracs = sorted((v for k, v in fractions.items() if k != -1),
                         reverse=True)
    target = [0.55, 0.25, 0.20]
    ok_count = len(ids) == 3
    # extent classes: one point-like cloud (fixed point), two extended ones
    ok_extent = (len(diags) == 3 and diags[0] <= 2 * cell_diag
                 and diags[1] >= 20 * cell_diag and diags[2] >= 20 * cell_diag)
    ok_fracs = (len(basin_fracs) == 3
                and all(abs(f - t) <= 0.05 for f, t in zip(basin_fracs, target)))
    ok_time = elapsed <= 30 * 60
    detail = (f"{len(ids)} attractors, extents {[round(d, 3) for d in diags]}, "
              f"fractions {[round(f, 3) for f in basin_fracs]} vs {target} "
              f"(diverged {fractions.get(-1, 0.0):.3f}), {elapsed:.0f} s")
    report(2, "lorenz84-reproduction",
           ok_count and ok_extent and ok_fracs and ok_time, detail)


# --- criterion 3: magnetic pendulum symmetry ---------------------------------

@pytest.mark.acceptance
@pytest.mark.slow
def test_criterion_3_magnetic_pendulum_symmetry():
    system = make_system("magnetic_pendulum")
    sc = default_scenario("magnetic_pendulum")
    assert sc.grid.shape == (150, 150)
    t0 = time.perf_counter()
    res = basins_of_attraction(system, sc.grid, sc.recurrence, sc.stepper)
    elapsed = time.perf_counter() - t0

    ids = res.attractors.ids()
    magnets = system.params[4:].reshape(3, 2)
    matched = set()
    for k in ids:
        mean = res.attractors.points(k).mean(axis=0)[:2]
        j = int(np.argmin(np.linalg.norm(magnets - mean, axis=1)))
        mean_idx = sc.grid.cell_index(mean)
        magnet_idx = sc.grid.cell_index(magnets[j])
        if mean_idx is not None and magnet_idx is not None and all(
                abs(a - b) <= 1 for a, b in zip(mean_idx, magnet_idx)):
            matched.add(j)
    fractions = basin_fractions(res.basins).fractions
    per_basin = [fractions.get(k, 0.0) for k in ids]
    ok = (len(ids) == 3 and matched == {0, 1, 2}
          and all(abs(f - 1 / 3) <= 0.03 for f in per_basin)
          and elapsed <= 10 * 60)
    detail = (f"{len(ids)} attractors at magnets {sorted(matched)}, "
              f"fractions {[round(f, 4) for f in per_basin]} vs 1/3±0.03, "
              f"{elapsed:.0f} s")
    report(3, "magnetic-pendulum-symmetry", ok, detail)


# --- criterion 4: Henon vs escape oracle -------------------------------------

@pytest.mark.acceptance
def test_criterion_4_henon_divergence_oracle():
    system = make_system("henon")
    sc = default_scenario("henon")
    t0 = time.perf_counter()
    res = basins_of_attraction(system, sc.grid, sc.recurrence, sc.stepper)

    rng = np.random.default_rng(1234)
    n = 10_000
    agree = 0
    has_minus_one = bool(np.any(res.basins == -1))
    a, b = system.params
    for _ in range(n):
        idx = (int(rng.integers(0, 150)), int(rng.integers(0, 150)))
        x, y = sc.grid.cell_center(idx)
        escaped = False
        for _ in range(10_000):
            if abs(x) > 10.0:
                escaped = True
                break
            x, y = 1.0 - a * x * x + y, b * x
        engine_diverged = res.basins[idx] == -1
        agree += int(engine_diverged == escaped)
    elapsed = time.perf_counter() - t0
    agreement = agree / n
    ok = (len(res.attractors) == 1 and has_minus_one
          and agreement >= 0.99 and elapsed <= 60)
    report(4, "henon-escape-oracle", ok,
           f"{len(res.attractors)} attractor(s), divergence agreement "
           f"{agreement:.4f} on {n} cells, {elapsed:.0f} s")


# --- criterion 5: coupled logistic multistability ----------------------------

@pytest.mark.acceptance
@pytest.mark.slow
def test_criterion_5_coupled_logistic_attractor_count():
    system = make_system("coupled_logistic")
    sc = default_scenario("coupled_logistic")
    t0 = time.perf_counter()
    res = basins_of_attraction(system, sc.grid, sc.recurrence, sc.stepper)
    elapsed = time.perf_counter() - t0
    count = len(res.attractors)
    ok = 20 <= count <= 32 and elapsed <= 30 * 60
    report(5, "coupled-logistic-multistability", ok,
           f"{count} attractors on {sc.grid.shape} grid, {elapsed:.0f} s")


# --- criterion 6: Lorenz96EBM bistability (reduced CI variant) ---------------

@pytest.mark.acceptance
@pytest.mark.slow
def test_criterion_6_lorenz96ebm_reduced_bistability():
    system = make_system("lorenz96ebm")
    sc = default_scenario("lorenz96ebm")
    grid = Grid.from_ranges(
        [(a.lo, a.hi, 5) for a in sc.grid.axes[:5]]
        + [(sc.grid.axes[5].lo, sc.grid.axes[5].hi, 51)]
    )
    t0 = time.perf_counter()
    res = basins_of_attraction(system, grid, sc.recurrence, sc.stepper)
    elapsed = time.perf_counter() - t0
    rep = basin_fractions(res.basins)
    ok = (len(res.attractors) == 2
          and sum(rep.counts.values()) == rep.total)
    fr = {k: round(v, 3) for k, v in sorted(rep.fractions.items())}
    report(6, "lorenz96ebm-reduced-bistability", ok,
           f"{len(res.attractors)} attractors, fractions {fr} "
           f"(counts sum exactly), {elapsed:.0f} s")


# --- criterion 7: refinement consistency -------------------------------------

@pytest.mark.acceptance
@pytest.mark.slow
def test_criterion_7_refinement_consistency():
    system = make_system("magnetic_pendulum")
    sc = default_scenario("magnetic_pendulum")
    grid = Grid.from_ranges([(-3.0, 3.0, 100), (-3.0, 3.0, 100)])
    res = basins_of_attraction(system, grid, sc.recurrence, sc.stepper)
    eps = default_refine_eps(grid)
    refined = refine_with_attractors(system, grid, res.attractors, eps,
                                     sc.recurrence, sc.stepper)
    agreement = label_agreement(res.basins, refined)
    report(7, "refinement-consistency", agreement >= 0.99,
           f"agreement {agreement:.4f} at eps={eps:.4f} on 100x100")


# --- criterion 8: benchmark ordering -----------------------------------------

@pytest.mark.acceptance
@pytest.mark.slow
def test_criterion_8_benchmark_ordering():
    system = make_system("magnetic_pendulum")
    sc = default_scenario("magnetic_pendulum")
    grid = Grid.from_ranges([(-3.0, 3.0, 200), (-3.0, 3.0, 200)])
    fixed_points = magnet_equilibria(system)
    rec, naive = benchmark_compare(system, grid, fixed_points,
                                   sc.recurrence, sc.stepper)
    ok = rec.seconds < naive.seconds and rec.agreement >= 0.9
    report(8, "benchmark-ordering", ok,
           f"recurrence {rec.seconds:.1f} s (discovery included) vs naive "
           f"{naive.seconds:.1f} s (attractors given), agreement "
           f"{rec.agreement:.3f}")


# --- criterion 9: property battery -------------------------------------------

def test_criterion_9_property_battery():
    rng = np.random.default_rng(987)
    problems = []

    # encoder/decoder inverses
    for k in rng.integers(1, 10 ** 6, size=500):
        k = int(k)
        if id_of_code(code_of_attractor(k)) != k or id_of_code(code_of_basin(k)) != k:
            problems.append(f"code round-trip broke at {k}")
            break

    # grid round-trips on random grids
    for _ in range(200):
        ndim = int(rng.integers(1, 4))
        ranges = []
        for _ in range(ndim):
            lo = float(rng.uniform(-10, 10))
            ranges.append((lo, lo + float(rng.uniform(0.5, 20)),
                           int(rng.integers(2, 30))))
        grid = Grid.from_ranges(ranges)
        idx = tuple(int(rng.integers(0, n)) for n in grid.shape)
        if grid.cell_index(grid.cell_center(idx)) != idx:
            problems.append(f"grid round-trip broke at {ranges} {idx}")
            break

    # mark hygiene on random contractions
    from basinscout import AttractorStore, CellStore, process_initial_condition
    for _ in range(15):
        a = float(rng.uniform(-0.9, 0.9))
        b = float(rng.uniform(-0.3, 0.3))
        system = make_affine_map(a, b)
        grid = Grid.from_ranges([(-2.0, 2.0, 41)])
        store = CellStore(grid)
        process_initial_condition(system, store, (int(rng.integers(0, 41)),),
                                  RecurrenceParams(), AttractorStore())
        if store.mark_count() != 0:
            problems.append(f"marks survived for map a={a}, b={b}")
            break

    # code-domain discipline after a full sweep
    from conftest import _two_wells_map_rule  # session-compiled rule
    from basinscout import SystemDefinition
    wells = SystemDefinition(kind="map", rule=_two_wells_map_rule,
                             params=np.zeros(1), dimension=1)
    res = basins_of_attraction(wells, Grid.from_ranges([(-1.6, 1.6, 64)]))
    codes = res.store.codes
    if np.any(codes == 0) or np.any(codes == 1):
        problems.append("sweep left marks or unknown cells")

    # RK4 order ratio
    system = make_exp_ode(1.0)

    def global_error(n):
        y, t = np.array([1.0]), 0.0
        cfg = StepperConfig(method="rk4", dt=1.0 / n)
        for _ in range(n):
            y, t = step(system, y, t, cfg)
        return abs(float(y[0]) - math.e)

    ratio = global_error(32) / global_error(64)
    if not 12 <= ratio <= 20:
        problems.append(f"RK4 order ratio {ratio:.2f} outside [12, 20]")

    # fraction normalization
    labels = rng.integers(1, 6, size=1000)
    labels[rng.random(1000) < 0.2] = -1
    rep = basin_fractions(labels)
    if sum(rep.counts.values()) != rep.total:
        problems.append("fraction counts do not sum to the total")
    if abs(sum(rep.fractions.values()) - 1.0) > 1e-12:
        problems.append("fractions do not sum to 1")

    # determinism: byte-identical reruns
    henon = make_system("henon")
    grid = Grid.from_ranges([(-2.0, 2.0, 40), (-2.0, 2.0, 40)])
    one = basins_of_attraction(henon, grid)
    two = basins_of_attraction(henon, grid)
    if one.basins.tobytes() != two.basins.tobytes():
        problems.append("rerun is not byte-identical")

    report(9, "property-battery", not problems,
           f"{7 - len(problems)}/7 suites clean"
           + ("" if not problems else " | " + "; ".join(problems)))
