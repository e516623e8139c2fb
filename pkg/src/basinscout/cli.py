"""Command line interface: declarative run configs and artifact output.

Subcommands: run, refine, benchmark, render, list-systems. A config is one
JSON file describing one reproducible computation; unknown keys are rejected.
Exit codes: 0 success, 2 invalid configuration or arguments, 3 numerical
failure (partial outputs are removed).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from .analysis import basin_fractions, benchmark_compare, naive_basins_fixed_points
from .engine import AttractorStore, basins_of_attraction, refine_with_attractors
from .errors import AutoDtFailed, BasinscoutError, ConfigurationError, DivergedNumerically
from .fsm import RecurrenceParams
from .grid import Grid
from .io import (
    read_attractors_csv,
    read_basins,
    render_slice,
    write_attractors_csv,
    write_basins,
    write_basins_csv,
    write_fractions_json,
    write_ppm,
)
from .stepping import PoincarePlane, StepperConfig, Stroboscopic
from .systems import CATALOG, default_scenario, make_system, system_names

_TOP_KEYS = {"system", "grid", "recurrence", "stepper", "wrapper", "projection",
             "fill", "mode", "refine", "naive", "output", "seed", "csv_export"}
_MODES = {"recurrence", "refine", "naive"}


def _fail(field: str, message: str) -> ConfigurationError:
    return ConfigurationError(f"{field}: {message}")


def _require_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise _fail(where, f"unknown key(s) {sorted(unknown)}; allowed: {sorted(allowed)}")


def _as_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(where, f"expected a number, got {value!r}")
    return float(value)


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _fail(where, f"expected an integer, got {value!r}")
    return value


_UNSET = object()


@dataclasses.dataclass
class RunConfig:
    system_name: str
    overrides: dict
    grid: Grid
    recurrence: RecurrenceParams
    stepper: StepperConfig
    mode: str
    refine: dict | None
    naive: dict | None
    out_dir: Path
    seed: int
    csv_export: bool
    scenario_notes: dict
    wrapper: object = _UNSET
    projection: object = _UNSET
    fill: object = _UNSET


def _parse_wrapper(section, where: str):
    if section is None:
        return None
    if not isinstance(section, dict):
        raise _fail(where, "expected an object with a 'type'")
    kind = section.get("type")
    if kind == "none":
        _require_keys(section, {"type"}, where)
        return None
    if kind == "stroboscopic":
        _require_keys(section, {"type", "period"}, where)
        try:
            return Stroboscopic(_as_number(section["period"], f"{where}.period"))
        except (KeyError, ConfigurationError) as exc:
            raise _fail(where, str(exc))
    if kind == "poincare":
        _require_keys(section, {"type", "axis", "offset", "direction"}, where)
        try:
            return PoincarePlane(
                axis=_as_int(section.get("axis", 0), f"{where}.axis"),
                offset=_as_number(section.get("offset", 0.0), f"{where}.offset"),
                direction=section.get("direction", "+"),
            )
        except ConfigurationError as exc:
            raise _fail(where, str(exc))
    raise _fail(f"{where}.type",
                "expected 'none', 'stroboscopic', or 'poincare', got "
                f"{kind!r}")


def _parse_grid(section, where: str) -> Grid:
    if not isinstance(section, dict):
        raise _fail(where, "expected an object with an 'axes' list")
    _require_keys(section, {"axes"}, where)
    axes = section.get("axes")
    if not isinstance(axes, list) or not axes:
        raise _fail(f"{where}.axes", "expected a nonempty list")
    ranges = []
    for i, ax in enumerate(axes):
        spot = f"{where}.axes[{i}]"
        if isinstance(ax, dict):
            _require_keys(ax, {"min", "max", "length"}, spot)
            try:
                ranges.append((_as_number(ax["min"], spot + ".min"),
                               _as_number(ax["max"], spot + ".max"),
                               _as_int(ax["length"], spot + ".length")))
            except KeyError as exc:
                raise _fail(spot, f"missing key {exc}")
        elif isinstance(ax, list) and len(ax) == 3:
            ranges.append((_as_number(ax[0], spot), _as_number(ax[1], spot),
                           _as_int(ax[2], spot)))
        else:
            raise _fail(spot, "expected [min, max, length] or an object")
    try:
        return Grid.from_ranges(ranges)
    except ConfigurationError as exc:
        raise _fail(where, str(exc))


def _parse_recurrence(section, base: RecurrenceParams, where: str) -> RecurrenceParams:
    fields = {f.name for f in dataclasses.fields(RecurrenceParams)}
    _require_keys(section, fields, where)
    kwargs = {k: _as_int(v, f"{where}.{k}") for k, v in section.items()}
    try:
        return dataclasses.replace(base, **kwargs)
    except ConfigurationError as exc:
        raise _fail(where, str(exc))


def _parse_stepper(section, base: StepperConfig, where: str) -> StepperConfig:
    fields = {f.name for f in dataclasses.fields(StepperConfig)}
    _require_keys(section, fields, where)
    kwargs = {}
    for k, v in section.items():
        if k == "method":
            if not isinstance(v, str):
                raise _fail(f"{where}.method", f"expected a string, got {v!r}")
            kwargs[k] = v
        elif k == "poincare_max_steps":
            kwargs[k] = _as_int(v, f"{where}.{k}")
        elif v is None:
            kwargs[k] = None
        else:
            kwargs[k] = _as_number(v, f"{where}.{k}")
    try:
        return dataclasses.replace(base, **kwargs)
    except ConfigurationError as exc:
        raise _fail(where, str(exc))


def load_config(path: str | Path, out_override: str | None = None,
                seed_override: int | None = None) -> RunConfig:
    """Parse and validate a run config; raises ConfigurationError with the
    offending field in the message."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})")
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    _require_keys(raw, _TOP_KEYS, "config")

    system_section = raw.get("system")
    if not isinstance(system_section, dict):
        raise _fail("system", "required object with at least a 'name'")
    _require_keys(system_section, {"name", "params"}, "system")
    name = system_section.get("name")
    if name not in CATALOG:
        raise _fail("system.name", f"unknown system {name!r}; "
                                   f"available: {', '.join(system_names())}")
    overrides = system_section.get("params", {})
    if not isinstance(overrides, dict):
        raise _fail("system.params", "expected an object of parameter overrides")
    for k, v in overrides.items():
        _as_number(v, f"system.params.{k}")

    scenario = default_scenario(name)
    grid = scenario.grid if "grid" not in raw else _parse_grid(raw["grid"], "grid")
    recurrence = scenario.recurrence
    if "recurrence" in raw:
        recurrence = _parse_recurrence(raw["recurrence"], recurrence, "recurrence")
    stepper = scenario.stepper
    if "stepper" in raw:
        stepper = _parse_stepper(raw["stepper"], stepper, "stepper")

    mode = raw.get("mode", "recurrence")
    if mode not in _MODES:
        raise _fail("mode", f"expected one of {sorted(_MODES)}, got {mode!r}")

    refine = raw.get("refine")
    if mode == "refine":
        if not isinstance(refine, dict):
            raise _fail("refine", "required object for mode 'refine'")
        _require_keys(refine, {"attractors", "epsilon"}, "refine")
        if not isinstance(refine.get("attractors"), str):
            raise _fail("refine.attractors", "expected a path to an attractor CSV")
        if _as_number(refine.get("epsilon", 0), "refine.epsilon") <= 0:
            raise _fail("refine.epsilon", "must be > 0")
    elif refine is not None:
        raise _fail("refine", "only valid with mode 'refine'")

    # a naive section also configures the benchmark subcommand, so it is
    # legal with any mode; its shape is checked whenever present
    naive = raw.get("naive")
    if mode == "naive" and not isinstance(naive, dict):
        raise _fail("naive", "required object for mode 'naive'")
    if naive is not None:
        if not isinstance(naive, dict):
            raise _fail("naive", "expected an object")
        _require_keys(naive, {"fixed_points", "speed_tol", "pos_tol", "max_time"},
                      "naive")
        pts = naive.get("fixed_points")
        if not isinstance(pts, list) or not pts:
            raise _fail("naive.fixed_points", "expected a nonempty list of points")

    seed = raw.get("seed", 0)
    if seed_override is not None:
        seed = seed_override
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise _fail("seed", f"expected a nonnegative integer, got {seed!r}")

    out_dir = out_override or raw.get("output", "out")
    if not isinstance(out_dir, (str, Path)):
        raise _fail("output", f"expected a path string, got {out_dir!r}")

    csv_export = raw.get("csv_export", False)
    if not isinstance(csv_export, bool):
        raise _fail("csv_export", f"expected true/false, got {csv_export!r}")

    wrapper = _parse_wrapper(raw["wrapper"], "wrapper") if "wrapper" in raw else _UNSET

    projection = _UNSET
    if "projection" in raw:
        projection = raw["projection"]
        if projection is not None:
            if (not isinstance(projection, list)
                    or not all(isinstance(i, int) and not isinstance(i, bool)
                               for i in projection)):
                raise _fail("projection", "expected a list of axis indices or null")
            projection = tuple(projection)

    fill = _UNSET
    if "fill" in raw:
        fill = raw["fill"]
        if not isinstance(fill, list) or not fill:
            raise _fail("fill", "expected a nonempty list of coordinates")
        fill = [_as_number(v, f"fill[{i}]") for i, v in enumerate(fill)]

    return RunConfig(
        system_name=name, overrides=dict(overrides), grid=grid,
        recurrence=recurrence, stepper=stepper, mode=mode,
        refine=refine, naive=naive, out_dir=Path(out_dir), seed=seed,
        csv_export=csv_export, scenario_notes=dict(scenario.notes),
        wrapper=wrapper, projection=projection, fill=fill,
    )


def _build_system(config: RunConfig):
    """Catalog system with the config's wrapper/projection/fill applied."""
    system = make_system(config.system_name, **config.overrides)
    kwargs = {}
    if config.wrapper is not _UNSET:
        kwargs["wrapper"] = config.wrapper
    if config.projection is not _UNSET:
        kwargs["projection"] = config.projection
    if config.fill is not _UNSET:
        kwargs["fill"] = np.asarray(config.fill, dtype=float)
    if not kwargs:
        return system
    return dataclasses.replace(system, **kwargs)


def _package_version() -> str:
    try:
        return metadata.version("basinscout")
    except metadata.PackageNotFoundError:
        return "unknown"


def _metadata_record(config: RunConfig, stepper: StepperConfig,
                     extra: dict) -> dict:
    record = {
        "system": {"name": config.system_name, "params": config.overrides},
        "grid": [dataclasses.asdict(a) for a in config.grid.axes],
        "recurrence": dataclasses.asdict(config.recurrence),
        "stepper": dataclasses.asdict(stepper),
        "mode": config.mode,
        "seed": config.seed,
        "scenario_notes": config.scenario_notes,
        "version": _package_version(),
    }
    if config.wrapper is not _UNSET:
        record["wrapper"] = (None if config.wrapper is None
                             else dataclasses.asdict(config.wrapper))
    if config.projection is not _UNSET:
        record["projection"] = (None if config.projection is None
                                else list(config.projection))
    if config.fill is not _UNSET:
        record["fill"] = list(config.fill)
    record.update(extra)
    return record


def _write_common(config: RunConfig, basins: np.ndarray,
                  attractors: AttractorStore, record: dict) -> list[Path]:
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    written = list(write_basins(out, basins, config.grid,
                                attractors.count, record))
    written.append(write_attractors_csv(out / "attractors.csv", attractors))
    written.append(write_fractions_json(out / "fractions.json",
                                        basin_fractions(basins)))
    meta = out / "metadata.json"
    meta.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    written.append(meta)
    if config.csv_export:
        written.append(write_basins_csv(out / "basins.csv", basins, config.grid))
    # round-trip check: artifacts must reload to the exact same labels
    reloaded, _ = read_basins(out / "basins.json")
    if not np.array_equal(reloaded, basins):
        raise BasinscoutError("basins round-trip mismatch after writing")
    return written


def _cmd_run(args) -> int:
    config = load_config(args.config, args.out, args.seed)
    if config.mode == "recurrence" and args.threads > 1:
        raise ConfigurationError("the recurrence sweep is single-threaded; "
                                 "--threads only applies to refine/naive modes")
    system = _build_system(config)
    started = time.perf_counter()
    if config.mode == "recurrence":
        result = basins_of_attraction(system, config.grid, config.recurrence,
                                      config.stepper, seed=config.seed)
        basins, attractors = result.basins, result.attractors
        extra = {
            "resolved_dt": result.stepper.dt,
            "iterations_used": result.iterations_used,
            "warnings": result.warnings,
        }
    elif config.mode == "naive":
        naive = config.naive
        fixed_points = np.asarray(naive["fixed_points"], dtype=float)
        basins = naive_basins_fixed_points(
            system, config.grid, fixed_points,
            speed_tol=naive.get("speed_tol", 1e-3),
            pos_tol=naive.get("pos_tol", 0.1),
            max_time=naive.get("max_time", 1000.0),
            stepper=config.stepper, threads=args.threads,
        )
        attractors = AttractorStore(
            {j + 1: fixed_points[j:j + 1] for j in range(fixed_points.shape[0])}
        )
        extra = {"resolved_dt": config.stepper.dt}
    else:
        raise ConfigurationError("use the 'refine' subcommand for refine configs")
    extra["wall_seconds"] = time.perf_counter() - started
    record = _metadata_record(config, config.stepper, extra)
    _write_common(config, basins, attractors, record)
    return 0


def _cmd_refine(args) -> int:
    config = load_config(args.config, args.out, args.seed)
    if config.mode != "refine":
        raise ConfigurationError("refine subcommand needs a config with mode 'refine'")
    system = _build_system(config)
    attractors = read_attractors_csv(config.refine["attractors"])
    if len(attractors) == 0:
        raise ConfigurationError(
            f"attractor file {config.refine['attractors']} holds no points"
        )
    started = time.perf_counter()
    basins = refine_with_attractors(
        system, config.grid, attractors, float(config.refine["epsilon"]),
        config.recurrence, config.stepper, threads=args.threads,
    )
    extra = {"epsilon": float(config.refine["epsilon"]),
             "wall_seconds": time.perf_counter() - started}
    record = _metadata_record(config, config.stepper, extra)
    _write_common(config, basins, attractors, record)
    return 0


def _cmd_benchmark(args) -> int:
    config = load_config(args.config, args.out, args.seed)
    if config.naive is None:
        raise ConfigurationError("benchmark needs a 'naive' section with fixed_points")
    system = _build_system(config)
    naive = config.naive
    rec_report, naive_report = benchmark_compare(
        system, config.grid, np.asarray(naive["fixed_points"], dtype=float),
        config.recurrence, config.stepper,
        speed_tol=naive.get("speed_tol", 1e-3),
        pos_tol=naive.get("pos_tol", 0.1),
        max_time=naive.get("max_time", 1000.0),
        threads=args.threads,
    )
    config.out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"recurrence": rec_report.as_dict(), "naive": naive_report.as_dict()}
    (config.out_dir / "benchmark.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(json.dumps(payload, indent=2))
    return 0


def _parse_slice(spec: str) -> dict[int, int]:
    fixed = {}
    if spec:
        for part in spec.split(","):
            if "=" not in part:
                raise ConfigurationError(
                    f"slice entry {part!r} must look like AXIS=INDEX"
                )
            ax, idx = part.split("=", 1)
            try:
                fixed[int(ax)] = int(idx)
            except ValueError:
                raise ConfigurationError(f"slice entry {part!r} must be integers")
    return fixed


def _cmd_render(args) -> int:
    basins, _header = read_basins(args.basins)
    labels2d = render_slice(basins, _parse_slice(args.slice))
    write_ppm(args.out, labels2d, args.palette)
    return 0


def _cmd_list_systems(_args) -> int:
    for name in system_names():
        entry = CATALOG[name]
        system = entry.builder()
        wrapper = system.wrapper
        if isinstance(wrapper, Stroboscopic):
            kind = f"ode, stroboscopic T={wrapper.period:g}"
        elif isinstance(wrapper, PoincarePlane):
            kind = (f"ode, plane x[{wrapper.axis}]={wrapper.offset:g} "
                    f"({wrapper.direction})")
        else:
            kind = system.kind
        print(f"{name:20s} {kind:34s} {entry.description}")
        params = ", ".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}"
                           for k, v in entry.defaults.items())
        print(f"{'':20s} params: {params}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="basinscout",
        description="Attractor discovery and basin mapping on state-space grids",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, threads=False):
        p.add_argument("--config", required=True, help="path to a JSON run config")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="seed recorded in metadata "
                                                "and used by auto-dt sampling")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads (refine/naive modes only)")

    add_common(sub.add_parser("run", help="full sweep (or naive labeling)"))
    add_common(sub.add_parser("refine", help="label a grid against known attractors"))
    add_common(sub.add_parser("benchmark", help="time recurrence vs naive labeling"))

    render = sub.add_parser("render", help="render a basin slice as a PPM image")
    render.add_argument("--basins", required=True, help="path to a basins.json header")
    render.add_argument("--slice", default="", help="fixed axes, e.g. '2=50' "
                                                    "(all but two must be fixed)")
    render.add_argument("--palette", default="default")
    render.add_argument("--out", required=True, help="output .ppm path")

    sub.add_parser("list-systems", help="show built-in systems and parameters")
    return parser


_HANDLERS = {
    "run": _cmd_run,
    "refine": _cmd_refine,
    "benchmark": _cmd_benchmark,
    "render": _cmd_render,
    "list-systems": _cmd_list_systems,
}


def _cleanup_partial(out_dir: Path) -> None:
    for name in ("basins.bin", "basins.json", "attractors.csv",
                 "fractions.json", "metadata.json", "basins.csv"):
        try:
            (out_dir / name).unlink(missing_ok=True)
        except OSError:
            pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DivergedNumerically, AutoDtFailed, BasinscoutError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        out = getattr(args, "out", None) or "out"
        if getattr(args, "config", None):
            try:
                config = load_config(args.config, getattr(args, "out", None), None)
                out = config.out_dir
            except BasinscoutError:
                pass
        _cleanup_partial(Path(out))
        return 3


if __name__ == "__main__":
    sys.exit(main())
