"""Artifact files: basin arrays, attractor lists, fraction reports, images.

The basin array format is a pair: a little-endian signed 32-bit row-major
binary payload plus a JSON header sidecar carrying the axes, the attractor
count and the parameter record of the run that produced it.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .analysis import FractionReport
from .engine import AttractorStore
from .errors import ConfigurationError
from .grid import Grid

FORMAT_NAME = "basinscout-basins"
FORMAT_VERSION = 1

# Qualitative palette for basin ids (cycled); label -1 always renders black.
DEFAULT_PALETTE = [
    (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
    (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127),
    (188, 189, 34), (23, 190, 207),
]
GRAYSCALE_PALETTE = [(int(round(40 + 215 * i / 9)),) * 3 for i in range(10)]
PALETTES = {"default": DEFAULT_PALETTE, "grayscale": GRAYSCALE_PALETTE}


def write_basins(out_dir: str | Path, basins: np.ndarray, grid: Grid,
                 attractor_count: int, record: dict | None = None,
                 stem: str = "basins") -> tuple[Path, Path]:
    """Write `<stem>.bin` and its `<stem>.json` header; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(basins, dtype=np.int32)
    if arr.shape != grid.shape:
        raise ConfigurationError(f"basins shape {arr.shape} != grid shape {grid.shape}")
    bin_path = out_dir / f"{stem}.bin"
    json_path = out_dir / f"{stem}.json"
    bin_path.write_bytes(np.ascontiguousarray(arr).astype("<i4").tobytes())
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "axes": grid.describe(),
        "attractor_count": int(attractor_count),
        "payload": {"file": bin_path.name, "dtype": "<i4", "order": "row-major"},
        "params": record or {},
    }
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return bin_path, json_path


def read_basins(header_path: str | Path) -> tuple[np.ndarray, dict]:
    """Load a basin array from its JSON header; returns (labels, header)."""
    header_path = Path(header_path)
    header = json.loads(header_path.read_text())
    if header.get("format") != FORMAT_NAME:
        raise ConfigurationError(f"{header_path} is not a {FORMAT_NAME} header")
    grid = Grid.from_ranges(
        [(a["min"], a["max"], a["length"]) for a in header["axes"]]
    )
    payload = header["payload"]
    bin_path = header_path.parent / payload["file"]
    raw = np.frombuffer(bin_path.read_bytes(), dtype=payload["dtype"])
    if raw.size != grid.size:
        raise ConfigurationError(
            f"payload holds {raw.size} labels, header grid has {grid.size} cells"
        )
    return raw.reshape(grid.shape).copy(), header


def write_basins_csv(path: str | Path, basins: np.ndarray, grid: Grid) -> Path:
    """Optional flat CSV export: one row of axis indices plus the label."""
    path = Path(path)
    arr = np.asarray(basins).reshape(grid.shape)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"i{d}" for d in range(grid.ndim)] + ["label"])
        for idx in np.ndindex(grid.shape):
            writer.writerow(list(idx) + [int(arr[idx])])
    return path


def write_attractors_csv(path: str | Path, attractors: AttractorStore) -> Path:
    path = Path(path)
    dim = attractors.dimension() if len(attractors) else 0
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attractor_id"] + [f"x{c}" for c in range(dim)])
        for k, pts in attractors.items():
            for row in pts:
                writer.writerow([k] + [repr(float(v)) for v in row])
    return path


def read_attractors_csv(path: str | Path) -> AttractorStore:
    path = Path(path)
    store = AttractorStore()
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "attractor_id":
            raise ConfigurationError(f"{path} is not an attractor table")
        for row in reader:
            if not row:
                continue
            store.add_points(int(row[0]), np.array([float(v) for v in row[1:]]))
    return store


def write_fractions_json(path: str | Path, report: FractionReport) -> Path:
    path = Path(path)
    payload = {
        "total": report.total,
        "counts": {str(k): v for k, v in sorted(report.counts.items())},
        "fractions": {str(k): v for k, v in sorted(report.fractions.items())},
    }
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def render_slice(basins: np.ndarray, fixed: dict[int, int]) -> np.ndarray:
    """2D view of a label array with all but two axes pinned to indices.

    Of the two remaining axes, the lower-numbered one becomes the image's
    horizontal axis and the other the vertical axis.
    """
    arr = np.asarray(basins)
    for ax, idx in fixed.items():
        if ax < 0 or ax >= arr.ndim:
            raise ConfigurationError(f"slice axis {ax} outside array of rank {arr.ndim}")
        if idx < 0 or idx >= arr.shape[ax]:
            raise ConfigurationError(
                f"slice index {idx} outside axis {ax} of length {arr.shape[ax]}"
            )
    free = [ax for ax in range(arr.ndim) if ax not in fixed]
    if len(free) != 2:
        raise ConfigurationError(
            f"slice must leave exactly 2 free axes, got {len(free)} "
            f"(array rank {arr.ndim}, fixed {sorted(fixed)})"
        )
    indexer = tuple(fixed[ax] if ax in fixed else slice(None) for ax in range(arr.ndim))
    return arr[indexer]


def write_ppm(path: str | Path, labels2d: np.ndarray,
              palette: str | list = "default") -> Path:
    """Binary PPM (P6) of a 2D label slice.

    Label -1 renders black; ids >= 1 cycle through the palette. Image row 0
    corresponds to the maximum of the vertical (second) axis.
    """
    path = Path(path)
    arr = np.asarray(labels2d)
    if arr.ndim != 2:
        raise ConfigurationError(f"expected a 2D slice, got rank {arr.ndim}")
    if isinstance(palette, str):
        if palette not in PALETTES:
            raise ConfigurationError(
                f"unknown palette {palette!r}; available: {sorted(PALETTES)}"
            )
        colors = PALETTES[palette]
    else:
        colors = [tuple(int(c) for c in rgb) for rgb in palette]
        if not colors:
            raise ConfigurationError("palette must not be empty")
    bad = np.unique(arr[(arr < 1) & (arr != -1)])
    if bad.size:
        raise ConfigurationError(f"labels {bad.tolist()} are not renderable basin ids")

    width, height = arr.shape
    lut_size = int(arr.max()) + 1 if arr.max() >= 1 else 2
    lut = np.zeros((lut_size + 1, 3), dtype=np.uint8)  # last row serves label -1
    for label in range(1, lut_size):
        lut[label] = colors[(label - 1) % len(colors)]
    pixels = lut[arr.T[::-1, :]]  # rows top-down = vertical axis max-down
    with path.open("wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
    return path
