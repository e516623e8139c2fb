"""Artifact round-trips and the PPM renderer."""

import json

import numpy as np
import pytest

from basinscout import AttractorStore, ConfigurationError, Grid
from basinscout.io import (
    read_attractors_csv,
    read_basins,
    render_slice,
    write_attractors_csv,
    write_basins,
    write_basins_csv,
    write_fractions_json,
    write_ppm,
)
from basinscout.analysis import basin_fractions


def parse_ppm(path):
    data = path.read_bytes() if hasattr(path, "read_bytes") else open(path, "rb").read()
    assert data.startswith(b"P6\n")
    header, rest = data.split(b"255\n", 1)
    dims = header.split(b"\n")[1].split()
    w, h = int(dims[0]), int(dims[1])
    pixels = np.frombuffer(rest, dtype=np.uint8).reshape(h, w, 3)
    return w, h, pixels


class TestBasinsRoundTrip:
    def test_exact_reconstruction(self, tmp_path):
        rng = np.random.default_rng(0)
        grid = Grid.from_ranges([(-1.0, 2.0, 7), (0.0, 5.0, 5), (-3.0, -1.0, 3)])
        basins = rng.integers(-1, 5, size=grid.shape).astype(np.int32)
        basins[basins == 0] = 1
        write_basins(tmp_path, basins, grid, attractor_count=4,
                     record={"seed": 7})
        loaded, header = read_basins(tmp_path / "basins.json")
        assert np.array_equal(loaded, basins)
        assert loaded.dtype == np.int32
        assert header["attractor_count"] == 4
        assert header["params"] == {"seed": 7}
        assert header["axes"][0] == {"min": -1.0, "max": 2.0, "length": 7}

    def test_payload_is_little_endian_int32_row_major(self, tmp_path):
        grid = Grid.from_ranges([(0.0, 1.0, 2), (0.0, 1.0, 2)])
        basins = np.array([[1, 2], [3, -1]], dtype=np.int32)
        write_basins(tmp_path, basins, grid, attractor_count=3)
        raw = (tmp_path / "basins.bin").read_bytes()
        assert raw == np.array([1, 2, 3, -1], dtype="<i4").tobytes()

    def test_shape_mismatch_rejected(self, tmp_path):
        grid = Grid.from_ranges([(0.0, 1.0, 2), (0.0, 1.0, 2)])
        with pytest.raises(ConfigurationError):
            write_basins(tmp_path, np.ones((3, 2), dtype=np.int32), grid, 1)

    def test_truncated_payload_rejected(self, tmp_path):
        grid = Grid.from_ranges([(0.0, 1.0, 2), (0.0, 1.0, 2)])
        write_basins(tmp_path, np.ones(grid.shape, dtype=np.int32), grid, 1)
        (tmp_path / "basins.bin").write_bytes(b"\x01\x00\x00\x00")
        with pytest.raises(ConfigurationError):
            read_basins(tmp_path / "basins.json")

    def test_csv_export(self, tmp_path):
        grid = Grid.from_ranges([(0.0, 1.0, 2), (0.0, 1.0, 2)])
        basins = np.array([[1, 2], [3, -1]], dtype=np.int32)
        path = write_basins_csv(tmp_path / "basins.csv", basins, grid)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "i0,i1,label"
        assert lines[1:] == ["0,0,1", "0,1,2", "1,0,3", "1,1,-1"]


class TestAttractorsCsv:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        store = AttractorStore({
            1: rng.normal(size=(4, 3)),
            2: rng.normal(size=(2, 3)) * 1e-7,
        })
        path = write_attractors_csv(tmp_path / "attractors.csv", store)
        loaded = read_attractors_csv(path)
        assert loaded.ids() == [1, 2]
        for k in (1, 2):
            assert np.array_equal(loaded.points(k), store.points(k))

    def test_header_guard(self, tmp_path):
        bad = tmp_path / "x.csv"
        bad.write_text("foo,bar\n1,2\n")
        with pytest.raises(ConfigurationError):
            read_attractors_csv(bad)


class TestFractionsJson:
    def test_contents(self, tmp_path):
        report = basin_fractions(np.array([1, 1, 2, -1]))
        path = write_fractions_json(tmp_path / "fractions.json", report)
        payload = json.loads(path.read_text())
        assert payload["total"] == 4
        assert payload["counts"] == {"-1": 1, "1": 2, "2": 1}
        assert payload["fractions"]["1"] == 0.5


class TestRenderSlice:
    def test_fixes_all_but_two_axes(self):
        arr = np.arange(24).reshape(2, 3, 4) % 3 + 1
        out = render_slice(arr, {2: 1})
        assert out.shape == (2, 3)
        assert np.array_equal(out, arr[:, :, 1])

    def test_out_of_range_index(self):
        arr = np.ones((2, 3, 4), dtype=int)
        with pytest.raises(ConfigurationError):
            render_slice(arr, {2: 9})
        with pytest.raises(ConfigurationError):
            render_slice(arr, {5: 0})

    def test_wrong_free_axis_count(self):
        arr = np.ones((2, 3, 4), dtype=int)
        with pytest.raises(ConfigurationError):
            render_slice(arr, {})

    def test_3d_basins_slice_to_image(self, tmp_path):
        rng = np.random.default_rng(5)
        basins = rng.integers(1, 4, size=(100, 100, 100)).astype(np.int32)
        basins[rng.random(basins.shape) < 0.1] = -1
        labels2d = render_slice(basins, {2: 50})
        assert labels2d.shape == (100, 100)
        path = write_ppm(tmp_path / "slice.ppm", labels2d)
        w, h, pixels = parse_ppm(path)
        assert (w, h) == (100, 100)


class TestPpm:
    def test_two_by_two_example(self, tmp_path):
        labels = np.array([[1, 2], [2, -1]])
        path = write_ppm(tmp_path / "img.ppm", labels)
        w, h, pixels = parse_ppm(path)
        assert (w, h) == (2, 2)
        colors = {tuple(pixels[r, c]) for r in range(2) for c in range(2)}
        assert len(colors) == 3
        # row 0 is the maximum of the vertical (second) axis:
        # top row = labels[:, 1] = [2, -1], so the top-right pixel is black
        assert tuple(pixels[0, 1]) == (0, 0, 0)
        assert tuple(pixels[1, 0]) != (0, 0, 0)

    def test_vertical_flip_orientation(self, tmp_path):
        labels = np.array([[1, 2]])  # one column, vertical axis length 2
        _, _, pixels = parse_ppm(write_ppm(tmp_path / "img.ppm", labels))
        top = tuple(pixels[0, 0])
        bottom = tuple(pixels[1, 0])
        assert top != bottom  # label 2 on top (max of axis), label 1 below

    def test_identical_bytes_on_rerender(self, tmp_path):
        rng = np.random.default_rng(2)
        labels = rng.integers(1, 5, size=(13, 9))
        labels[0, 0] = -1
        a = write_ppm(tmp_path / "a.ppm", labels).read_bytes()
        b = write_ppm(tmp_path / "b.ppm", labels).read_bytes()
        assert a == b

    def test_rejects_non_basin_labels(self, tmp_path):
        with pytest.raises(ConfigurationError):
            write_ppm(tmp_path / "img.ppm", np.array([[0, 1]]))
        with pytest.raises(ConfigurationError):
            write_ppm(tmp_path / "img.ppm", np.array([[-3, 1]]))

    def test_unknown_palette(self, tmp_path):
        with pytest.raises(ConfigurationError):
            write_ppm(tmp_path / "img.ppm", np.array([[1]]), palette="neon")

    def test_palette_cycles_for_many_ids(self, tmp_path):
        labels = np.arange(1, 25).reshape(4, 6)
        _, _, pixels = parse_ppm(write_ppm(tmp_path / "img.ppm", labels))
        assert (pixels.sum(axis=2) > 0).all()  # nothing rendered black
