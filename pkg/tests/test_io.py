import io as _io
import struct

import numpy as np
import pytest

from scwd import io
from scwd.core import sliced_quantiles
from scwd.errors import CacheMismatchError, InvalidArgumentError, MalformedFileError, NotAStackError, VersionError
from scwd.geometry import LatLonGrid, make_center_grid, make_work_grid
from scwd.kernel import precompute_weights, weights_digest
from scwd.results import LocalWDMap
from scwd.stack import FieldStack

from conftest import random_stack, small_params


@pytest.fixture
def stack(rng):
    vals = rng.normal(size=(3, 4, 8))
    vals[1, 2, 5] = np.nan
    return FieldStack(make_work_grid(4, 8), vals, ("a", "b", "c"), "tas", "K")


def header_offsets():
    # magic(8) version(4) T(8) n_lat(8) n_lon(8)
    return {"version": 8, "T": 12, "n_lat": 20, "n_lon": 28}


class TestStackFormat:
    def test_round_trip_bitwise(self, stack, tmp_path):
        path = tmp_path / "s.scwd"
        io.write_stack(stack, path)
        back = io.read_stack(path)
        assert back.bitwise_equal(stack)
        assert np.isnan(back.values[1, 2, 5])
        assert io.stack_bytes(back) == path.read_bytes()

    def test_layout(self, stack):
        data = io.stack_bytes(stack)
        assert data[:8] == b"SCWDSTK\x00"
        assert struct.unpack_from("<IQQQ", data, 8) == (1, 3, 4, 8)
        assert struct.unpack_from("<4d", data, 36) == tuple(stack.grid.lat)
        payload = np.frombuffer(data[-3 * 4 * 8 * 4:], dtype="<f4")
        assert payload.tobytes() == stack.values.astype("<f4").tobytes()

    def test_bad_magic(self, stack):
        data = b"XXXXXXXX" + io.stack_bytes(stack)[8:]
        with pytest.raises(NotAStackError):
            io.read_stack(_io.BytesIO(data))

    def test_truncated(self, stack):
        data = io.stack_bytes(stack)
        with pytest.raises(MalformedFileError):
            io.read_stack(_io.BytesIO(data[:-5]))

    def test_trailing_bytes(self, stack):
        with pytest.raises(MalformedFileError):
            io.read_stack(_io.BytesIO(io.stack_bytes(stack) + b"\x00"))

    def test_future_version(self, stack):
        data = bytearray(io.stack_bytes(stack))
        struct.pack_into("<I", data, 8, 2)
        with pytest.raises(VersionError):
            io.read_stack(_io.BytesIO(bytes(data)))

    def test_n_lat_mismatch(self, stack):
        data = bytearray(io.stack_bytes(stack))
        struct.pack_into("<Q", data, 20, 5)
        with pytest.raises(MalformedFileError):
            io.read_stack(_io.BytesIO(bytes(data)))

    def test_unknown_missing_flag(self, stack):
        data = io.stack_bytes(stack)
        # header(36) + lat(4*8) + lon(8*8) + "tas"(4+3) + "K"(4+1)
        pos = 36 + 32 + 64 + 7 + 5
        assert data[pos] == 1
        patched = data[:pos] + b"\x07" + data[pos + 1:]
        with pytest.raises(MalformedFileError):
            io.read_stack(_io.BytesIO(patched))


class TestCsv:
    def test_single_value(self):
        s = io.read_csv_fields(_io.StringIO("time_label,lat_index,lon_index,value\nt0,0,0,5.0\n"), LatLonGrid([0.0], [0.0]))
        assert s.values.shape == (1, 1, 1) and s.values[0, 0, 0] == 5.0 and s.timestamps == ("t0",)

    def test_empty_value_is_missing(self):
        text = "time_label,lat_index,lon_index,value\nt0,0,0,\nt0,0,1,2\n"
        s = io.read_csv_fields(_io.StringIO(text), LatLonGrid([0.0], [0.0, 1.0]))
        assert np.isnan(s.values[0, 0, 0]) and s.values[0, 0, 1] == 2

    def test_unreferenced_cells_missing(self):
        text = "time_label,lat_index,lon_index,value\nt0,0,0,1\nt1,0,1,2\n"
        s = io.read_csv_fields(_io.StringIO(text), LatLonGrid([0.0], [0.0, 1.0]))
        assert s.timestamps == ("t0", "t1") and np.isnan(s.values[0, 0, 1]) and np.isnan(s.values[1, 0, 0])

    @pytest.mark.parametrize("row", ["t0,1,0,5", "t0,0,-1,5", "t0,0,0,abc", "t0,0,0"])
    def test_malformed_rows(self, row):
        with pytest.raises(MalformedFileError):
            io.read_csv_fields(_io.StringIO("time_label,lat_index,lon_index,value\n" + row + "\n"), LatLonGrid([0.0], [0.0]))

    def test_header_required(self):
        with pytest.raises(MalformedFileError):
            io.read_csv_fields(_io.StringIO("t0,0,0,5\n"), LatLonGrid([0.0], [0.0]))

    def test_export_round_trip(self, stack, tmp_path):
        path = tmp_path / "s.csv"
        io.write_csv_fields(stack, path)
        back = io.read_csv_fields(path, stack.grid, "tas", "K")
        assert back.bitwise_equal(stack)


class TestWeightsFormat:
    def test_round_trip(self, tmp_path):
        ws = precompute_weights(make_center_grid(3, 6), make_work_grid(9, 16), 2500.0)
        path = tmp_path / "w.bin"
        io.write_weights(ws, path)
        back = io.read_weights(path, expect_digest=ws.digest())
        for name in ("indptr", "indices", "weights", "row_of_center"):
            assert getattr(back, name).tobytes() == getattr(ws, name).tobytes()
        assert back.centers == ws.centers and back.work == ws.work and back.range_km == ws.range_km
        assert io.weights_bytes(back) == path.read_bytes()

    def test_flat_round_trip(self, tmp_path):
        ws = precompute_weights(make_center_grid(3, 6), make_work_grid(9, 16), "flat")
        io.write_weights(ws, tmp_path / "w.bin")
        assert io.read_weights(tmp_path / "w.bin").flat

    def test_digest_mismatch(self, tmp_path):
        ws = precompute_weights(make_center_grid(3, 6), make_work_grid(9, 16), 2500.0)
        io.write_weights(ws, tmp_path / "w.bin")
        other = weights_digest(ws.centers, ws.work, 3000.0)
        with pytest.raises(CacheMismatchError):
            io.read_weights(tmp_path / "w.bin", expect_digest=other)

    def test_tampered_contents(self, tmp_path):
        ws = precompute_weights(make_center_grid(3, 6), make_work_grid(9, 16), 2500.0)
        data = bytearray(io.weights_bytes(ws))
        struct.pack_into("<d", data, 44, 2600.0)  # range field
        with pytest.raises(MalformedFileError):
            io.read_weights(_io.BytesIO(bytes(data)))


class TestQuantileFormat:
    def test_round_trip(self, rng, tmp_path):
        work, centers = make_work_grid(9, 16), make_center_grid(4, 8)
        vals = rng.normal(size=(7, 9, 16))
        vals[:, :5] = np.nan
        sq = sliced_quantiles(FieldStack(work, vals), small_params(work, centers), name="model-x")
        io.write_quantiles(sq, tmp_path / "q.bin")
        back = io.read_quantiles(tmp_path / "q.bin", expect_digest=sq.digest)
        assert back.name == "model-x" and back.missing_slices == sq.missing_slices > 0
        assert back.values.tobytes() == sq.values.tobytes()
        assert back.counts.tolist() == sq.counts.tolist()
        assert back.global_values.tobytes() == sq.global_values.tobytes()
        assert io.quantiles_bytes(back) == (tmp_path / "q.bin").read_bytes()

    def test_mismatch(self, rng, tmp_path):
        work, centers = make_work_grid(9, 16), make_center_grid(4, 8)
        sq = sliced_quantiles(random_stack(work, 3, rng), small_params(work, centers))
        io.write_quantiles(sq, tmp_path / "q.bin")
        with pytest.raises(CacheMismatchError):
            io.read_quantiles(tmp_path / "q.bin", expect_digest=small_params(work, centers, r=1).slicing_digest())


class TestMapFormats:
    def test_map_round_trip(self, tmp_path):
        m = LocalWDMap(make_center_grid(3, 4), np.array([0.5] * 11 + [np.nan]), 2.0)
        io.write_map(m, tmp_path / "m.bin")
        back = io.read_map(tmp_path / "m.bin")
        assert back.values.tobytes() == m.values.tobytes() and back.centers == m.centers and back.r == 2.0

    def test_image_all_zero(self):
        m = LocalWDMap(make_center_grid(3, 4), np.zeros(12), 2.0)
        data = io.map_image_bytes(m, 0.0, 1.0)
        header = b"P6\n4 3\n255\n"
        assert data.startswith(header)
        pixels = np.frombuffer(data[len(header):], dtype=np.uint8).reshape(-1, 3)
        assert np.all(pixels == io.ramp_rgb(0.0))

    def test_image_shape(self):
        m = LocalWDMap(make_center_grid(60, 120), np.linspace(0, 1, 7200), 2.0)
        data = io.map_image_bytes(m, 0.0, 1.0)
        assert data.startswith(b"P6\n120 60\n255\n") and len(data) == len(b"P6\n120 60\n255\n") + 7200 * 3

    def test_single_missing_pixel_gray(self):
        vals = np.full(12, 0.25)
        vals[1] = np.nan  # southern row, second column -> last image row
        data = io.map_image_bytes(LocalWDMap(make_center_grid(3, 4), vals, 2.0), 0.0, 1.0)
        pixels = np.frombuffer(data[len(b"P6\n4 3\n255\n"):], dtype=np.uint8).reshape(3, 4, 3)
        gray = np.all(pixels == 128, axis=-1)
        assert gray.sum() == 1 and gray[2, 1]

    def test_north_row_first_and_clamping(self):
        vals = np.array([-5.0] * 4 + [0.5] * 4 + [9.0] * 4)
        data = io.map_image_bytes(LocalWDMap(make_center_grid(3, 4), vals, 2.0), 0.0, 1.0)
        pixels = np.frombuffer(data[len(b"P6\n4 3\n255\n"):], dtype=np.uint8).reshape(3, 4, 3)
        assert np.all(pixels[0] == io.ramp_rgb(1.0)) and np.all(pixels[2] == io.ramp_rgb(0.0))

    @pytest.mark.parametrize("low,high", [(1.0, 1.0), (2.0, 1.0), (0.0, float("nan"))])
    def test_degenerate_bounds(self, low, high):
        with pytest.raises(InvalidArgumentError):
            io.map_image_bytes(LocalWDMap(make_center_grid(1, 1), np.zeros(1), 2.0), low, high)
