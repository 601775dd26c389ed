import json

import numpy as np
import pytest

from eegret.containers import (read_array_container, read_npy,
                               write_array_container)
from eegret.errors import FormatError, IntegrityError


class TestArrayContainer:
    @pytest.mark.parametrize("dtype_tag,np_dtype", [("f32le", "<f4"), ("f64le", "<f8")])
    def test_round_trip_bit_exact(self, tmp_path, dtype_tag, np_dtype):
        gen = np.random.default_rng(11)
        arr = gen.standard_normal((7, 3, 5)).astype(np_dtype)
        write_array_container(tmp_path / "c", arr, dtype_tag, labels=[1, 2, 3])
        back, meta = read_array_container(tmp_path / "c")
        assert back.dtype == np.dtype(np_dtype)
        assert (back.view(np.uint8) == arr.view(np.uint8)).all()
        assert meta["labels"] == [1, 2, 3]

    def test_byte_count_mismatch_is_integrity_error(self, tmp_path):
        arr = np.zeros((4, 6), dtype=np.float32)
        write_array_container(tmp_path / "c", arr, "f32le")
        payload = (tmp_path / "c" / "data.bin").read_bytes()
        (tmp_path / "c" / "data.bin").write_bytes(payload[:-4])
        with pytest.raises(IntegrityError):
            read_array_container(tmp_path / "c")

    def test_missing_or_corrupt_header(self, tmp_path):
        with pytest.raises(FormatError):
            read_array_container(tmp_path / "nope")
        d = tmp_path / "c"
        d.mkdir()
        (d / "meta.json").write_text("{not json")
        (d / "data.bin").write_bytes(b"")
        with pytest.raises(FormatError):
            read_array_container(d)
        (d / "meta.json").write_text(json.dumps({"shape": [0]}))
        with pytest.raises(FormatError):
            read_array_container(d)

    def test_overwrite_replaces_content(self, tmp_path):
        write_array_container(tmp_path / "c", np.ones((2, 2), np.float32), "f32le")
        write_array_container(tmp_path / "c", np.full((3, 3), 7.0, np.float32), "f32le")
        back, _ = read_array_container(tmp_path / "c")
        assert back.shape == (3, 3) and (back == 7.0).all()


class TestNpyImport:
    def test_reader_matches_numpy(self, tmp_path):
        gen = np.random.default_rng(3)
        for dtype in (np.float32, np.float64):
            arr = gen.standard_normal((5, 4, 3)).astype(dtype)
            path = tmp_path / f"a_{arr.dtype}.npy"
            np.save(path, arr)
            back = read_npy(path)
            assert back.dtype == arr.dtype
            np.testing.assert_array_equal(back, arr)

    def test_rejects_fortran_order(self, tmp_path):
        arr = np.asfortranarray(np.arange(12, dtype=np.float32).reshape(3, 4))
        np.save(tmp_path / "f.npy", arr)
        with pytest.raises(FormatError, match="Fortran"):
            read_npy(tmp_path / "f.npy")

    def test_rejects_other_dtypes(self, tmp_path):
        np.save(tmp_path / "i.npy", np.arange(4))
        with pytest.raises(FormatError, match="dtype"):
            read_npy(tmp_path / "i.npy")

    def test_rejects_bad_magic_and_truncation(self, tmp_path):
        p = tmp_path / "x.npy"
        p.write_bytes(b"NOTNUMPY".ljust(32, b"\x00"))
        with pytest.raises(FormatError, match="magic"):
            read_npy(p)
        np.save(tmp_path / "t.npy", np.zeros((4, 4), np.float32))
        raw = (tmp_path / "t.npy").read_bytes()
        (tmp_path / "t.npy").write_bytes(raw[:-8])
        with pytest.raises(IntegrityError):
            read_npy(tmp_path / "t.npy")
