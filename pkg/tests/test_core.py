import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from somkit.core import (
    FileFormatError,
    RngStream,
    TruncatedFileError,
    archive_from_bytes,
    archive_to_bytes,
    load_archive,
    load_tensor,
    save_archive,
    save_tensor,
    tensor_from_bytes,
    tensor_to_bytes,
)


class TestRngStream:
    def test_replay_identical(self):
        a = RngStream(seed=1).normal([4])
        b = RngStream(seed=1).normal([4])
        np.testing.assert_array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = RngStream(seed=1, stream_id=0).normal([8])
        b = RngStream(seed=1, stream_id=1).normal([8])
        assert not np.array_equal(a, b)

    def test_shape_contract(self):
        assert RngStream(seed=3).normal([2, 3]).shape == (2, 3)
        assert RngStream(seed=3).normal([2, 3]).size == 6

    def test_counter_advances(self):
        s = RngStream(seed=5)
        assert s.counter == 0
        s.normal([2])
        s.uniform(shape=[2])
        assert s.counter == 2

    def test_normal_moments(self):
        # Monte-Carlo bound: 3*sigma/sqrt(n) for the mean, 3*sqrt(2/n) for
        # the variance of a standard normal.
        n = 10**6
        x = RngStream(seed=11).normal([n])
        assert abs(x.mean()) < 0.004
        assert abs(x.var() - 1.0) < 0.01

    def test_child_streams_independent(self):
        root = RngStream(seed=7)
        a = root.child("noise", 3).normal([4096])
        b = root.child("noise", 4).normal([4096])
        c = root.child("latent", 3).normal([4096])
        r_ab = np.corrcoef(a, b)[0, 1]
        r_ac = np.corrcoef(a, c)[0, 1]
        assert abs(r_ab) < 0.06 and abs(r_ac) < 0.06

    def test_child_derivation_deterministic(self):
        a = RngStream(seed=9).child("x", 1)
        b = RngStream(seed=9).child("x", 1)
        assert a.stream_id == b.stream_id
        np.testing.assert_array_equal(a.normal([3]), b.normal([3]))

    def test_float32_draws(self):
        x = RngStream(seed=2).normal([10], dtype=np.float32)
        assert x.dtype == np.float32


class TestSomt:
    @pytest.mark.parametrize("dtype", [np.float32, np.float64, np.uint8])
    @pytest.mark.parametrize("shape", [(1,), (5,), (2, 3), (2, 3, 4), ()])
    def test_round_trip(self, tmp_path, dtype, shape):
        rng = np.random.default_rng(0)
        if dtype == np.uint8:
            arr = rng.integers(0, 256, size=shape).astype(np.uint8)
        else:
            arr = rng.standard_normal(shape).astype(dtype)
        p = tmp_path / "t.somt"
        save_tensor(p, arr)
        back = load_tensor(p)
        assert back.dtype == np.dtype(dtype)
        assert back.shape == arr.shape
        assert back.tobytes() == arr.tobytes()

    def test_golden_header_bytes(self):
        # f32 scalar 1.0 with dims=[1]: magic, version, dtype code, rank,
        # one u64 dim, then the IEEE-754 payload.
        buf = tensor_to_bytes(np.array([1.0], dtype=np.float32))
        expect = bytes.fromhex("534f4d54" "0100" "00" "01") + bytes.fromhex(
            "0100000000000000" "0000803f"
        )
        assert buf == expect

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.somt"
        p.write_bytes(b"XYZT" + b"\x00" * 16)
        with pytest.raises(FileFormatError):
            load_tensor(p)

    def test_truncated_payload(self, tmp_path):
        buf = tensor_to_bytes(np.zeros((4, 4), dtype=np.float64))
        p = tmp_path / "short.somt"
        p.write_bytes(buf[:-8])
        with pytest.raises(TruncatedFileError):
            load_tensor(p)

    def test_unsupported_dtype(self):
        with pytest.raises(ValueError):
            tensor_to_bytes(np.zeros(3, dtype=np.int32))

    @given(
        st.lists(st.integers(1, 5), min_size=0, max_size=3),
        st.sampled_from(["float32", "float64", "uint8"]),
        st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_round_trip_property(self, dims, dtype, seed):
        rng = np.random.default_rng(seed)
        if dtype == "uint8":
            arr = rng.integers(0, 256, size=dims).astype(np.uint8)
        else:
            arr = (1000 * rng.standard_normal(dims)).astype(dtype)
        back, end = tensor_from_bytes(tensor_to_bytes(arr))
        assert back.tobytes() == np.ascontiguousarray(arr).tobytes()
        assert back.shape == tuple(dims)


class TestSoma:
    def test_round_trip(self, tmp_path):
        entries = {
            "g/w0": np.arange(6, dtype=np.float32).reshape(2, 3),
            "g/b0": np.zeros(3, dtype=np.float64),
            "meta": np.frombuffer(b'{"a":1}', dtype=np.uint8).copy(),
        }
        p = tmp_path / "a.soma"
        save_archive(p, entries)
        back = load_archive(p)
        assert list(back) == list(entries)
        for k in entries:
            assert back[k].tobytes() == entries[k].tobytes()
            assert back[k].dtype == entries[k].dtype

    def test_write_is_deterministic(self):
        entries = [("b", np.ones(2, np.float32)), ("a", np.zeros(1, np.float64))]
        assert archive_to_bytes(entries) == archive_to_bytes(entries)

    def test_duplicate_names_rejected(self):
        entries = [("x", np.ones(1, np.float32)), ("x", np.ones(1, np.float32))]
        with pytest.raises(ValueError):
            archive_to_bytes(entries)

    def test_empty_archive(self, tmp_path):
        p = tmp_path / "empty.soma"
        save_archive(p, {})
        assert load_archive(p) == {}

    def test_trailing_garbage_rejected(self):
        buf = archive_to_bytes({"x": np.ones(1, np.float32)}) + b"zz"
        with pytest.raises(FileFormatError):
            archive_from_bytes(buf)
