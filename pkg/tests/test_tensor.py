import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ctxretrieval.tensor import (FeatureMap, FormatError, Image, Rect,
                                 l2_normalize, read_fmap, write_fmap)


def roundtrip(fmap):
    buf = io.BytesIO()
    write_fmap(fmap, buf)
    buf.seek(0)
    return read_fmap(buf)


class TestFmapFormat:
    def test_smallest_legal_tensor_is_25_bytes(self):
        fmap = FeatureMap(np.full((1, 1, 1), 3.5, dtype=np.float32))
        buf = io.BytesIO()
        write_fmap(fmap, buf)
        raw = buf.getvalue()
        assert len(raw) == 25
        assert raw[:4] == b"FMAP"
        assert raw[4:8] == (1).to_bytes(4, "little")          # version
        assert raw[8:20] == (1).to_bytes(4, "little") * 3      # dims
        assert np.frombuffer(raw[20:24], dtype="<f4")[0] == 3.5
        assert raw[24] == 0

    def test_roundtrip_large_map(self):
        rng = np.random.default_rng(0)
        fmap = FeatureMap(rng.uniform(0, 1, (2048, 13, 23)).astype(np.float32),
                          rectified=True)
        back = roundtrip(fmap)
        assert back == fmap
        assert back.rectified

    def test_nonfinite_rejected_before_write(self):
        with pytest.raises(ValueError):
            FeatureMap(np.array([[[np.nan]]], dtype=np.float32))

    def test_wrong_magic(self):
        with pytest.raises(FormatError, match="magic"):
            read_fmap(io.BytesIO(b"XMAP" + b"\x00" * 32))

    def test_truncated_payload(self):
        fmap = FeatureMap(np.ones((2, 3, 4), dtype=np.float32))
        buf = io.BytesIO()
        write_fmap(fmap, buf)
        # drop the flags byte and one trailing value
        clipped = buf.getvalue()[:-5]
        with pytest.raises(FormatError, match="truncated"):
            read_fmap(io.BytesIO(clipped))

    def test_payload_order_channel_major(self):
        # (k, y, x) slowest-to-fastest: channel slices are contiguous
        data = np.arange(8, dtype=np.float32).reshape(2, 2, 2)
        buf = io.BytesIO()
        write_fmap(FeatureMap(data), buf)
        values = np.frombuffer(buf.getvalue()[20:-1], dtype="<f4")
        assert np.array_equal(values, np.arange(8))

    @given(st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 5),
           st.integers(1, 5), st.booleans())
    def test_roundtrip_property(self, seed, k, h, w, rectified):
        rng = np.random.default_rng(seed)
        data = rng.uniform(0 if rectified else -10, 10, (k, h, w))
        fmap = FeatureMap(data.astype(np.float32), rectified=rectified)
        assert roundtrip(fmap) == fmap


class TestRect:
    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            Rect(2, 2, 2, 5)

    def test_half_open_dims(self):
        r = Rect(1, 2, 4, 6)
        assert (r.width, r.height, r.area) == (3, 4, 12)


class TestImage:
    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            Image(np.full((4, 4, 3), 1.5, dtype=np.float32))

    def test_shape_enforced(self):
        with pytest.raises(ValueError):
            Image(np.zeros((4, 4), dtype=np.float32))


class TestL2Normalize:
    def test_345_triangle(self):
        assert np.allclose(l2_normalize([3.0, 4.0]), [0.6, 0.8])

    def test_zero_passthrough(self):
        assert np.array_equal(l2_normalize([0.0, 0.0]), [0.0, 0.0])

    def test_symmetry(self):
        v = l2_normalize([1.0, 1.0])
        assert np.allclose(v, [0.70710678, 0.70710678])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=16))
    def test_idempotent(self, values):
        once = l2_normalize(values)
        twice = l2_normalize(once)
        assert np.allclose(once, twice, atol=1e-12)

    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=8),
           st.floats(1e-3, 1e3))
    def test_positive_scale_invariant(self, values, c):
        v = np.asarray(values)
        if np.linalg.norm(v) < 1e-6:
            return
        assert np.allclose(l2_normalize(c * v), l2_normalize(v), atol=1e-9)
