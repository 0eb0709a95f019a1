import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from dept.raster import (
    RasterError,
    as_mask,
    read_f32_raster,
    read_raster,
    resize_bilinear,
    threshold_mask,
    write_f32_raster,
    write_image,
    write_mask,
)


def _pgm(path, w, h, payload):
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + bytes(payload))
    return path


# ---------------------------------------------------------------------
# 8-bit readers
# ---------------------------------------------------------------------
def test_pgm_read_as_image(tmp_path):
    p = _pgm(tmp_path / "a.pgm", 2, 2, [0, 255, 255, 0])
    np.testing.assert_array_equal(read_raster(p), [[0.0, 1.0], [1.0, 0.0]])


def test_pgm_read_as_mask(tmp_path):
    p = _pgm(tmp_path / "a.pgm", 2, 2, [0, 255, 255, 0])
    m = read_raster(p, "mask")
    assert m.dtype == np.uint8
    np.testing.assert_array_equal(m, [[0, 1], [1, 0]])


def test_non_binary_mask_rejected(tmp_path):
    p = _pgm(tmp_path / "a.pgm", 2, 1, [0, 128])
    assert read_raster(p)[0, 1] == pytest.approx(128 / 255)
    with pytest.raises(RasterError, match="non-binary mask"):
        read_raster(p, "mask")


def test_sixteen_bit_png_rejected(tmp_path):
    p = tmp_path / "deep.png"
    Image.fromarray(np.array([[0, 60000]], dtype=np.uint16)).save(p)
    with pytest.raises(RasterError, match="unsupported"):
        read_raster(p)


def test_rgb_png_rejected(tmp_path):
    p = tmp_path / "rgb.png"
    Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8)).save(p)
    with pytest.raises(RasterError):
        read_raster(p)


def test_unreadable_file(tmp_path):
    p = tmp_path / "junk.png"
    p.write_bytes(b"not an image")
    with pytest.raises(RasterError, match="unreadable"):
        read_raster(p)
    with pytest.raises(RasterError):
        read_raster(tmp_path / "missing.png")


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_mask_write_read_roundtrip(tmp_path, suffix):
    rng = np.random.default_rng(3)
    m = (rng.random((9, 7)) > 0.5).astype(np.uint8)
    p = tmp_path / f"m{suffix}"
    write_mask(m, p)
    raw = np.array(Image.open(p))
    assert set(np.unique(raw)) <= {0, 255}
    np.testing.assert_array_equal(read_raster(p, "mask"), m)


def test_image_write_read_roundtrip_on_byte_grid(tmp_path):
    img = np.arange(256, dtype=np.float64).reshape(16, 16) / 255.0
    write_image(img, tmp_path / "g.png")
    np.testing.assert_array_equal(read_raster(tmp_path / "g.png"), img)


def test_as_mask_validation():
    with pytest.raises(RasterError):
        as_mask([[0, 2]])
    np.testing.assert_array_equal(as_mask(np.array([[True, False]])), [[1, 0]])


# ---------------------------------------------------------------------
# f32 interchange
# ---------------------------------------------------------------------
def test_f32_exact_bytes(tmp_path):
    p = tmp_path / "one.f32r"
    write_f32_raster(np.array([[0.5]]), p)
    assert p.read_bytes() == b"DEPTF32\x00" + struct.pack("<II", 1, 1) + struct.pack("<f", 0.5)
    np.testing.assert_array_equal(read_f32_raster(p), [[0.5]])


def test_f32_header_is_width_then_height(tmp_path):
    p = tmp_path / "r.f32r"
    write_f32_raster(np.zeros((3, 7)), p)
    assert struct.unpack_from("<II", p.read_bytes(), 8) == (7, 3)


def test_f32_roundtrip_random(tmp_path):
    x = np.random.default_rng(0).normal(size=(3, 7)).astype(np.float32)
    p = tmp_path / "r.f32r"
    write_f32_raster(x, p)
    y = read_f32_raster(p)
    assert y.shape == (3, 7)
    assert y.tobytes() == x.tobytes()


def test_f32_truncated(tmp_path):
    p = tmp_path / "r.f32r"
    write_f32_raster(np.ones((4, 4)), p)
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(RasterError, match="size mismatch"):
        read_f32_raster(p)


def test_f32_bad_magic_and_short(tmp_path):
    p = tmp_path / "r.f32r"
    p.write_bytes(b"XXXXXXXX" + struct.pack("<II", 1, 1) + struct.pack("<f", 1.0))
    with pytest.raises(RasterError, match="bad magic"):
        read_f32_raster(p)
    p.write_bytes(b"DEPT")
    with pytest.raises(RasterError, match="short file"):
        read_f32_raster(p)


def test_f32_rejects_non_finite(tmp_path):
    with pytest.raises(RasterError):
        write_f32_raster(np.array([[np.nan]]), tmp_path / "x.f32r")


@settings(max_examples=60, deadline=None)
@given(
    arrays(
        np.float32,
        st.tuples(st.integers(1, 9), st.integers(1, 9)),
        elements=st.floats(width=32, allow_nan=False, allow_infinity=False),
    )
)
def test_f32_roundtrip_property(tmp_path_factory, x):
    p = tmp_path_factory.mktemp("f32") / "x.f32r"
    write_f32_raster(x, p)
    assert read_f32_raster(p).tobytes() == np.ascontiguousarray(x, dtype="<f4").tobytes()


# ---------------------------------------------------------------------
# Resampling / thresholding
# ---------------------------------------------------------------------
def test_resize_constant():
    out = resize_bilinear(np.full((5, 3), 0.7), 11, 4)
    assert out.shape == (4, 11)
    assert np.all(out == 0.7)


def test_resize_identity():
    x = np.random.default_rng(1).random((6, 5))
    np.testing.assert_array_equal(resize_bilinear(x, 5, 6), x)


def test_resize_one_by_two_to_one_by_four():
    # centres at 0.5/4*2-0.5 ... -> input x = -0.25, 0.25, 0.75, 1.25 (clamped)
    out = resize_bilinear(np.array([[0.0, 1.0]]), 4, 1)
    np.testing.assert_allclose(out, [[0.0, 0.25, 0.75, 1.0]], atol=1e-15)


def test_resize_downsample_by_half_averages_pairs():
    x = np.arange(8, dtype=float)[None, :]
    np.testing.assert_allclose(resize_bilinear(x, 4, 1), [[0.5, 2.5, 4.5, 6.5]])


def test_resize_zero_size():
    with pytest.raises(RasterError):
        resize_bilinear(np.ones((2, 2)), 0, 3)


@settings(max_examples=80, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=st.floats(-5, 5)),
    st.integers(1, 12),
    st.integers(1, 12),
)
def test_resize_is_convex(x, ow, oh):
    out = resize_bilinear(x, ow, oh)
    assert out.shape == (oh, ow)
    assert out.min() >= x.min()
    assert out.max() <= x.max()


def test_threshold_examples():
    np.testing.assert_array_equal(threshold_mask(np.array([0.2, 0.5, 0.9]), 0.5), [0, 1, 1])
    assert not threshold_mask(np.full((3, 3), 0.1), 0.5).any()
    assert threshold_mask(np.random.default_rng(0).random((4, 4)), 0.0).all()


@given(arrays(np.float64, (4, 5), elements=st.floats(-10, 10)), st.floats(-10, 10))
def test_threshold_binary(x, t):
    m = threshold_mask(x, t)
    assert set(np.unique(m)) <= {0, 1}
    np.testing.assert_array_equal(m == 1, x >= t)
