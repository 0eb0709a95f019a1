"""Raster value types, file I/O, bilinear resampling and thresholding.

Images are 2-D ``float64`` arrays with values in [0, 1]; feature maps are
2-D float arrays with arbitrary finite values; masks are 2-D ``uint8``
arrays holding only 0 and 1. Indexing is ``(row, col)`` with the origin in
the top-left corner.
"""
from __future__ import annotations

import io
import os
import struct
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np
from PIL import Image

from .atomic import atomic_write_bytes

PathLike = Union[str, os.PathLike]

F32_MAGIC = b"DEPTF32\x00"
_F32_HEADER = struct.Struct("<8sII")


class RasterError(ValueError):
    """Raised for malformed raster data or files."""


class Point(NamedTuple):
    row: int
    col: int


def in_bounds(p: tuple[int, int], shape: tuple[int, int]) -> bool:
    return 0 <= p[0] < shape[0] and 0 <= p[1] < shape[1]


# ---------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------
def as_gray_image(data) -> np.ndarray:
    """Validate *data* as a gray image and return it as float64."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise RasterError(f"image must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise RasterError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise RasterError("image values must lie in [0, 1]")
    return arr


def as_feature_map(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise RasterError(
            f"feature map must be a single-channel 2-D array, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise RasterError("feature map contains non-finite values")
    return arr


def as_mask(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.ndim != 2 or arr.size == 0:
        raise RasterError(f"mask must be a non-empty 2-D array, got shape {arr.shape}")
    if arr.dtype == np.bool_:
        return arr.astype(np.uint8)
    if not np.all((arr == 0) | (arr == 1)):
        raise RasterError("non-binary mask: values must be exactly 0 or 1")
    return arr.astype(np.uint8)


# ---------------------------------------------------------------------
# 8-bit PNG / PGM
# ---------------------------------------------------------------------
def _read_u8(path: PathLike) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "1":
                im = im.convert("L")
            elif mode != "L":
                raise RasterError(
                    f"{path}: unsupported bit depth or channel layout (mode {mode!r}); "
                    "expected 8-bit grayscale"
                )
            return np.array(im, dtype=np.uint8)
    except RasterError:
        raise
    except (OSError, SyntaxError) as exc:
        raise RasterError(f"{path}: unreadable raster ({exc})") from exc


def read_raster(path: PathLike, kind: str = "image") -> np.ndarray:
    """Read an 8-bit grayscale PNG or binary PGM (P5).

    ``kind="image"`` maps bytes to [0, 1] by ``v / 255``. ``kind="mask"``
    additionally requires every byte to be 0 or 255 and returns a 0/1 mask.
    """
    raw = _read_u8(path)
    if kind == "image":
        return raw.astype(np.float64) / 255.0
    if kind == "mask":
        if not np.all((raw == 0) | (raw == 255)):
            raise RasterError(f"{path}: non-binary mask (values other than 0 and 255)")
        return (raw == 255).astype(np.uint8)
    raise ValueError(f"unknown raster kind {kind!r}")


def encode_u8(arr: np.ndarray, path: PathLike) -> bytes:
    """Encode a uint8 array as PNG or PGM bytes, chosen by the file suffix."""
    suffix = Path(path).suffix.lower()
    fmt = {".png": "PNG", ".pgm": "PPM"}.get(suffix)
    if fmt is None:
        raise RasterError(f"{path}: unsupported output format {suffix!r} (use .png or .pgm)")
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(arr, dtype=np.uint8), mode="L").save(buf, format=fmt)
    return buf.getvalue()


def image_to_u8(img) -> np.ndarray:
    img = as_gray_image(img)
    return np.floor(img * 255.0 + 0.5).astype(np.uint8)


def write_image(img, path: PathLike) -> None:
    atomic_write_bytes(Path(path), encode_u8(image_to_u8(img), path))


def write_mask(mask, path: PathLike) -> None:
    """Write a 0/1 mask as {0, 255} PNG/PGM."""
    m = as_mask(mask)
    atomic_write_bytes(Path(path), encode_u8(m * np.uint8(255), path))


def write_rgb_png(rgb: np.ndarray, path: PathLike) -> None:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    atomic_write_bytes(Path(path), buf.getvalue())


# ---------------------------------------------------------------------
# F32 raster interchange (.f32r)
# ---------------------------------------------------------------------
def encode_f32_raster(raster) -> bytes:
    arr = np.asarray(raster)
    if arr.ndim != 2 or arr.size == 0:
        raise RasterError(f"raster must be a non-empty 2-D array, got shape {arr.shape}")
    payload = np.ascontiguousarray(arr, dtype="<f4")
    if not np.all(np.isfinite(payload)):
        raise RasterError("raster contains non-finite values")
    height, width = payload.shape
    return _F32_HEADER.pack(F32_MAGIC, width, height) + payload.tobytes()


def decode_f32_raster(buf: bytes, name: str = "<bytes>") -> np.ndarray:
    if len(buf) < _F32_HEADER.size:
        raise RasterError(f"{name}: short file ({len(buf)} bytes)")
    magic, width, height = _F32_HEADER.unpack_from(buf)
    if magic != F32_MAGIC:
        raise RasterError(f"{name}: bad magic {magic!r}")
    if width == 0 or height == 0:
        raise RasterError(f"{name}: zero-size raster")
    expected = width * height * 4
    got = len(buf) - _F32_HEADER.size
    if got != expected:
        raise RasterError(
            f"{name}: size mismatch (header {width}x{height} needs {expected} bytes, "
            f"payload has {got})"
        )
    data = np.frombuffer(buf, dtype="<f4", offset=_F32_HEADER.size)
    return data.reshape(height, width).astype(np.float32)


def write_f32_raster(raster, path: PathLike) -> None:
    atomic_write_bytes(Path(path), encode_f32_raster(raster))


def read_f32_raster(path: PathLike) -> np.ndarray:
    """Read a ``.f32r`` file as a float32 feature map (bit-exact)."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise RasterError(f"{path}: unreadable raster ({exc})") from exc
    arr = decode_f32_raster(buf, str(path))
    if not np.all(np.isfinite(arr)):
        raise RasterError(f"{path}: non-finite values in feature map")
    return arr


# ---------------------------------------------------------------------
# Resampling and thresholding
# ---------------------------------------------------------------------
def _axis_weights(n_in: int, n_out: int):
    """Source indices and fractions for pixel-center aligned sampling."""
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    i0 = np.floor(pos).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, pos - i0


def _lerp(a: np.ndarray, b: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = a + (b - a) * t
    # keep the result inside [min(a, b), max(a, b)] despite rounding
    return np.clip(out, np.minimum(a, b), np.maximum(a, b))


def resize_bilinear(raster, out_width: int, out_height: int) -> np.ndarray:
    """Bilinear resize with pixel-center alignment and border clamping.

    Output sample ``(r, c)`` reads the input at
    ``((r + 0.5) * h_in / h_out - 0.5, (c + 0.5) * w_in / w_out - 0.5)``.
    """
    if out_width <= 0 or out_height <= 0:
        raise RasterError(f"zero-size output {out_width}x{out_height}")
    arr = np.asarray(raster, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise RasterError(f"raster must be a non-empty 2-D array, got shape {arr.shape}")
    h_in, w_in = arr.shape
    if (h_in, w_in) == (out_height, out_width):
        return arr.copy()

    r0, r1, fr = _axis_weights(h_in, out_height)
    c0, c1, fc = _axis_weights(w_in, out_width)
    rows = _lerp(arr[r0, :], arr[r1, :], fr[:, None])
    return _lerp(rows[:, c0], rows[:, c1], fc[None, :])


def threshold_mask(raster, t: float = 0.5) -> np.ndarray:
    """1 where ``value >= t`` else 0."""
    arr = np.asarray(raster)
    return (arr >= t).astype(np.uint8)
