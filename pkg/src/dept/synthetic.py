"""Synthetic lesion-like images with known masks, for tests and demos."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Sample:
    image: np.ndarray
    mask: np.ndarray


def disk_mask(size: int = 256, radius: float = 60.0, center: tuple[float, float] | None = None) -> np.ndarray:
    cy, cx = center if center is not None else ((size - 1) / 2.0, (size - 1) / 2.0)
    yy, xx = np.mgrid[:size, :size]
    return (((yy - cy) ** 2 + (xx - cx) ** 2) <= radius**2).astype(np.uint8)


def render(mask: np.ndarray, inside: float, outside: float, noise: float = 0.0, rng=None) -> np.ndarray:
    img = np.where(mask > 0, inside, outside).astype(np.float64)
    if noise > 0:
        rng = np.random.default_rng(rng)
        img = img + rng.normal(0.0, noise, img.shape)
    return np.clip(img, 0.0, 1.0)


def disk_sample(size=256, radius=60.0, inside=0.8, outside=0.2, noise=0.02, center=None, rng=None) -> Sample:
    mask = disk_mask(size, radius, center)
    return Sample(render(mask, inside, outside, noise, rng), mask)


def star_blob_mask(size: int, rng, r_range=(0.16, 0.27), harmonics=(2, 3, 4), amp=0.12) -> np.ndarray:
    """Random smooth star-convex shape: radius is a low-order Fourier series in angle."""
    r0 = rng.uniform(*r_range) * size
    cy = size / 2.0 + rng.uniform(-0.08, 0.08) * size
    cx = size / 2.0 + rng.uniform(-0.08, 0.08) * size
    coeffs = [(k, rng.uniform(0.0, amp), rng.uniform(0.0, 2 * np.pi)) for k in harmonics]
    yy, xx = np.mgrid[:size, :size]
    theta = np.arctan2(yy - cy, xx - cx)
    rad = r0 * (1.0 + sum(a * np.cos(k * theta + ph) for k, a, ph in coeffs))
    return (np.hypot(yy - cy, xx - cx) <= rad).astype(np.uint8)


def blob_corpus(n: int = 30, size: int = 256, seed: int = 0, inside=0.62, outside=0.38, noise=0.03) -> list[Sample]:
    """Star-convex blobs at moderate contrast with additive Gaussian noise."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        mask = star_blob_mask(size, rng)
        out.append(Sample(render(mask, inside, outside, noise, rng), mask))
    return out


def disk_corpus(n: int = 3, size: int = 256, seed: int = 0, noise: float = 0.02) -> list[Sample]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        radius = rng.uniform(0.18, 0.26) * size
        center = (size / 2.0 + rng.uniform(-0.06, 0.06) * size, size / 2.0 + rng.uniform(-0.06, 0.06) * size)
        out.append(disk_sample(size, radius, 0.8, 0.2, noise, center, rng))
    return out
