"""Procedural corner-rich test image bundled with the package.

The bundled PNG is generated once by ``generate_landscape`` (see
scripts/make_test_image.py) and committed, so tests do not depend on RNG
stream stability across numpy versions.
"""
from __future__ import annotations

from importlib import resources

import numpy as np

from .filters import gaussian_blur
from .ingest import GrayImage, load_gray

BUNDLED_NAME = "data/landscape_512.png"


def generate_landscape(size: int = 512, seed: int = 7) -> GrayImage:
    """Synthetic aerial-style scene: smooth terrain, blocks, roads, texture."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    # Terrain: sum of band-limited noise octaves.
    img = np.zeros((size, size))
    for sigma, amp in ((64, 0.5), (24, 0.3), (8, 0.2)):
        img += amp * gaussian_blur(rng.standard_normal((size, size)), sigma)

    # Rectangular "structures" with random intensity steps and orientation.
    for _ in range(220):
        cx, cy = rng.uniform(10, size - 10, 2)
        w, h = rng.uniform(6, 40, 2)
        ang = rng.uniform(0, np.pi)
        c, s = np.cos(ang), np.sin(ang)
        u = (xx - cx) * c + (yy - cy) * s
        v = -(xx - cx) * s + (yy - cy) * c
        mask = (np.abs(u) < w / 2) & (np.abs(v) < h / 2)
        img[mask] += rng.uniform(-0.9, 0.9)

    # Thin "roads": long rotated strips.
    for _ in range(25):
        cx, cy = rng.uniform(0, size, 2)
        ang = rng.uniform(0, np.pi)
        c, s = np.cos(ang), np.sin(ang)
        v = -(xx - cx) * s + (yy - cy) * c
        img[np.abs(v) < rng.uniform(1.5, 3.5)] += rng.uniform(-0.7, 0.7)

    # Scattered round "vegetation" blobs.
    for _ in range(120):
        cx, cy = rng.uniform(0, size, 2)
        r = rng.uniform(3, 12)
        mask = (xx - cx) ** 2 + (yy - cy) ** 2 < r * r
        img[mask] += rng.uniform(-0.5, 0.5)

    # Dense fine detail: blurred impulses give isotropic blobs everywhere,
    # which is what keeps the corner field dense.
    impulses = np.where(
        rng.random((size, size)) < 0.035, rng.uniform(-8, 8, (size, size)), 0.0
    )
    img += gaussian_blur(impulses, 0.8)

    img = gaussian_blur(img, 0.5) + 0.02 * rng.standard_normal((size, size))
    lo, hi = img.min(), img.max()
    return GrayImage(samples=(img - lo) / (hi - lo))


def bundled_image() -> GrayImage:
    """Load the committed 512x512 test scene."""
    path = resources.files(__package__) / BUNDLED_NAME
    with resources.as_file(path) as p:
        return load_gray(p)
