"""Small filtering helpers: Gaussian kernels and replicate-border convolution.

All dense filtering in the package goes through these functions so that window
and border conventions stay consistent between the detector, the orientation
map, and the pyramid.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage


def gaussian_kernel1d(sigma: float, radius: int, normalized: bool = True) -> np.ndarray:
    """Sampled Gaussian on integer taps -radius..radius."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    if normalized:
        k /= k.sum()
    return k


def gaussian_radius(sigma: float, truncate: float = 3.0) -> int:
    """Half-width of a Gaussian window truncated at ``truncate`` sigmas."""
    return max(1, int(math.ceil(truncate * sigma)))


def correlate_separable(arr: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Apply a 1-D kernel along both axes with replicate borders."""
    out = ndimage.correlate1d(arr, kernel, axis=0, mode="nearest")
    return ndimage.correlate1d(out, kernel, axis=1, mode="nearest")


def gaussian_blur(arr: np.ndarray, sigma: float, truncate: float = 3.0) -> np.ndarray:
    """Separable Gaussian smoothing with replicate borders."""
    if sigma <= 0:
        return np.array(arr, dtype=np.float64, copy=True)
    k = gaussian_kernel1d(sigma, gaussian_radius(sigma, truncate))
    return correlate_separable(np.asarray(arr, dtype=np.float64), k)


def disc_gaussian_kernel(radius: float, sigma: float, normalized: bool = True) -> np.ndarray:
    """2-D Gaussian restricted to the disc of the given radius.

    Taps live on integer offsets with dx^2 + dy^2 <= radius^2, so the kernel
    side is 2*floor(radius) + 1.
    """
    if radius < 1:
        raise ValueError(f"window radius must be >= 1, got {radius}")
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    r = int(math.floor(radius))
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    d2 = (dx * dx + dy * dy).astype(np.float64)
    k = np.exp(-d2 / (2.0 * sigma * sigma))
    k[d2 > radius * radius] = 0.0
    if normalized:
        k /= k.sum()
    return k
