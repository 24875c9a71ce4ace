"""Partial main orientation map (PMOM).

Per-pixel dominant local orientation in (-pi/2, pi/2], computed from squared
gradients averaged over Gaussian windows at several scales. The squared-gradient
pair (gx^2 - gy^2, 2*gx*gy) doubles the gradient angle, so opposite gradient
directions reinforce instead of cancelling; halving the angle of the windowed
sums recovers an orientation that is insensitive to intensity reversal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import fft as spfft

from .filters import disc_gaussian_kernel
from .ingest import GrayImage, write_rawf

HALF_PI = 0.5 * np.pi


@dataclass(frozen=True)
class GradientField:
    """Central-difference derivatives plus polar form."""

    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray
    orientation: np.ndarray


@dataclass(frozen=True)
class OrientationMap:
    """Orientation per pixel, every value finite and in (-pi/2, pi/2]."""

    theta: np.ndarray

    def __post_init__(self):
        t = self.theta
        if t.ndim != 2:
            raise ValueError(f"theta must be 2-D, got shape {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("orientation values must be finite")
        if t.min() <= -HALF_PI or t.max() > HALF_PI:
            raise ValueError("orientation values must lie in (-pi/2, pi/2]")

    @property
    def height(self) -> int:
        return self.theta.shape[0]

    @property
    def width(self) -> int:
        return self.theta.shape[1]


@dataclass(frozen=True)
class ScaleBank:
    """Window scales for orientation fusion: (radius, sigma) pairs, sigma = radius/3."""

    scales: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.scales) == 0:
            raise ValueError("scale bank must not be empty")
        radii = [r for r, _ in self.scales]
        if any(r < 1 for r in radii):
            raise ValueError(f"window radii must be >= 1, got {radii}")
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError(f"radii must be strictly increasing, got {radii}")
        for r, s in self.scales:
            if abs(s - r / 3.0) > 1e-9 * max(1.0, r):
                raise ValueError(f"sigma must equal radius/3, got ({r}, {s})")

    @classmethod
    def evenly_spaced(cls, r_min: float, r_max: float, count: int) -> "ScaleBank":
        """Radii evenly spaced in [r_min, r_max], sigma = radius/3 each."""
        if count < 1:
            raise ValueError("count must be >= 1")
        if count == 1:
            radii = [float(r_max)]
        else:
            radii = list(np.linspace(float(r_min), float(r_max), count))
        return cls(scales=tuple((r, r / 3.0) for r in radii))

    @property
    def max_radius(self) -> float:
        return self.scales[-1][0]


def _samples(img) -> np.ndarray:
    a = img.samples if isinstance(img, GrayImage) else np.asarray(img)
    return np.asarray(a, dtype=np.float64)


def gradients(img) -> GradientField:
    """Central-difference gradients with replicate borders (image must be >= 3x3)."""
    a = _samples(img)
    if a.shape[0] < 3 or a.shape[1] < 3:
        raise ValueError(f"image too small for gradients: {a.shape}")
    p = np.pad(a, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return GradientField(
        gx=gx, gy=gy, magnitude=np.hypot(gx, gy), orientation=np.arctan2(gy, gx)
    )


def angle2(x, y):
    """Quadrant-aware angle of (x, y) in (-pi, pi]; (0, 0) maps to 0 by convention.

    Matches arctan(y/x) on the right half-plane, shifted by +pi (y >= 0) or
    -pi (y < 0) on the left half-plane. Negative zero in y is treated as +0 so
    the result never leaves the half-open range.
    """
    yc = np.where(np.asarray(y) == 0.0, 0.0, y)
    out = np.arctan2(yc, x)
    if np.isscalar(x) or (hasattr(out, "ndim") and out.ndim == 0):
        return float(out)
    return out


def _halved_orientation(wx: np.ndarray, wy: np.ndarray) -> np.ndarray:
    theta = 0.5 * angle2(wx, wy)
    # angle2 == pi maps to +pi/2; nothing can exceed it, only hit -pi/2 exactly.
    return np.where(theta <= -HALF_PI, theta + np.pi, theta)


@lru_cache(maxsize=64)
def _bank_kernel_fft(scales: tuple, fft_shape: tuple, normalized: bool):
    """rfft2 of the summed disc-Gaussian kernel, wrapped for circular convolution."""
    rmax = int(math.floor(max(r for r, _ in scales)))
    k = np.zeros((2 * rmax + 1, 2 * rmax + 1))
    for radius, sigma in scales:
        r = int(math.floor(radius))
        w = disc_gaussian_kernel(radius, sigma, normalized=normalized)
        k[rmax - r : rmax + r + 1, rmax - r : rmax + r + 1] += w
    fh, fw = fft_shape
    wrapped = np.zeros((fh, fw))
    idx = np.arange(-rmax, rmax + 1)
    wrapped[np.ix_(idx % fh, idx % fw)] = k
    out = spfft.rfft2(wrapped)
    out.flags.writeable = False
    return out


def _window_sums(fields: list[np.ndarray], scales: tuple, normalized: bool):
    """Gaussian-window sums of each field, accumulated over all scales.

    Summing per-scale windowed sums commutes with summing the kernels, so a
    single FFT convolution with the summed kernel gives the fused result.
    Borders are replicate-padded.
    """
    rmax = int(math.floor(max(r for r, _ in scales)))
    h, w = fields[0].shape
    ph, pw = h + 2 * rmax, w + 2 * rmax
    fh = spfft.next_fast_len(ph, real=True)
    fw = spfft.next_fast_len(pw, real=True)
    kf = _bank_kernel_fft(tuple(scales), (fh, fw), normalized)
    outs = []
    for f in fields:
        x = np.zeros((fh, fw))
        x[:ph, :pw] = np.pad(f, rmax, mode="edge")
        y = spfft.irfft2(spfft.rfft2(x) * kf, s=(fh, fw))
        outs.append(y[rmax : rmax + h, rmax : rmax + w])
    return outs


def asg_orientation(
    grad: GradientField,
    window: tuple[float, float],
    normalize_weights: bool = True,
) -> OrientationMap:
    """Averaged-squared-gradient orientation for a single (radius, sigma) window."""
    radius, sigma = window
    if radius < 1:
        raise ValueError(f"window radius must be >= 1, got {radius}")
    wx, wy = _window_sums(
        [grad.gx * grad.gx - grad.gy * grad.gy, 2.0 * grad.gx * grad.gy],
        ((float(radius), float(sigma)),),
        normalize_weights,
    )
    return OrientationMap(theta=_halved_orientation(wx, wy))


def pmom(img, bank: ScaleBank, normalize_weights: bool = True) -> OrientationMap:
    """Multi-scale fused orientation map.

    The two weighted-response fields are summed across all scales of the bank
    before the single angle-halving step (not an average of per-scale angles).
    """
    g = gradients(img)
    wx, wy = _window_sums(
        [g.gx * g.gx - g.gy * g.gy, 2.0 * g.gx * g.gy],
        tuple(bank.scales),
        normalize_weights,
    )
    return OrientationMap(theta=_halved_orientation(wx, wy))


def export_orientation_rawf(path: str | Path, om: OrientationMap) -> None:
    """Dump an orientation map as a single-band RAWF file for inspection."""
    write_rawf(path, om.theta)
