"""Harris corner detection with size-coupled local non-maximum suppression.

Cornerness is det(M)/tr(M) of the Gaussian-windowed structure tensor. The
suppression window of the larger image of a pair is scaled by the square root
of the area ratio so keypoint density matches across resolutions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .filters import correlate_separable, gaussian_kernel1d, gaussian_radius
from .pmom import gradients

TRACE_FLOOR = 1e-12


@dataclass(frozen=True)
class Keypoint:
    """Detected corner in full-resolution pixel coordinates."""

    x: float
    y: float
    score: float


@dataclass(frozen=True)
class StructureTensorField:
    """Per-pixel symmetric 2x2 accumulations over the Gaussian window."""

    sxx: np.ndarray
    sxy: np.ndarray
    syy: np.ndarray


def structure_tensor(img, window_sigma: float = 1.5) -> StructureTensorField:
    if window_sigma <= 0:
        raise ValueError(f"window_sigma must be > 0, got {window_sigma}")
    g = gradients(img)
    k = gaussian_kernel1d(window_sigma, gaussian_radius(window_sigma))
    return StructureTensorField(
        sxx=correlate_separable(g.gx * g.gx, k),
        sxy=correlate_separable(g.gx * g.gy, k),
        syy=correlate_separable(g.gy * g.gy, k),
    )


def cornerness_map(img, window_sigma: float = 1.5) -> np.ndarray:
    """det(M)/tr(M) per pixel; flat pixels (tr < 1e-12) map to 0."""
    t = structure_tensor(img, window_sigma)
    det = t.sxx * t.syy - t.sxy * t.sxy
    tr = t.sxx + t.syy
    out = np.zeros_like(det)
    np.divide(det, tr, out=out, where=tr >= TRACE_FLOOR)
    return out


def lnms_ratio(size_ref: tuple[int, int], size_sensed: tuple[int, int]) -> float:
    """Suppression-window scale factor: sqrt of larger area over smaller area.

    Sizes are (width, height). The returned ratio multiplies the suppression
    window of whichever image has the larger area.
    """
    wa, ha = size_ref
    wb, hb = size_sensed
    if min(wa, ha, wb, hb) < 1:
        raise ValueError("image dimensions must be >= 1")
    big = max(wa * ha, wb * hb)
    small = min(wa * ha, wb * hb)
    return math.sqrt(big / small)


def suppression_window(base_window: int, ratio: float) -> int:
    """Smallest odd window side >= base_window * ratio (and >= 3)."""
    w = int(math.ceil(base_window * ratio))
    if w % 2 == 0:
        w += 1
    return max(w, 3)


def detect(
    img,
    max_points: int = 2000,
    base_window: int = 11,
    ratio: float = 1.0,
    border_margin: int = 0,
    window_sigma: float = 1.5,
) -> list[Keypoint]:
    """Strongest cornerness local maxima, spatially spread by suppression.

    Every returned point is the maximum of the cornerness map within the
    centered suppression window, no two returned points are closer than half
    the window side, and at most ``max_points`` are returned, strongest first.
    Points within ``border_margin`` of the border are discarded.
    """
    if max_points < 1:
        raise ValueError(f"max_points must be >= 1, got {max_points}")
    if ratio <= 0:
        raise ValueError(f"ratio must be > 0, got {ratio}")
    score = cornerness_map(img, window_sigma)
    h, w = score.shape
    win = suppression_window(base_window, ratio)
    is_peak = (score == ndimage.maximum_filter(score, size=win, mode="nearest")) & (
        score > 0.0
    )
    ys, xs = np.nonzero(is_peak)
    if border_margin > 0:
        keep = (
            (xs >= border_margin)
            & (xs <= w - 1 - border_margin)
            & (ys >= border_margin)
            & (ys <= h - 1 - border_margin)
        )
        ys, xs = ys[keep], xs[keep]
    if xs.size == 0:
        return []
    vals = score[ys, xs]
    order = np.lexsort((xs, ys, -vals))
    xs, ys, vals = xs[order], ys[order], vals[order]

    # Greedy pass: accept in score order, drop anything within half a window.
    min_dist2 = (0.5 * base_window * ratio) ** 2
    alive = np.ones(xs.size, dtype=bool)
    picked = []
    for i in range(xs.size):
        if not alive[i]:
            continue
        picked.append(i)
        if len(picked) >= max_points:
            break
        d2 = (xs - xs[i]) ** 2 + (ys - ys[i]) ** 2
        alive &= d2 >= min_dist2
        alive[i] = False
    return [
        Keypoint(x=float(xs[i]), y=float(ys[i]), score=float(vals[i])) for i in picked
    ]


def keypoint_array(keypoints: list[Keypoint]) -> np.ndarray:
    """(n, 2) array of x, y coordinates."""
    if not keypoints:
        return np.zeros((0, 2))
    return np.array([[k.x, k.y] for k in keypoints], dtype=np.float64)
