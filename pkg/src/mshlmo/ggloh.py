"""Equal-area ring/sector descriptor over an orientation map.

The local disc around a keypoint is split into a central disc plus two rings
of N_A equal-area sectors each. Orientation values, re-referenced to the
keypoint's main orientation, are hard-quantized into N_O bins per region. The
two sector half-sets are packed as sums and absolute differences so that a
half-turn jump of the reference orientation leaves the descriptor unchanged.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .pmom import HALF_PI, OrientationMap

_CHUNK = 256  # keypoints per vectorized batch; bounds temp-array memory


@dataclass(frozen=True)
class GglohGeometry:
    """Partition parameters; radii satisfy N_A*r0^2 = r1^2-r0^2 = r2^2-r1^2."""

    n_sectors: int
    n_bins: int
    r0: float
    r1: float
    r2: float

    def __post_init__(self):
        if self.n_sectors < 2 or self.n_sectors % 2 != 0:
            raise ValueError(f"n_sectors must be even and >= 2, got {self.n_sectors}")
        if self.n_bins < 2:
            raise ValueError(f"n_bins must be >= 2, got {self.n_bins}")
        if not 0 < self.r0 < self.r1 < self.r2:
            raise ValueError(f"radii must be ordered 0 < r0 < r1 < r2, got {self}")
        area = self.n_sectors * self.r0**2
        for ring in (self.r1**2 - self.r0**2, self.r2**2 - self.r1**2):
            if abs(ring - area) > 1e-9 * area:
                raise ValueError(f"radii violate the equal-area relation: {self}")

    @property
    def n_regions(self) -> int:
        return 2 * self.n_sectors + 1

    @property
    def descriptor_length(self) -> int:
        return self.n_regions * self.n_bins

    @property
    def patch_size(self) -> float:
        return 2.0 * self.r2

    @property
    def border_margin(self) -> int:
        return int(math.ceil(self.r2))


def geometry(n_sectors: int = 12, r2: float = 48.0, n_bins: int = 12) -> GglohGeometry:
    """Solve the equal-area relation for r0 and r1 given the outer radius."""
    if n_sectors < 2 or n_sectors % 2 != 0:
        raise ValueError(f"n_sectors must be even and >= 2, got {n_sectors}")
    if r2 <= 0:
        raise ValueError(f"r2 must be > 0, got {r2}")
    r0 = r2 / math.sqrt(2 * n_sectors + 1)
    r1 = r0 * math.sqrt(n_sectors + 1)
    return GglohGeometry(n_sectors=n_sectors, n_bins=n_bins, r0=r0, r1=r1, r2=r2)


@dataclass(frozen=True)
class Descriptor:
    """Unit-normalized feature vector with scale provenance."""

    values: np.ndarray
    octave: int = 0
    layer: int = 0
    keypoint_id: int = -1

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)


@lru_cache(maxsize=16)
def _patch_offsets(geom: GglohGeometry):
    """Integer offsets of the descriptor disc plus per-offset ring id and angle."""
    r = int(math.floor(geom.r2))
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    dx, dy = dx.ravel(), dy.ravel()
    d2 = (dx * dx + dy * dy).astype(np.float64)
    inside = d2 <= geom.r2**2
    dx, dy, d2 = dx[inside], dy[inside], d2[inside]
    ring = np.where(d2 <= geom.r0**2, 0, np.where(d2 <= geom.r1**2, 1, 2))
    phi = np.arctan2(dy.astype(np.float64), dx.astype(np.float64))
    for arr in (dx, dy, ring, phi):
        arr.flags.writeable = False
    return dx, dy, ring, phi


def assign_region(dx: float, dy: float, theta0: float, geom: GglohGeometry) -> int:
    """Region index in {0..2*N_A} for an offset from the keypoint.

    Region 0 is the central disc; each ring is split into N_A sectors of width
    2*pi/N_A, the first sector starting at theta0 and counted counterclockwise.
    """
    d2 = dx * dx + dy * dy
    if d2 > geom.r2**2:
        raise ValueError(f"offset ({dx}, {dy}) lies outside the descriptor disc")
    if d2 <= geom.r0**2:
        return 0
    ring_start = 1 if d2 <= geom.r1**2 else 1 + geom.n_sectors
    width = 2.0 * np.pi / geom.n_sectors
    sector = int(math.floor((math.atan2(dy, dx) - theta0) / width)) % geom.n_sectors
    return ring_start + sector


def _histograms(pm, xs, ys, theta0, geom: GglohGeometry) -> np.ndarray:
    """Raw per-region orientation histograms, shape (k, 2*N_A+1, N_O)."""
    theta = pm.theta if isinstance(pm, OrientationMap) else np.asarray(pm)
    dx, dy, ring, phi = _patch_offsets(geom)
    na, no = geom.n_sectors, geom.n_bins
    sector_w = 2.0 * np.pi / na
    bin_w = np.pi / no
    ring_start = np.where(ring == 0, 0, np.where(ring == 1, 1, 1 + na))
    k = xs.size
    out = np.zeros((k, geom.n_regions, no), dtype=np.float64)
    for lo in range(0, k, _CHUNK):
        hi = min(lo + _CHUNK, k)
        t0 = theta0[lo:hi, None]
        vals = theta[ys[lo:hi, None] + dy[None, :], xs[lo:hi, None] + dx[None, :]]
        # Shifting by pi moves both quotients by an exact bin/sector count, so
        # the modulo makes wrap-around flips land in the same cells.
        bins = np.floor((vals - t0 + HALF_PI) / bin_w).astype(np.int64) % no
        sect = np.floor((phi[None, :] - t0) / sector_w).astype(np.int64) % na
        region = ring_start[None, :] + np.where(ring[None, :] == 0, 0, sect)
        flat = (region * no + bins) + (
            np.arange(hi - lo, dtype=np.int64)[:, None] * (geom.n_regions * no)
        )
        counts = np.bincount(flat.ravel(), minlength=(hi - lo) * geom.n_regions * no)
        out[lo:hi] = counts.reshape(hi - lo, geom.n_regions, no)
    return out


def _pack(hist: np.ndarray, geom: GglohGeometry, flip_weight: float) -> np.ndarray:
    """[center ; D1+D2 ; c*|D1-D2|] per row, L2-normalized."""
    na = geom.n_sectors
    half = na // 2
    ring1, ring2 = hist[:, 1 : 1 + na], hist[:, 1 + na : 1 + 2 * na]
    d1 = np.concatenate([ring1[:, :half], ring2[:, :half]], axis=1)
    d2 = np.concatenate([ring1[:, half:], ring2[:, half:]], axis=1)
    packed = np.concatenate(
        [hist[:, :1], d1 + d2, flip_weight * np.abs(d1 - d2)], axis=1
    ).reshape(hist.shape[0], -1)
    norms = np.linalg.norm(packed, axis=1, keepdims=True)
    return np.divide(packed, norms, out=np.zeros_like(packed), where=norms > 0)


def describe_batch(
    pm,
    xs: np.ndarray,
    ys: np.ndarray,
    geom: GglohGeometry,
    rotation_invariant: bool = True,
    theta0: np.ndarray | None = None,
    flip_weight: float = 1.0,
) -> np.ndarray:
    """Descriptors for rounded keypoint positions, shape (k, descriptor_length).

    Positions must already satisfy the border margin. ``theta0`` overrides the
    reference orientation; otherwise it is the map value at each keypoint (or 0
    when rotation invariance is disabled).
    """
    theta = pm.theta if isinstance(pm, OrientationMap) else np.asarray(pm)
    xs = np.rint(np.asarray(xs, dtype=np.float64)).astype(np.int64)
    ys = np.rint(np.asarray(ys, dtype=np.float64)).astype(np.int64)
    if theta0 is None:
        if rotation_invariant:
            theta0 = theta[ys, xs]
        else:
            theta0 = np.zeros(xs.size, dtype=np.float64)
    else:
        theta0 = np.asarray(theta0, dtype=np.float64)
    hist = _histograms(pm, xs, ys, theta0, geom)
    return _pack(hist, geom, flip_weight)


def describe(
    pm,
    kp_x: float,
    kp_y: float,
    geom: GglohGeometry,
    rotation_invariant: bool = True,
    theta0: float | None = None,
    flip_weight: float = 1.0,
    octave: int = 0,
    layer: int = 0,
    keypoint_id: int = -1,
) -> Descriptor:
    """Descriptor for one keypoint; raises if the patch leaves the image."""
    theta = pm.theta if isinstance(pm, OrientationMap) else np.asarray(pm)
    h, w = theta.shape
    px, py = int(round(kp_x)), int(round(kp_y))
    m = geom.border_margin
    if not (m <= px <= w - 1 - m and m <= py <= h - 1 - m):
        raise ValueError(
            f"keypoint ({kp_x}, {kp_y}) is within {geom.r2} px of the border"
        )
    t0 = None if theta0 is None else np.array([theta0], dtype=np.float64)
    values = describe_batch(
        pm,
        np.array([px]),
        np.array([py]),
        geom,
        rotation_invariant=rotation_invariant,
        theta0=t0,
        flip_weight=flip_weight,
    )[0]
    return Descriptor(
        values=values, octave=octave, layer=layer, keypoint_id=keypoint_id
    )


# --- serialization: flat binary table and JSON debug dump


def write_descriptors(path: str | Path, values: np.ndarray) -> None:
    """Binary table: uint32 count, uint32 dim, then float32 row-major body."""
    a = np.asarray(values, dtype=np.float32)
    if a.ndim != 2:
        raise ValueError(f"expected a (count, dim) array, got shape {a.shape}")
    header = struct.pack("<II", a.shape[0], a.shape[1])
    Path(path).write_bytes(header + a.tobytes())


def read_descriptors(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise ValueError(f"{path}: descriptor table too short")
    count, dim = struct.unpack("<II", data[:8])
    body = np.frombuffer(data[8:], dtype="<f4")
    if body.size != count * dim:
        raise ValueError(f"{path}: descriptor table body size mismatch")
    return body.reshape(count, dim).astype(np.float64)


def descriptors_to_json(values: np.ndarray, keypoint_ids=None) -> str:
    rows = []
    for i, row in enumerate(np.asarray(values)):
        entry = {"values": [float(v) for v in row]}
        if keypoint_ids is not None:
            entry["keypoint_id"] = int(keypoint_ids[i])
        rows.append(entry)
    return json.dumps({"count": len(rows), "descriptors": rows})
