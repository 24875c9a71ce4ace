"""Planar affine transforms and least-squares estimation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularTransformError

DET_FLOOR = 1e-9


@dataclass(frozen=True)
class AffineModel:
    """Six-parameter planar transform mapping sensed (x, y) to reference frame."""

    a11: float
    a12: float
    a21: float
    a22: float
    tx: float
    ty: float

    def __post_init__(self):
        if abs(self.det) < DET_FLOOR:
            raise SingularTransformError(f"degenerate affine model: {self}")

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    @property
    def matrix(self) -> np.ndarray:
        """2x3 row-major [[a11, a12, tx], [a21, a22, ty]]."""
        return np.array(
            [[self.a11, self.a12, self.tx], [self.a21, self.a22, self.ty]]
        )

    def apply(self, pts: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        out = p @ np.array([[self.a11, self.a21], [self.a12, self.a22]])
        out[:, 0] += self.tx
        out[:, 1] += self.ty
        return out

    def inverse(self) -> "AffineModel":
        d = self.det
        b11, b12 = self.a22 / d, -self.a12 / d
        b21, b22 = -self.a21 / d, self.a11 / d
        return AffineModel(
            a11=b11,
            a12=b12,
            a21=b21,
            a22=b22,
            tx=-(b11 * self.tx + b12 * self.ty),
            ty=-(b21 * self.tx + b22 * self.ty),
        )

    def compose(self, inner: "AffineModel") -> "AffineModel":
        """Model applying ``inner`` first, then self."""
        return AffineModel(
            a11=self.a11 * inner.a11 + self.a12 * inner.a21,
            a12=self.a11 * inner.a12 + self.a12 * inner.a22,
            a21=self.a21 * inner.a11 + self.a22 * inner.a21,
            a22=self.a21 * inner.a12 + self.a22 * inner.a22,
            tx=self.a11 * inner.tx + self.a12 * inner.ty + self.tx,
            ty=self.a21 * inner.tx + self.a22 * inner.ty + self.ty,
        )

    def rotation_degrees(self) -> float:
        """Angle of the rotational component (degrees, (-180, 180])."""
        return math.degrees(math.atan2(self.a21, self.a11))

    @classmethod
    def identity(cls) -> "AffineModel":
        return cls(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)

    @classmethod
    def translation(cls, tx: float, ty: float) -> "AffineModel":
        return cls(1.0, 0.0, 0.0, 1.0, tx, ty)

    @classmethod
    def scaling(cls, s: float) -> "AffineModel":
        return cls(s, 0.0, 0.0, s, 0.0, 0.0)

    @classmethod
    def rotation(
        cls, angle_rad: float, center: tuple[float, float] = (0.0, 0.0)
    ) -> "AffineModel":
        """Rotation by angle_rad about ``center``."""
        c, s = math.cos(angle_rad), math.sin(angle_rad)
        cx, cy = center
        return cls(
            a11=c,
            a12=-s,
            a21=s,
            a22=c,
            tx=cx - c * cx + s * cy,
            ty=cy - s * cx - c * cy,
        )


def fit_affine_points(src: np.ndarray, dst: np.ndarray) -> AffineModel:
    """Least-squares affine minimizing sum ||A*src + t - dst||^2.

    Raises SingularTransformError for fewer than 3 points or collinear input.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape[0] < 3:
        raise SingularTransformError(
            f"need at least 3 correspondences, got {src.shape[0]}"
        )
    design = np.column_stack([src, np.ones(src.shape[0])])
    sol, _, rank, _ = np.linalg.lstsq(design, dst, rcond=None)
    if rank < 3:
        raise SingularTransformError("correspondences are collinear")
    return AffineModel(
        a11=sol[0, 0], a12=sol[1, 0], a21=sol[0, 1], a22=sol[1, 1],
        tx=sol[2, 0], ty=sol[2, 1],
    )


def fit_affine(matches, kref, ksen) -> AffineModel:
    """Least-squares affine from a match set (sensed -> reference)."""
    kref = kref if isinstance(kref, np.ndarray) else _to_array(kref)
    ksen = ksen if isinstance(ksen, np.ndarray) else _to_array(ksen)
    return fit_affine_points(ksen[matches.sen_idx], kref[matches.ref_idx])


def _to_array(keypoints) -> np.ndarray:
    from .harris import keypoint_array

    return keypoint_array(keypoints)
