"""Transform estimation, warping, composites, metrics, and invariance sweeps."""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .affine import AffineModel, fit_affine, fit_affine_points  # noqa: F401
from .errors import RegistrationFailureError
from .harris import keypoint_array
from .ingest import GrayImage
from .matching import MatchSet

RENDER_MODES = ("fusion", "checkerboard", "alternation")


def warp(img: GrayImage, model: AffineModel, out_size: tuple[int, int]) -> GrayImage:
    """Resample ``img`` into the reference frame by inverse mapping.

    ``model`` maps the image's own (sensed) coordinates to the output frame;
    sampling is bilinear and pixels mapping outside the source become 0.
    """
    w, h = out_size
    inv = model.inverse()
    xx, yy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    sx = inv.a11 * xx + inv.a12 * yy + inv.tx
    sy = inv.a21 * xx + inv.a22 * yy + inv.ty
    src = img.samples
    sh, sw = src.shape
    valid = (sx >= 0) & (sx <= sw - 1) & (sy >= 0) & (sy <= sh - 1)
    x0 = np.clip(np.floor(sx).astype(np.int64), 0, sw - 1)
    y0 = np.clip(np.floor(sy).astype(np.int64), 0, sh - 1)
    x1 = np.minimum(x0 + 1, sw - 1)
    y1 = np.minimum(y0 + 1, sh - 1)
    fx = np.clip(sx - x0, 0.0, 1.0)
    fy = np.clip(sy - y0, 0.0, 1.0)
    out = (
        src[y0, x0] * (1 - fx) * (1 - fy)
        + src[y0, x1] * fx * (1 - fy)
        + src[y1, x0] * (1 - fx) * fy
        + src[y1, x1] * fx * fy
    )
    out[~valid] = 0.0
    return GrayImage(samples=out)


def render(
    ref: GrayImage, warped: GrayImage, mode: str = "fusion", block: int = 64
) -> np.ndarray:
    """Composite two aligned images for inspection; returns (h, w, 3) in [0, 1].

    fusion: green-magenta false color (reference in R/B, warped in G);
    checkerboard: alternating square blocks; alternation: vertical strips.
    """
    if ref.samples.shape != warped.samples.shape:
        raise ValueError(
            f"size mismatch: {ref.samples.shape} vs {warped.samples.shape}"
        )
    if mode not in RENDER_MODES:
        raise ValueError(f"unknown render mode {mode!r}")
    a, b = ref.samples, warped.samples
    if mode == "fusion":
        return np.stack([a, b, a], axis=-1)
    h, w = a.shape
    yy, xx = np.mgrid[0:h, 0:w]
    if mode == "checkerboard":
        take_ref = ((xx // block) + (yy // block)) % 2 == 0
    else:
        take_ref = (xx // block) % 2 == 0
    mono = np.where(take_ref, a, b)
    return np.stack([mono, mono, mono], axis=-1)


def ncm(matches: MatchSet, kref, ksen, truth: AffineModel, tol: float = 3.0) -> int:
    """Number of correct matches: pairs within ``tol`` px of the true mapping."""
    if len(matches) == 0:
        return 0
    kref = kref if isinstance(kref, np.ndarray) else keypoint_array(kref)
    ksen = ksen if isinstance(ksen, np.ndarray) else keypoint_array(ksen)
    pred = truth.apply(ksen[matches.sen_idx])
    err = np.linalg.norm(pred - kref[matches.ref_idx], axis=1)
    return int(np.sum(err <= tol))


def model_rmse(
    model: AffineModel, truth: AffineModel, size: tuple[int, int], step: int = 16
) -> float:
    """RMS deviation between two transforms over a pixel grid of the sensed frame."""
    w, h = size
    xs = np.arange(0, w, step, dtype=np.float64)
    ys = np.arange(0, h, step, dtype=np.float64)
    xx, yy = np.meshgrid(xs, ys)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    d = model.apply(pts) - truth.apply(pts)
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


@dataclass
class RegistrationReport:
    """Summary of one registration run."""

    inlier_count: int
    model: AffineModel
    runtime_s: float
    n_keypoints_ref: int
    n_keypoints_sen: int
    stage_counts: dict
    ncm: int | None = None  # only for synthetic pairs with known ground truth
    rmse: float | None = None
    reference: str = "first"

    def to_dict(self) -> dict:
        m = self.model
        return {
            "inlier_count": self.inlier_count,
            "model": [m.a11, m.a12, m.tx, m.a21, m.a22, m.ty],
            "runtime_s": self.runtime_s,
            "n_keypoints_ref": self.n_keypoints_ref,
            "n_keypoints_sen": self.n_keypoints_sen,
            "stage_counts": self.stage_counts,
            "ncm": self.ncm,
            "rmse": self.rmse,
            "reference": self.reference,
        }


# --- synthetic degradations for the invariance sweeps


def rotate_crop(img: GrayImage, angle_deg: float) -> tuple[GrayImage, AffineModel]:
    """Rotate about the center and crop to the angle-independent inscribed square.

    Returns the sensed image and the true sensed-to-reference model.
    """
    h, w = img.samples.shape
    center = ((w - 1) / 2.0, (h - 1) / 2.0)
    rot = AffineModel.rotation(math.radians(angle_deg), center=center)
    rotated = warp(img, rot, out_size=(w, h))
    side = int(math.floor(min(w, h) / math.sqrt(2.0)))
    ox, oy = (w - side) // 2, (h - side) // 2
    sensed = GrayImage(samples=rotated.samples[oy : oy + side, ox : ox + side].copy())
    truth = rot.inverse().compose(AffineModel.translation(float(ox), float(oy)))
    return sensed, truth


def scale_down(img: GrayImage, ratio: float) -> tuple[GrayImage, AffineModel]:
    """Downscale by ``ratio`` >= 1 (with a mild anti-alias blur) and return truth."""
    if ratio < 1.0:
        raise ValueError(f"scale ratio must be >= 1, got {ratio}")
    h, w = img.samples.shape
    if ratio == 1.0:
        return GrayImage(samples=img.samples.copy()), AffineModel.identity()
    from .filters import gaussian_blur

    blurred = GrayImage(samples=gaussian_blur(img.samples, 0.5 * math.sqrt(ratio**2 - 1.0)))
    out_w, out_h = int(math.floor(w / ratio)), int(math.floor(h / ratio))
    sensed = warp(blurred, AffineModel.scaling(1.0 / ratio), out_size=(out_w, out_h))
    return sensed, AffineModel.scaling(ratio)


INTENSITY_REMAPS = ("negate", "linear", "gamma")


def intensity_remap(img: GrayImage, kind: str) -> GrayImage:
    """Named intensity degradations: 1-I, 0.5*I+0.2, or I**2.2."""
    a = img.samples
    if kind == "negate":
        return GrayImage(samples=1.0 - a)
    if kind == "linear":
        return GrayImage(samples=0.5 * a + 0.2)
    if kind == "gamma":
        return GrayImage(samples=np.power(np.clip(a, 0.0, 1.0), 2.2))
    raise ValueError(f"unknown intensity remap {kind!r}")


@dataclass
class SweepRow:
    """One sweep case: parameter value, correctness count, success, runtime."""

    param: float | str
    ncm: int
    success: bool
    runtime_s: float
    model: AffineModel | None = None
    inlier_count: int = 0


def write_sweep_csv(path: str | Path, rows: list[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["param", "ncm", "success", "runtime_s"])
        for r in rows:
            out.writerow([r.param, r.ncm, str(r.success).lower(), f"{r.runtime_s:.3f}"])


def _run_case(ref: GrayImage, sensed: GrayImage, truth: AffineModel | None, cfg, tol):
    from .pipeline import run_pair

    start = time.perf_counter()
    try:
        res = run_pair(ref, sensed, cfg)
    except RegistrationFailureError:
        return 0, False, time.perf_counter() - start, None, 0
    n = (
        ncm(res.matches, res.kp_ref_xy, res.kp_sen_xy, truth, tol=tol)
        if truth is not None
        else len(res.matches)
    )
    return n, True, time.perf_counter() - start, res.model, len(res.matches)


def _run_sweep(cases, ref_for, truth_for, cfg, threads: int) -> list[SweepRow]:
    tol = cfg.inlier_threshold

    def one(i: int) -> SweepRow:
        case_cfg = replace(cfg, seed=_case_seed(cfg.seed, i), threads=1)
        sensed, truth = truth_for(cases[i])
        n, ok, dt, model, inliers = _run_case(ref_for(cases[i]), sensed, truth, case_cfg, tol)
        return SweepRow(
            param=cases[i], ncm=n, success=ok, runtime_s=dt, model=model,
            inlier_count=inliers,
        )

    idx = range(len(cases))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, idx))
    return [one(i) for i in idx]


def _case_seed(base: int | None, i: int) -> int | None:
    if base is None:
        return None
    return int(np.random.SeedSequence([int(base), 17, int(i)]).generate_state(1)[0])


def sweep_rotation(img: GrayImage, angles, cfg, threads: int = 1) -> list[SweepRow]:
    """Register the image against rotated copies; NCM is counted against truth."""
    def make(angle):
        return rotate_crop(img, float(angle))

    return _run_sweep(list(angles), lambda _: img, make, cfg, threads)


def sweep_scale(img: GrayImage, ratios, cfg, threads: int = 1) -> list[SweepRow]:
    """Register the image against downscaled copies (ratios >= 1)."""
    def make(ratio):
        return scale_down(img, float(ratio))

    return _run_sweep(list(ratios), lambda _: img, make, cfg, threads)


def sweep_intensity(img: GrayImage, cfg, threads: int = 1) -> list[SweepRow]:
    """Register the image against its standard intensity remaps."""
    def make(kind):
        return intensity_remap(img, kind), AffineModel.identity()

    return _run_sweep(list(INTENSITY_REMAPS), lambda _: img, make, cfg, threads)
