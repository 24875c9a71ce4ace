"""End-to-end orchestration: detect, describe at all scales, match, estimate."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .affine import AffineModel
from .config import PipelineConfig
from .errors import RegistrationFailureError
from .harris import Keypoint, detect, keypoint_array, lnms_ratio
from .ingest import GrayImage
from .matching import MatchSet, MultiscaleResult, match_multiscale
from .scalespace import ScaleDescriptorSet, extract_all


@dataclass
class PipelineResult:
    """Matches and model in full-resolution coordinates, plus diagnostics."""

    matches: MatchSet
    model: AffineModel
    kp_ref: list[Keypoint]
    kp_sen: list[Keypoint]
    stage_counts: dict
    timings: dict = field(default_factory=dict)
    multiscale: MultiscaleResult | None = None

    @property
    def kp_ref_xy(self) -> np.ndarray:
        return keypoint_array(self.kp_ref)

    @property
    def kp_sen_xy(self) -> np.ndarray:
        return keypoint_array(self.kp_sen)


def run_pair(
    ref: GrayImage, sen: GrayImage, cfg: PipelineConfig | None = None
) -> PipelineResult:
    """Full matching pipeline; raises RegistrationFailureError when it fails.

    The suppression window of whichever image covers the larger pixel area is
    scaled by the size ratio so keypoint densities agree.
    """
    cfg = cfg or PipelineConfig()
    geom = cfg.geometry()
    bank = cfg.scale_bank()
    timings = {}

    ratio = lnms_ratio(ref.size, sen.size)
    ref_larger = ref.width * ref.height >= sen.width * sen.height
    t0 = time.perf_counter()
    kp_ref = detect(
        ref,
        max_points=cfg.max_points,
        base_window=cfg.base_window,
        ratio=ratio if ref_larger else 1.0,
        border_margin=geom.border_margin,
        window_sigma=cfg.harris_sigma,
    )
    kp_sen = detect(
        sen,
        max_points=cfg.max_points,
        base_window=cfg.base_window,
        ratio=1.0 if ref_larger else ratio,
        border_margin=geom.border_margin,
        window_sigma=cfg.harris_sigma,
    )
    timings["detect_s"] = time.perf_counter() - t0
    if not kp_ref or not kp_sen:
        raise RegistrationFailureError(
            f"no usable keypoints (ref {len(kp_ref)}, sensed {len(kp_sen)})"
        )

    t0 = time.perf_counter()
    sets_ref = _extract(ref, kp_ref, geom, bank, cfg)
    sets_sen = _extract(sen, kp_sen, geom, bank, cfg)
    timings["describe_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    result = match_multiscale(
        sets_ref,
        sets_sen,
        keypoint_array(kp_ref),
        keypoint_array(kp_sen),
        cfg.consensus(),
        ratio=cfg.match_ratio,
        repeats=cfg.repeats,
        threads=cfg.threads,
    )
    timings["match_s"] = time.perf_counter() - t0

    return PipelineResult(
        matches=result.matches,
        model=result.model,
        kp_ref=kp_ref,
        kp_sen=kp_sen,
        stage_counts=result.stage_counts,
        timings=timings,
        multiscale=result,
    )


def _extract(
    img: GrayImage, kps, geom, bank, cfg: PipelineConfig
) -> ScaleDescriptorSet:
    return extract_all(
        img,
        kps,
        geom,
        bank,
        n_octaves=cfg.n_octaves,
        n_layers=cfg.n_layers,
        rotation_invariant=cfg.rotation_invariant,
        sigma_base=cfg.pyramid_sigma,
        flip_weight=cfg.flip_weight,
        threads=cfg.threads,
    )
