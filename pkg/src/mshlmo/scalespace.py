"""Gaussian pyramid construction and per-layer descriptor extraction.

Keypoints are detected once at full resolution; each pyramid layer gets its
own orientation map, and descriptors are extracted at the keypoints' scaled
positions with provenance (octave, layer, keypoint id).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .filters import gaussian_blur
from .ggloh import GglohGeometry, describe_batch
from .harris import Keypoint, keypoint_array
from .ingest import GrayImage
from .pmom import ScaleBank, pmom


@dataclass(frozen=True)
class Pyramid:
    """Octaves of progressively blurred layers; octave o is downsampled 2**o times."""

    octaves: tuple[tuple[GrayImage, ...], ...]
    dropped_octaves: int = 0

    @property
    def n_octaves(self) -> int:
        return len(self.octaves)

    @property
    def n_layers(self) -> int:
        return len(self.octaves[0]) if self.octaves else 0


@dataclass(frozen=True)
class LayerDescriptors:
    """Descriptor matrix for one (octave, layer), rows aligned with keypoint_ids."""

    octave: int
    layer: int
    values: np.ndarray
    keypoint_ids: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass
class ScaleDescriptorSet:
    """Map from (octave, layer) to that layer's descriptors."""

    layers: dict[tuple[int, int], LayerDescriptors] = field(default_factory=dict)

    def total(self) -> int:
        return sum(len(v) for v in self.layers.values())

    def __len__(self) -> int:
        return len(self.layers)


def downsample2(img: GrayImage) -> GrayImage:
    """Factor-2 downsampling by 2x2 mean; odd edges replicate to keep ceil(n/2)."""
    a = img.samples
    h, w = a.shape
    if h % 2:
        a = np.vstack([a, a[-1:]])
    if w % 2:
        a = np.hstack([a, a[:, -1:]])
    out = 0.25 * (a[0::2, 0::2] + a[0::2, 1::2] + a[1::2, 0::2] + a[1::2, 1::2])
    return GrayImage(samples=out)


def sigma_for_layer(layer: int, n_layers: int, sigma_base: float = 1.6) -> float:
    """Blur schedule sigma_base * k**layer with k = 2**(1/(n_layers-1))."""
    if n_layers < 2:
        return sigma_base
    k = 2.0 ** (1.0 / (n_layers - 1))
    return sigma_base * k**layer


def build_pyramid(
    img: GrayImage,
    n_octaves: int = 3,
    n_layers: int = 4,
    sigma_base: float = 1.6,
    min_dim: int = 96,
) -> Pyramid:
    """Downsample octave bases by 2x2 mean and blur layers within each octave.

    Layer 0 of each octave is the raw downsampled base; layers l >= 1 are the
    base blurred with sigma_for_layer(l). Octaves smaller than ``min_dim`` (the
    descriptor patch size) in either dimension are dropped and counted.
    """
    if n_octaves < 1 or n_layers < 1:
        raise ValueError("n_octaves and n_layers must be >= 1")
    octaves = []
    dropped = 0
    base = img
    for o in range(n_octaves):
        if min(base.samples.shape) < min_dim:
            dropped = n_octaves - o
            break
        layers = [base]
        for l in range(1, n_layers):
            sigma = sigma_for_layer(l, n_layers, sigma_base)
            layers.append(GrayImage(samples=gaussian_blur(base.samples, sigma)))
        octaves.append(tuple(layers))
        if o + 1 < n_octaves:
            base = downsample2(base)
    return Pyramid(octaves=tuple(octaves), dropped_octaves=dropped)


def extract_all(
    img: GrayImage,
    keypoints: list[Keypoint],
    geom: GglohGeometry,
    bank: ScaleBank,
    n_octaves: int = 3,
    n_layers: int = 4,
    rotation_invariant: bool = True,
    sigma_base: float = 1.6,
    flip_weight: float = 1.0,
    threads: int = 1,
) -> ScaleDescriptorSet:
    """Descriptors of all keypoints at every pyramid layer.

    Keypoint coordinates are divided by 2**octave and rounded; positions whose
    patch would leave the layer are skipped for that layer.
    """
    pyr = build_pyramid(
        img,
        n_octaves=n_octaves,
        n_layers=n_layers,
        sigma_base=sigma_base,
        min_dim=int(math.ceil(geom.patch_size)),
    )
    pts = keypoint_array(keypoints)
    ids = np.arange(len(keypoints), dtype=np.int64)
    margin = geom.border_margin

    def one_layer(o: int, l: int) -> LayerDescriptors:
        layer_img = pyr.octaves[o][l]
        h, w = layer_img.samples.shape
        scale = float(2**o)
        px = np.rint(pts[:, 0] / scale).astype(np.int64)
        py = np.rint(pts[:, 1] / scale).astype(np.int64)
        ok = (
            (px >= margin)
            & (px <= w - 1 - margin)
            & (py >= margin)
            & (py <= h - 1 - margin)
        )
        pm = pmom(layer_img, bank)
        values = describe_batch(
            pm,
            px[ok],
            py[ok],
            geom,
            rotation_invariant=rotation_invariant,
            flip_weight=flip_weight,
        )
        return LayerDescriptors(
            octave=o, layer=l, values=values, keypoint_ids=ids[ok]
        )

    tasks = [(o, l) for o in range(pyr.n_octaves) for l in range(pyr.n_layers)]
    result = ScaleDescriptorSet()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {t: pool.submit(one_layer, *t) for t in tasks}
        for t in tasks:
            result.layers[t] = futures[t].result()
    else:
        for t in tasks:
            result.layers[t] = one_layer(*t)
    return result
