"""Pipeline configuration: defaults, config-file parsing, overrides."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .ggloh import GglohGeometry, geometry
from .matching import ConsensusConfig
from .pmom import ScaleBank


@dataclass(frozen=True)
class PipelineConfig:
    """Registration parameters; defaults are the reference operating point."""

    max_points: int = 2000
    n_sectors: int = 12
    n_bins: int = 12
    r2: float = 48.0
    n_octaves: int = 3
    n_layers: int = 4
    pmom_scales: int = 10
    rotation_invariant: bool = True
    inlier_threshold: float = 3.0
    max_iterations: int = 2000
    confidence: float = 0.995
    seed: int = 0
    band: str = "sum"
    denoise: bool = False
    base_window: int = 11
    harris_sigma: float = 1.5
    pyramid_sigma: float = 1.6
    flip_weight: float = 1.0
    match_ratio: float = 0.9
    repeats: int = 1
    threads: int = 1

    def __post_init__(self):
        if self.max_points < 1:
            raise ValueError("max_points must be >= 1")
        if self.n_sectors % 2 or self.n_sectors < 2:
            raise ValueError("n_sectors must be even and >= 2")
        for name in ("n_bins", "n_octaves", "n_layers", "pmom_scales", "repeats",
                     "threads", "base_window", "max_iterations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")

    def geometry(self) -> GglohGeometry:
        return geometry(self.n_sectors, self.r2, self.n_bins)

    def scale_bank(self) -> ScaleBank:
        g = self.geometry()
        return ScaleBank.evenly_spaced(g.r0, g.r2, self.pmom_scales)

    def consensus(self) -> ConsensusConfig:
        return ConsensusConfig(
            inlier_threshold=self.inlier_threshold,
            max_iterations=self.max_iterations,
            confidence=self.confidence,
            rng_seed=self.seed,
        )

    def band_mode(self) -> str | int:
        return "sum" if self.band == "sum" else int(self.band)


_BOOL_WORDS = {"true": True, "false": False, "1": True, "0": False,
               "yes": True, "no": False}


def load_config(path: str | Path, base: PipelineConfig | None = None) -> PipelineConfig:
    """Parse a flat key=value config file; '#' starts a comment."""
    cfg = base or PipelineConfig()
    overrides = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        overrides[key] = value
    return apply_overrides(cfg, overrides)


def apply_overrides(cfg: PipelineConfig, overrides: dict) -> PipelineConfig:
    """Apply string-valued overrides, coercing to each field's type."""
    by_name = {f.name: f for f in fields(PipelineConfig)}
    parsed = {}
    for key, value in overrides.items():
        if key not in by_name:
            raise ValueError(f"unknown config key {key!r}")
        if value is None:
            continue
        ftype = by_name[key].type
        if isinstance(value, str):
            if ftype == "bool":
                try:
                    value = _BOOL_WORDS[value.lower()]
                except KeyError:
                    raise ValueError(f"bad boolean for {key!r}: {value!r}") from None
            elif ftype == "int":
                value = int(value)
            elif ftype == "float":
                value = float(value)
        parsed[key] = value
    return replace(cfg, **parsed)
