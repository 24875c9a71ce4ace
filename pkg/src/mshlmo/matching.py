"""Descriptor matching, consensus outlier removal, and the multi-scale merge.

Every pyramid layer pair is matched by Euclidean descriptor distance and
filtered by randomized affine sample consensus. Layer results are unioned per
octave pair and re-filtered; octave results are unioned, reduced to one-to-one
correspondences, and filtered a final time.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .affine import AffineModel, fit_affine_points
from .errors import RegistrationFailureError, SingularTransformError
from .harris import keypoint_array
from .scalespace import LayerDescriptors, ScaleDescriptorSet

STAGE_SINGLE = "single-scale"
STAGE_OCTAVE = "octave-merged"
STAGE_FINAL = "final"

_HYPOTHESIS_CHUNK = 256


@dataclass(frozen=True)
class MatchSet:
    """Index pairs into the reference and sensed keypoint lists, with distances."""

    ref_idx: np.ndarray
    sen_idx: np.ndarray
    dist: np.ndarray
    stage: str = STAGE_SINGLE

    def __len__(self) -> int:
        return self.ref_idx.size

    def to_json(self, kref, ksen) -> str:
        kref = kref if isinstance(kref, np.ndarray) else keypoint_array(kref)
        ksen = ksen if isinstance(ksen, np.ndarray) else keypoint_array(ksen)
        pairs = [
            {
                "ref": [float(kref[i, 0]), float(kref[i, 1])],
                "sen": [float(ksen[j, 0]), float(ksen[j, 1])],
                "dist": float(d),
            }
            for i, j, d in zip(self.ref_idx, self.sen_idx, self.dist)
        ]
        return json.dumps({"stage": self.stage, "pairs": pairs})


def _empty(stage: str) -> MatchSet:
    z = np.zeros(0, dtype=np.int64)
    return MatchSet(ref_idx=z, sen_idx=z.copy(), dist=np.zeros(0), stage=stage)


@dataclass(frozen=True)
class ConsensusConfig:
    """Randomized consensus settings; ``rng_seed`` fixes the sampling stream."""

    inlier_threshold: float = 3.0
    max_iterations: int = 2000
    confidence: float = 0.995
    rng_seed: int | None = None

    def __post_init__(self):
        if self.inlier_threshold <= 0:
            raise ValueError("inlier_threshold must be > 0")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")


def match_layer(dref, dsen, ratio: float = 0.9) -> MatchSet:
    """Mutual nearest neighbors under Euclidean distance with a ratio test.

    Accepts (n, dim) arrays or LayerDescriptors. Zero descriptors are excluded.
    Indices refer to rows of the inputs.
    """
    a = dref.values if isinstance(dref, LayerDescriptors) else np.asarray(dref, float)
    b = dsen.values if isinstance(dsen, LayerDescriptors) else np.asarray(dsen, float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"descriptor dimensions differ: {a.shape} vs {b.shape}")
    valid_a = np.flatnonzero(np.any(a != 0.0, axis=1))
    valid_b = np.flatnonzero(np.any(b != 0.0, axis=1))
    if valid_a.size == 0 or valid_b.size == 0:
        return _empty(STAGE_SINGLE)
    a_v, b_v = a[valid_a], b[valid_b]
    d2 = (
        np.sum(a_v * a_v, axis=1)[:, None]
        - 2.0 * (a_v @ b_v.T)
        + np.sum(b_v * b_v, axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    nn_ab = np.argmin(d2, axis=1)
    nn_ba = np.argmin(d2, axis=0)
    rows = np.arange(a_v.shape[0])
    mutual = nn_ba[nn_ab] == rows
    best = np.sqrt(d2[rows, nn_ab])
    if b_v.shape[0] >= 2:
        second = np.sqrt(np.partition(d2, 1, axis=1)[:, 1])
    else:
        second = np.full(a_v.shape[0], np.inf)
    keep = mutual & (best <= ratio * second)
    return MatchSet(
        ref_idx=valid_a[rows[keep]],
        sen_idx=valid_b[nn_ab[keep]],
        dist=best[keep],
        stage=STAGE_SINGLE,
    )


def _model_params_to_affine(p: np.ndarray) -> AffineModel:
    return AffineModel(
        a11=float(p[0, 0]), a12=float(p[1, 0]), a21=float(p[0, 1]),
        a22=float(p[1, 1]), tx=float(p[2, 0]), ty=float(p[2, 1]),
    )


def consensus_filter(
    matches: MatchSet, kref, ksen, cfg: ConsensusConfig
) -> tuple[MatchSet, AffineModel]:
    """Randomized 3-point affine consensus followed by least-squares refits.

    Returns the inlier subset (reprojection error below the threshold) and the
    refit model. Raises RegistrationFailureError when fewer than 3 matches are
    given or no model reaches 3 inliers.
    """
    n = len(matches)
    if n < 3:
        raise RegistrationFailureError(f"only {n} matches, need at least 3")
    kref = kref if isinstance(kref, np.ndarray) else keypoint_array(kref)
    ksen = ksen if isinstance(ksen, np.ndarray) else keypoint_array(ksen)
    dst = kref[matches.ref_idx]
    src = ksen[matches.sen_idx]
    rng = np.random.default_rng(cfg.rng_seed)
    thr2 = cfg.inlier_threshold**2
    src_h = np.column_stack([src, np.ones(n)])

    best_count = -1
    best_mask = None
    needed = cfg.max_iterations
    done = 0
    while done < min(needed, cfg.max_iterations):
        m = min(_HYPOTHESIS_CHUNK, cfg.max_iterations - done)
        samples = rng.integers(0, n, size=(m, 3))
        ok = (
            (samples[:, 0] != samples[:, 1])
            & (samples[:, 0] != samples[:, 2])
            & (samples[:, 1] != samples[:, 2])
        )
        design = src_h[samples]
        ok &= np.abs(np.linalg.det(design)) > 1e-9
        if np.any(ok):
            sol = np.linalg.solve(design[ok], dst[samples[ok]])
            pred = np.einsum("nk,mkj->mnj", src_h, sol)
            err2 = np.sum((pred - dst[None]) ** 2, axis=2)
            counts = np.sum(err2 < thr2, axis=1)
            top = int(np.argmax(counts))
            if counts[top] > best_count:
                best_count = int(counts[top])
                best_mask = err2[top] < thr2
        done += m
        if best_count > 2:
            w = best_count / n
            p_all = max(min(w**3, 1.0 - 1e-12), 1e-12)
            needed = int(
                np.ceil(np.log(1.0 - cfg.confidence) / np.log(1.0 - p_all))
            ) if p_all < 1.0 - 1e-9 else done
    if best_count < 3:
        raise RegistrationFailureError(
            f"no affine hypothesis reached 3 inliers over {n} matches"
        )

    # Refit on the consensus set until the inlier set stabilizes.
    mask = best_mask
    model = None
    for _ in range(10):
        try:
            model = fit_affine_points(src[mask], dst[mask])
        except SingularTransformError as exc:
            raise RegistrationFailureError(f"degenerate consensus set: {exc}") from exc
        err2 = np.sum((model.apply(src) - dst) ** 2, axis=1)
        new_mask = err2 < thr2
        if new_mask.sum() < 3:
            raise RegistrationFailureError("consensus collapsed below 3 inliers")
        if np.array_equal(new_mask, mask):
            break
        mask = new_mask
    idx = np.flatnonzero(mask)
    kept = MatchSet(
        ref_idx=matches.ref_idx[idx],
        sen_idx=matches.sen_idx[idx],
        dist=matches.dist[idx],
        stage=matches.stage,
    )
    return kept, model


def _dedup_smallest(sets: list[MatchSet], stage: str) -> MatchSet:
    """Union match sets keeping the smallest-distance instance of each (i, j)."""
    best: dict[tuple[int, int], float] = {}
    for ms in sets:
        for i, j, d in zip(ms.ref_idx, ms.sen_idx, ms.dist):
            key = (int(i), int(j))
            if key not in best or d < best[key]:
                best[key] = float(d)
    if not best:
        return _empty(stage)
    items = sorted(best.items())
    ref = np.array([k[0] for k, _ in items], dtype=np.int64)
    sen = np.array([k[1] for k, _ in items], dtype=np.int64)
    dist = np.array([v for _, v in items])
    return MatchSet(ref_idx=ref, sen_idx=sen, dist=dist, stage=stage)


def _one_to_one(ms: MatchSet) -> MatchSet:
    """Keep the smallest-distance match per reference and per sensed keypoint."""
    order = np.lexsort((ms.sen_idx, ms.ref_idx, ms.dist))
    used_ref: set[int] = set()
    used_sen: set[int] = set()
    keep = []
    for k in order:
        i, j = int(ms.ref_idx[k]), int(ms.sen_idx[k])
        if i in used_ref or j in used_sen:
            continue
        used_ref.add(i)
        used_sen.add(j)
        keep.append(k)
    keep = np.array(sorted(keep), dtype=np.int64)
    return MatchSet(
        ref_idx=ms.ref_idx[keep],
        sen_idx=ms.sen_idx[keep],
        dist=ms.dist[keep],
        stage=ms.stage,
    )


@dataclass
class MultiscaleResult:
    """Final matches plus per-stage diagnostics."""

    matches: MatchSet
    model: AffineModel
    layer_matches: dict[tuple[int, int, int, int], MatchSet] = field(
        default_factory=dict
    )
    octave_matches: dict[tuple[int, int], MatchSet] = field(default_factory=dict)
    stage_counts: dict[str, int] = field(default_factory=dict)


def _derived_seed(base: int | None, *key: int) -> int | None:
    if base is None:
        return None
    ss = np.random.SeedSequence([int(base), *[int(k) for k in key]])
    return int(ss.generate_state(1)[0])


def match_multiscale(
    sets_ref: ScaleDescriptorSet,
    sets_sen: ScaleDescriptorSet,
    kref,
    ksen,
    cfg: ConsensusConfig,
    ratio: float = 0.9,
    repeats: int = 1,
    threads: int = 1,
) -> MultiscaleResult:
    """Match every layer pair, then merge and re-filter per octave and overall.

    Layer pairs that fail consensus contribute nothing. The final union is
    deduplicated, reduced to one-to-one by smallest distance, and consensus
    filtered; failure there raises RegistrationFailureError.
    """
    if sets_ref.total() == 0 or sets_sen.total() == 0:
        raise RegistrationFailureError("no descriptors to match")
    kref = kref if isinstance(kref, np.ndarray) else keypoint_array(kref)
    ksen = ksen if isinstance(ksen, np.ndarray) else keypoint_array(ksen)

    keys_ref = sorted(sets_ref.layers)
    keys_sen = sorted(sets_sen.layers)
    pairs = [(kr, ks) for kr in keys_ref for ks in keys_sen]

    def one_pair(kr, ks):
        lr, ls = sets_ref.layers[kr], sets_sen.layers[ks]
        raw = match_layer(lr, ls, ratio=ratio)
        if len(raw) == 0:
            return None
        mapped = MatchSet(
            ref_idx=lr.keypoint_ids[raw.ref_idx],
            sen_idx=ls.keypoint_ids[raw.sen_idx],
            dist=raw.dist,
            stage=STAGE_SINGLE,
        )
        seed = _derived_seed(cfg.rng_seed, 1, *kr, *ks)
        try:
            kept, _ = consensus_filter(mapped, kref, ksen, replace(cfg, rng_seed=seed))
        except RegistrationFailureError:
            return None
        return kept

    results: dict[tuple, MatchSet | None] = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {p: pool.submit(one_pair, *p) for p in pairs}
        for p in pairs:
            results[p] = futures[p].result()
    else:
        for p in pairs:
            results[p] = one_pair(*p)

    layer_matches = {
        (kr[0], ks[0], kr[1], ks[1]): ms
        for (kr, ks), ms in results.items()
        if ms is not None
    }

    # Per octave pair: union of layer results, dedup, one more consensus pass.
    octave_matches: dict[tuple[int, int], MatchSet] = {}
    octave_keys = sorted({(o1, o2) for (o1, o2, _, _) in layer_matches})
    for o1, o2 in octave_keys:
        members = [
            ms for (m1, m2, _, _), ms in sorted(layer_matches.items())
            if (m1, m2) == (o1, o2)
        ]
        merged = _dedup_smallest(members, STAGE_OCTAVE)
        if len(merged) < 3:
            continue
        seed = _derived_seed(cfg.rng_seed, 2, o1, o2)
        try:
            kept, _ = consensus_filter(merged, kref, ksen, replace(cfg, rng_seed=seed))
        except RegistrationFailureError:
            continue
        octave_matches[(o1, o2)] = kept

    merged_all = _dedup_smallest(
        [octave_matches[k] for k in sorted(octave_matches)], STAGE_FINAL
    )
    if len(merged_all) < 3:
        raise RegistrationFailureError(
            f"only {len(merged_all)} candidate matches after the octave merge"
        )
    unique = _one_to_one(merged_all)

    # Final consensus; optionally rerun with fresh seeds and keep the best.
    best: tuple[MatchSet, AffineModel] | None = None
    for rep in range(max(1, repeats)):
        seed = _derived_seed(cfg.rng_seed, 3, rep)
        try:
            kept, model = consensus_filter(
                unique, kref, ksen, replace(cfg, rng_seed=seed)
            )
        except RegistrationFailureError:
            continue
        if best is None or len(kept) > len(best[0]):
            best = (kept, model)
    if best is None:
        raise RegistrationFailureError("final consensus failed to reach 3 inliers")

    final, model = best
    counts = {
        STAGE_SINGLE: sum(len(v) for v in layer_matches.values()),
        STAGE_OCTAVE: sum(len(v) for v in octave_matches.values()),
        STAGE_FINAL: len(final),
    }
    return MultiscaleResult(
        matches=final,
        model=model,
        layer_matches=layer_matches,
        octave_matches=octave_matches,
        stage_counts=counts,
    )
