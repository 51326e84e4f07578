"""Randomized-mask saliency (RISE): a black-box base explainer.

Masks are sampled on a coarse cell grid, bilinearly upsampled past the image
size and cropped at a random shift, so mask edges are smooth and unaligned
with the cell lattice. The saliency of a pixel is the probability- (or
logit-) weighted average of the masks that kept it:

    H(pixel) = (1 / (num_masks * keep_prob)) * sum_k score_k * mask_k(pixel)

Everything is driven by one seed; identical configurations produce bit-equal
masks and maps regardless of worker count, because per-mask scores are
buffered and summed in ascending mask order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import CwoxError, Image, SaliencyMap, upsample
from .oracle import ModelOracle

Baseline = str | tuple[float, ...]


class ExplainerError(CwoxError):
    """A base-explainer run failed; ``masks_done`` counts completed queries."""

    def __init__(self, message: str, masks_done: int = 0):
        super().__init__(message)
        self.masks_done = masks_done


@dataclass(frozen=True)
class RiseConfig:
    """Sampling knobs. Smaller cells and keep probability give finer maps."""

    num_masks: int = 4000
    cell_grid: int = 7
    keep_prob: float = 0.5
    seed: int = 0
    target_kind: str = "prob"  # "prob": sum of probabilities; "logit": log-sum-exp
    baseline: Baseline = "mean"  # fill for masked-out pixels: "mean" | "zero" | color tuple
    workers: int = 1

    def __post_init__(self) -> None:
        if self.num_masks < 1:
            raise ValueError("num_masks must be at least 1")
        if self.cell_grid < 1:
            raise ValueError("cell_grid must be at least 1")
        if not 0.0 < self.keep_prob < 1.0:
            raise ValueError("keep_prob must lie strictly between 0 and 1")
        if self.target_kind not in ("prob", "logit"):
            raise ValueError("target_kind must be 'prob' or 'logit'")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


def _single_mask(rng: np.random.Generator, s: int, keep_prob: float,
                 h: int, w: int) -> np.ndarray:
    """One continuous [0,1] mask at image resolution from one RNG state."""
    grid = (rng.random((s, s)) < keep_prob).astype(np.float64)
    cell_h = math.ceil(h / s)
    cell_w = math.ceil(w / s)
    up = upsample(SaliencyMap(grid), (s + 1) * cell_h, (s + 1) * cell_w).data
    dy = int(rng.integers(0, cell_h))
    dx = int(rng.integers(0, cell_w))
    return up[dy:dy + h, dx:dx + w]


def generate_masks(cfg: RiseConfig, h: int, w: int) -> np.ndarray:
    """Sample ``cfg.num_masks`` masks as an (N, h, w) array, seed-determined."""
    if h < 1 or w < 1:
        raise ValueError("mask dimensions must be at least 1x1")
    rng = np.random.default_rng(cfg.seed)
    masks = np.empty((cfg.num_masks, h, w))
    for k in range(cfg.num_masks):
        masks[k] = _single_mask(rng, cfg.cell_grid, cfg.keep_prob, h, w)
    return masks


def _baseline_image(x: Image, baseline: Baseline) -> np.ndarray:
    if baseline == "zero":
        return np.zeros_like(x.data)
    if baseline == "mean":
        return np.broadcast_to(x.data.mean(axis=(0, 1)), x.data.shape).copy()
    color = np.asarray(baseline, dtype=np.float64)
    if color.shape != (x.channels,) or color.min() < 0 or color.max() > 1:
        raise ValueError(f"baseline color must be {x.channels} values in [0, 1]")
    return np.broadcast_to(color, x.data.shape).copy()


def _normalize_targets(targets: Sequence[Sequence[str] | frozenset[str]],
                       vocabulary: Sequence[str]) -> list[np.ndarray]:
    index = {label: i for i, label in enumerate(vocabulary)}
    resolved = []
    for target in targets:
        labels = sorted(set(target))
        if not labels:
            raise ValueError("saliency targets must be non-empty")
        unknown = [t for t in labels if t not in index]
        if unknown:
            raise ValueError(f"unknown labels in saliency target: {unknown}")
        resolved.append(np.array([index[t] for t in labels], dtype=np.intp))
    return resolved


def rise_saliency_many(oracle: ModelOracle, x: Image,
                       targets: Sequence[Sequence[str] | frozenset[str]],
                       cfg: RiseConfig) -> list[SaliencyMap]:
    """Score every target over one shared mask sweep.

    All returned maps are computed from the same masks and the same oracle
    calls, so per-target results are identical to separate runs with the same
    config, and probability-scored compound targets decompose additively.
    """
    target_idx = _normalize_targets(targets, oracle.labels)
    h, w = x.height, x.width
    masks = generate_masks(cfg, h, w)
    base = _baseline_image(x, cfg.baseline)

    def score_mask(k: int) -> np.ndarray:
        m = masks[k][:, :, np.newaxis]
        # convex blend can overshoot [0,1] by one ulp; clamp for Image's sake
        blended = np.clip(x.data * m + base * (1.0 - m), 0.0, 1.0)
        out = oracle.classify(Image(blended))
        row = np.empty(len(target_idx))
        for t, idx in enumerate(target_idx):
            if cfg.target_kind == "prob":
                row[t] = out.probabilities[idx].sum()
            else:
                z = out.logits[idx]
                zmax = z.max()
                row[t] = zmax + math.log(np.exp(z - zmax).sum())
        return row

    scores = np.empty((cfg.num_masks, len(target_idx)))
    done = 0
    try:
        if cfg.workers <= 1:
            for k in range(cfg.num_masks):
                scores[k] = score_mask(k)
                done += 1
        else:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                for k, row in enumerate(pool.map(score_mask, range(cfg.num_masks))):
                    scores[k] = row
                    done += 1
    except Exception as exc:
        raise ExplainerError(
            f"oracle failed during mask sweep ({type(exc).__name__}: {exc})",
            masks_done=done,
        ) from exc

    maps = []
    norm = cfg.num_masks * cfg.keep_prob
    for t in range(len(target_idx)):
        acc = np.zeros((h, w))
        for k in range(cfg.num_masks):  # fixed ascending order: bit-reproducible
            acc += scores[k, t] * masks[k]
        maps.append(SaliencyMap(acc / norm))
    return maps


def rise_saliency(oracle: ModelOracle, x: Image,
                  target: Sequence[str] | frozenset[str],
                  cfg: RiseConfig) -> SaliencyMap:
    """Saliency of one class or compound cluster under randomized masking."""
    return rise_saliency_many(oracle, x, [target], cfg)[0]


@dataclass(frozen=True)
class RiseExplainer:
    """Adapter exposing RISE as a base explainer for contrastive composition."""

    oracle: ModelOracle
    cfg: RiseConfig = RiseConfig()

    @property
    def name(self) -> str:
        return "rise"

    @property
    def config(self) -> dict:
        return {
            "num_masks": self.cfg.num_masks,
            "cell_grid": self.cfg.cell_grid,
            "keep_prob": self.cfg.keep_prob,
            "seed": self.cfg.seed,
            "target_kind": self.cfg.target_kind,
            "baseline": list(self.cfg.baseline) if isinstance(self.cfg.baseline, tuple)
            else self.cfg.baseline,
        }

    def saliency(self, x: Image,
                 targets: Sequence[Sequence[str] | frozenset[str]]) -> list[SaliencyMap]:
        return rise_saliency_many(self.oracle, x, targets, self.cfg)
