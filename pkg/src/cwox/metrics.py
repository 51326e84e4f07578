"""Contrastive-faithfulness metrics under progressive pixel deletion.

For a target class ``c`` and a foil set, pixels are deleted from the input in
descending heatmap order and the contrastive score

    s(r) = P(c | x with first r-1 pixels deleted) * (1 - P(foil | same))

is recorded for r = 1 .. n_delta + 1, where n_delta counts the delta-salient
pixels of the heatmap. Two summary scores follow:

* CAUC  = (1/n) * sum_{r=1}^{n_delta} s(r)            -- smaller is better
* CDROP = (s(1) - s(n_delta+1)) / log2(1 + max(n_delta, tau)/tau)
                                                       -- larger is better

CAUC sums over a pixel count, so when heatmaps are compared their CAUCs are
summed over the minimum n_delta across them; CDROP keeps each heatmap's own
n_delta, with tau penalizing oversized salient regions.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .contrast import ExplanationBundle, compound_prob
from .core import Image, SaliencyMap, pixel_order, upsample
from .oracle import ModelOracle

Baseline = str | tuple[float, ...]


@dataclass(frozen=True)
class MetricConfig:
    delta: float = 0.5
    tau_frac: float = 0.05
    baseline: Baseline = "mean"  # deletion fill: "mean" | "zero" | color tuple
    batch: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if not 0.0 < self.tau_frac <= 1.0:
            raise ValueError("tau_frac must lie in (0, 1]")
        if self.batch < 1:
            raise ValueError("batch must be at least 1")


@dataclass(frozen=True)
class DeletionCurve:
    """Contrastive scores s(1) .. s(n_delta + 1) for one heatmap."""

    scores: np.ndarray
    n_total: int
    n_delta: int
    exact: bool = True

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.shape != (self.n_delta + 1,):
            raise ValueError(
                f"curve needs n_delta + 1 = {self.n_delta + 1} scores, got {scores.shape}"
            )
        if scores.min() < 0.0 or scores.max() > 1.0:
            raise ValueError("contrastive scores must lie in [0, 1]")
        scores = scores.copy()
        scores.flags.writeable = False
        object.__setattr__(self, "scores", scores)


def n_delta(map_: SaliencyMap, delta: float = 0.5) -> int:
    """Count pixels with saliency >= delta * max.

    An all-zero map marks nothing as salient: the literal comparison would
    count every pixel (0 >= 0), so that case is guarded to return 0.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    data = map_.data
    if not data.any():
        return 0
    return int(np.count_nonzero(data >= delta * data.max()))


def default_tau(n_total: int, tau_frac: float = 0.05) -> int:
    return max(1, math.ceil(tau_frac * n_total))


def _fill_values(x: Image, baseline: Baseline) -> np.ndarray:
    if baseline == "zero":
        return np.zeros(x.channels)
    if baseline == "mean":
        return x.data.mean(axis=(0, 1))
    color = np.asarray(baseline, dtype=np.float64)
    if color.shape != (x.channels,) or color.min() < 0 or color.max() > 1:
        raise ValueError(f"baseline color must be {x.channels} values in [0, 1]")
    return color


def delete_pixels(x: Image, order: Sequence[int] | np.ndarray, r: int,
                  baseline: Baseline = "mean") -> Image:
    """Return a copy of ``x`` with the first ``r - 1`` pixels of ``order``
    replaced by the baseline fill (all channels). ``r = 1`` deletes nothing."""
    n = x.height * x.width
    if not 1 <= r <= n + 1:
        raise ValueError(f"r must lie in [1, {n + 1}], got {r}")
    order = np.asarray(order, dtype=np.intp)
    if r - 1 > order.size:
        raise ValueError("pixel order is shorter than the requested prefix")
    fill = _fill_values(x, baseline)
    flat = x.data.reshape(n, x.channels).copy()
    flat[order[: r - 1]] = fill
    return Image(flat.reshape(x.data.shape))


def _map_at_image_resolution(map_: SaliencyMap, x: Image) -> SaliencyMap:
    if map_.data.shape == (x.height, x.width):
        return map_
    return upsample(map_, x.height, x.width)


def contrastive_curve(oracle: ModelOracle, x: Image, map_: SaliencyMap, c: str,
                      foil: Sequence[str] | frozenset[str],
                      cfg: MetricConfig = MetricConfig()) -> DeletionCurve:
    """Delete pixels in descending heatmap order and score each step.

    With ``batch=1`` every r is evaluated exactly; larger batches evaluate at
    batch boundaries and hold the score constant in between, which is flagged
    by ``exact=False`` on the result.
    """
    foil_set = frozenset(foil)
    if not foil_set:
        raise ValueError("foil must be non-empty")
    if c in foil_set:
        raise ValueError(f"target {c!r} must not appear in its own foil")
    resized = _map_at_image_resolution(map_, x)
    order = pixel_order(resized)
    nd = n_delta(resized, cfg.delta)
    n = x.height * x.width
    fill = _fill_values(x, cfg.baseline)

    # incremental deletion: one working buffer, identical values to calling
    # delete_pixels at each r
    flat = x.data.reshape(n, x.channels).copy()
    shape = x.data.shape

    def score_at(r: int, deleted_upto: int) -> tuple[float, int]:
        flat[order[deleted_upto: r - 1]] = fill
        out = oracle.classify(Image(flat.reshape(shape)))
        s = out.probability(c) * (1.0 - compound_prob(out, foil_set))
        # product of probabilities; clamp the one-ulp underflow
        return min(1.0, max(0.0, s)), r - 1

    scores = np.empty(nd + 1)
    if cfg.batch == 1:
        deleted = 0
        for i, r in enumerate(range(1, nd + 2)):
            scores[i], deleted = score_at(r, deleted)
        exact = True
    else:
        eval_rs = sorted({1, nd + 1} | set(range(1, nd + 2, cfg.batch)))
        evaluated: dict[int, float] = {}
        deleted = 0
        for r in eval_rs:
            evaluated[r], deleted = score_at(r, deleted)
        current = evaluated[1]
        for i in range(nd + 1):
            current = evaluated.get(i + 1, current)  # hold each value until the next sample
            scores[i] = current
        exact = False
    return DeletionCurve(scores=scores, n_total=n, n_delta=nd, exact=exact)


def cauc(curve: DeletionCurve, up_to: int | None = None) -> float:
    """Area under the contrastive score curve, normalized by total pixels.

    ``up_to`` truncates the sum for cross-heatmap comparison; it defaults to
    the curve's own n_delta.
    """
    nd = curve.n_delta if up_to is None else min(up_to, curve.n_delta)
    if nd < 0:
        raise ValueError("up_to must be non-negative")
    return float(curve.scores[:nd].sum() / curve.n_total)


def cdrop(curve: DeletionCurve, tau: int) -> float:
    """Drop in contrastive score, log-penalized when n_delta exceeds tau."""
    if tau < 1:
        raise ValueError("tau must be at least 1")
    drop = float(curve.scores[0] - curve.scores[-1])
    penalty = math.log2(1.0 + max(curve.n_delta, tau) / tau)
    return drop / penalty


def enumerate_pairs(partition) -> list[tuple[str, frozenset[str]]]:
    """(target, same-cluster foil) pairs; singleton clusters contribute none."""
    pairs = []
    for cluster in partition.clusters:
        if len(cluster) < 2:
            continue
        for label in cluster:
            pairs.append((label, frozenset(cluster) - {label}))
    return pairs


@dataclass(frozen=True)
class MethodScore:
    bundle_index: int
    method: str
    cauc: float
    cdrop: float
    n_delta: int
    curve: DeletionCurve


@dataclass(frozen=True)
class PairComparison:
    target: str
    foil: frozenset[str]
    n_total: int
    n_delta_shared: int
    tau: int
    scores: tuple[MethodScore, ...]


def compare_methods(oracle: ModelOracle, x: Image,
                    bundles: Sequence[ExplanationBundle],
                    pair: tuple[str, Sequence[str] | frozenset[str]],
                    cfg: MetricConfig = MetricConfig()) -> PairComparison:
    """Score one (target, foil) pair across several explanation bundles.

    CAUCs are summed over the minimum n_delta across the bundles so the areas
    are comparable; CDROP keeps each bundle's own n_delta.
    """
    target, foil = pair
    foil_set = frozenset(foil)
    for i, bundle in enumerate(bundles):
        if target not in bundle.class_maps:
            raise ValueError(f"bundle {i} ({bundle.method}) has no map for {target!r}")
    curves = [
        contrastive_curve(oracle, x, bundle.class_maps[target], target, foil_set, cfg)
        for bundle in bundles
    ]
    shared = min(curve.n_delta for curve in curves)
    n = x.height * x.width
    tau = default_tau(n, cfg.tau_frac)
    scores = tuple(
        MethodScore(
            bundle_index=i,
            method=bundle.method,
            cauc=cauc(curve, up_to=shared),
            cdrop=cdrop(curve, tau),
            n_delta=curve.n_delta,
            curve=curve,
        )
        for i, (bundle, curve) in enumerate(zip(bundles, curves))
    )
    return PairComparison(
        target=target,
        foil=foil_set,
        n_total=n,
        n_delta_shared=shared,
        tau=tau,
        scores=scores,
    )


def report_json(comparisons: Sequence[PairComparison], cfg: MetricConfig,
                include_curves: bool = False,
                bundle_names: Sequence[str] | None = None) -> dict:
    """JSON-ready report: per-pair scores plus the configuration echo."""
    def name(i: int) -> str:
        return bundle_names[i] if bundle_names else str(i)

    pairs = []
    for comp in comparisons:
        methods = []
        for score in comp.scores:
            entry = {
                "bundle": name(score.bundle_index),
                "method": score.method,
                "cauc": score.cauc,
                "cdrop": score.cdrop,
                "n_delta": score.n_delta,
                "exact": score.curve.exact,
            }
            if include_curves:
                entry["curve"] = score.curve.scores.tolist()
            methods.append(entry)
        pairs.append({
            "target": comp.target,
            "foil": sorted(comp.foil),
            "n": comp.n_total,
            "n_delta_shared": comp.n_delta_shared,
            "tau": comp.tau,
            "methods": methods,
        })
    return {
        "config": {
            "delta": cfg.delta,
            "tau_frac": cfg.tau_frac,
            "baseline": list(cfg.baseline) if isinstance(cfg.baseline, tuple) else cfg.baseline,
            "batch": cfg.batch,
        },
        "pairs": pairs,
    }


def report_csv(comparisons: Sequence[PairComparison],
               bundle_names: Sequence[str] | None = None) -> str:
    """Long-form CSV with one row per (pair, bundle) plus per-bundle means."""
    def name(i: int) -> str:
        return bundle_names[i] if bundle_names else str(i)

    buf = _stdio.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["bundle", "method", "target", "foil", "n", "n_delta", "cauc", "cdrop"])
    totals: dict[int, list] = {}
    for comp in comparisons:
        for score in comp.scores:
            writer.writerow([
                name(score.bundle_index), score.method, comp.target,
                "|".join(sorted(comp.foil)), comp.n_total, score.n_delta,
                f"{score.cauc:.9g}", f"{score.cdrop:.9g}",
            ])
            acc = totals.setdefault(score.bundle_index, [score.method, 0.0, 0.0, 0])
            acc[1] += score.cauc
            acc[2] += score.cdrop
            acc[3] += 1
    for i in sorted(totals):
        method, cauc_sum, cdrop_sum, count = totals[i]
        writer.writerow([
            name(i), method, "(mean)", "", "", "",
            f"{cauc_sum / count:.9g}", f"{cdrop_sum / count:.9g}",
        ])
    return buf.getvalue()
