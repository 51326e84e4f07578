"""Contrastive heatmap composition over the whole classifier output.

Four whole-output methods share one vocabulary of primitives:

* ``swox``     -- each top class gets its raw base-explainer map, no contrast.
* ``cwox1sA``  -- each class contrasted against all other top classes by
  rectified subtraction.
* ``cwox1sB``  -- each class multiplied by the inverse of the others' map.
* ``cwox2s``   -- two stages: confusion clusters contrasted against each
  other first, then classes within each cluster, restricted to the cluster's
  support.

A cluster acts as a compound class with probability ``sum P(c)`` and logit
``log sum exp(z_c)``. Base maps entering a subtraction are min-max normalized
per map by default, because raw map scales differ across targets for many
explainers; disable with ``normalize_base=False`` for the literal reading.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .cooccur import ClusterTree, ConfusionPartition, restrict_and_cut
from .core import ClassOutput, CwoxError, Image, SaliencyMap, select_top_k
from .io import atomic_write_text, load_heatmap, save_heatmap
from .oracle import ModelOracle


class ExplanationError(CwoxError):
    """A pipeline stage failed; the message names the stage."""


@runtime_checkable
class BaseExplainer(Protocol):
    """Anything that turns (image, target label sets) into saliency maps."""

    @property
    def name(self) -> str: ...

    @property
    def config(self) -> dict: ...

    def saliency(self, x: Image,
                 targets: Sequence[Sequence[str] | frozenset[str]]) -> list[SaliencyMap]: ...


@dataclass(frozen=True)
class ContrastConfig:
    k_cap: int = 5
    mass: float = 0.95
    epsilon: float = 0.0
    normalize_base: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must lie in [0, 1)")


@dataclass(frozen=True)
class SupportMask:
    """Binary indicator of pixels above ``epsilon`` times a map's maximum."""

    data: np.ndarray
    epsilon: float

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError("support mask must be 2-D")
        if arr.dtype != np.bool_:
            if not np.all((arr == 0) | (arr == 1)):
                raise ValueError("support mask entries must be 0 or 1")
            arr = arr.astype(np.bool_)
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)


def compound_logit(out: ClassOutput, cluster: Sequence[str] | frozenset[str]) -> float:
    """Logit of a cluster viewed as one compound class: log-sum-exp of members."""
    members = sorted(set(cluster))
    if not members:
        raise ValueError("cluster must be non-empty")
    z = np.array([out.logit(c) for c in members])
    zmax = z.max()
    return float(zmax + np.log(np.exp(z - zmax).sum()))


def compound_prob(out: ClassOutput, cluster: Sequence[str] | frozenset[str]) -> float:
    """Probability of a cluster viewed as one compound class: sum of members.

    Clipped to [0, 1] to absorb float summation overshoot when the cluster
    covers (almost) the whole vocabulary.
    """
    members = sorted(set(cluster))
    if not members:
        raise ValueError("cluster must be non-empty")
    total = float(sum(out.probability(c) for c in members))
    return min(1.0, max(0.0, total))


def cluster_contrast(h_cluster: SaliencyMap, h_rest: SaliencyMap | None,
                     num_clusters: int) -> SaliencyMap:
    """Stage-1 heatmap: evidence for a cluster against all other clusters.

    With a single cluster there is nothing to contrast against and the
    cluster map passes through unchanged.
    """
    if num_clusters < 1:
        raise ValueError("num_clusters must be at least 1")
    if num_clusters == 1:
        return h_cluster
    if h_rest is None:
        raise ValueError("h_rest is required when num_clusters > 1")
    if h_cluster.data.shape != h_rest.data.shape:
        raise ValueError(
            f"map shapes differ: {h_cluster.data.shape} vs {h_rest.data.shape}"
        )
    return SaliencyMap(np.maximum(h_cluster.data - h_rest.data, 0.0))


def support_mask(map_: SaliencyMap, epsilon: float = 0.0) -> SupportMask:
    """Pixels strictly above ``epsilon * max``; an all-zero map has empty support."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must lie in [0, 1)")
    peak = map_.data.max()
    return SupportMask(map_.data > epsilon * peak, epsilon)


def class_contrast(support: SupportMask, h_class: SaliencyMap,
                   h_rest_in_cluster: SaliencyMap | None,
                   cluster_size: int) -> SaliencyMap:
    """Stage-2 heatmap: evidence for a class against its cluster siblings,
    restricted to the cluster's support."""
    if cluster_size < 1:
        raise ValueError("cluster_size must be at least 1")
    if support.data.shape != h_class.data.shape:
        raise ValueError(
            f"support shape {support.data.shape} does not match map {h_class.data.shape}"
        )
    if cluster_size > 1:
        if h_rest_in_cluster is None:
            raise ValueError("h_rest_in_cluster is required when cluster_size > 1")
        if h_rest_in_cluster.data.shape != h_class.data.shape:
            raise ValueError("class and rest maps must share dimensions")
        inner = np.maximum(h_class.data - h_rest_in_cluster.data, 0.0)
    else:
        if h_rest_in_cluster is not None:
            raise ValueError("h_rest_in_cluster must be omitted for singleton clusters")
        inner = h_class.data
    return SaliencyMap(np.where(support.data, inner, 0.0))


def _normalize(map_: SaliencyMap) -> SaliencyMap:
    """Min-max normalize to [0, 1].

    A constant map has no range; it becomes all-ones when positive so its
    support stays full, and all-zeros otherwise.
    """
    lo = map_.data.min()
    hi = map_.data.max()
    if hi == lo:
        return SaliencyMap((map_.data > 0).astype(np.float64))
    return SaliencyMap((map_.data - lo) / (hi - lo))


@dataclass(frozen=True)
class ExplanationBundle:
    """All heatmaps explaining one classifier output.

    ``cluster_maps`` align with ``partition.clusters`` for the two-stage
    method and are empty for the one-stage and plain methods, which have no
    cluster stage. ``class_maps`` holds one heatmap per top class.
    """

    method: str
    partition: ConfusionPartition
    cluster_maps: tuple[SaliencyMap, ...]
    class_maps: Mapping[str, SaliencyMap]
    provenance: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        class_maps = dict(self.class_maps)
        if set(class_maps) != set(self.partition.labels):
            raise ValueError("class maps must cover exactly the partition's labels")
        if self.method == "cwox2s":
            if len(self.cluster_maps) != len(self.partition.clusters):
                raise ValueError("two-stage bundles need one cluster map per cluster")
        elif self.cluster_maps:
            raise ValueError(f"method {self.method!r} carries no cluster maps")
        object.__setattr__(self, "cluster_maps", tuple(self.cluster_maps))
        object.__setattr__(self, "class_maps", class_maps)
        object.__setattr__(self, "provenance", dict(self.provenance))

    @property
    def top_labels(self) -> tuple[str, ...]:
        return self.partition.labels


def _base_maps(explainer: BaseExplainer, x: Image,
               targets: list[frozenset[str]], stage: str) -> list[SaliencyMap]:
    try:
        maps = explainer.saliency(x, targets)
    except Exception as exc:
        raise ExplanationError(f"{stage}: base explainer failed: {exc}") from exc
    if len(maps) != len(targets):
        raise ExplanationError(
            f"{stage}: explainer returned {len(maps)} maps for {len(targets)} targets"
        )
    return maps


def _provenance(explainer: BaseExplainer, out: ClassOutput, top, cfg: ContrastConfig,
                image_id: str) -> dict:
    return {
        "image": image_id,
        "explainer": explainer.name,
        "explainer_config": explainer.config,
        "epsilon": cfg.epsilon,
        "normalize_base": cfg.normalize_base,
        "k_cap": cfg.k_cap,
        "mass": cfg.mass,
        "top": [{"label": lab, "probability": out.probability(lab)} for lab in top.labels],
    }


def explain_cwox2s(oracle: ModelOracle, explainer: BaseExplainer, tree: ClusterTree,
                   x: Image, cfg: ContrastConfig = ContrastConfig(),
                   image_id: str = "") -> ExplanationBundle:
    """Two-stage contrastive explanation of the whole top-K output.

    Stage 1 contrasts each confusion cluster against the union of the others;
    stage 2 contrasts each class against its cluster siblings inside the
    cluster's support. Both stages consume compound-target base maps.
    """
    try:
        out = oracle.classify(x)
    except Exception as exc:
        raise ExplanationError(f"classify: oracle failed: {exc}") from exc
    top = select_top_k(out, cfg.k_cap, cfg.mass)
    partition = restrict_and_cut(tree, top)
    clusters = partition.clusters
    n_clusters = len(clusters)
    top_set = top.label_set

    stage1_targets: list[frozenset[str]] = []
    for cluster in clusters:
        stage1_targets.append(frozenset(cluster))
        if n_clusters > 1:
            stage1_targets.append(top_set - frozenset(cluster))
    stage1_maps = _base_maps(explainer, x, stage1_targets, "stage 1")
    if cfg.normalize_base:
        stage1_maps = [_normalize(m) for m in stage1_maps]

    cluster_maps: list[SaliencyMap] = []
    cluster_base: list[SaliencyMap] = []
    pos = 0
    for cluster in clusters:
        h_cluster = stage1_maps[pos]
        cluster_base.append(h_cluster)
        pos += 1
        h_rest = None
        if n_clusters > 1:
            h_rest = stage1_maps[pos]
            pos += 1
        cluster_maps.append(cluster_contrast(h_cluster, h_rest, n_clusters))
    supports = [support_mask(m, cfg.epsilon) for m in cluster_maps]

    stage2_targets: list[frozenset[str]] = []
    slots: list[tuple[int, str, bool]] = []  # (cluster index, label, has_rest)
    for ci, cluster in enumerate(clusters):
        if len(cluster) == 1:
            continue  # singleton reuses the cluster's own base-map target
        for label in cluster:
            stage2_targets.append(frozenset([label]))
            stage2_targets.append(frozenset(cluster) - {label})
            slots.append((ci, label, True))
    stage2_maps = _base_maps(explainer, x, stage2_targets, "stage 2") if stage2_targets else []
    if cfg.normalize_base:
        stage2_maps = [_normalize(m) for m in stage2_maps]

    class_maps: dict[str, SaliencyMap] = {}
    pos = 0
    for ci, label, _ in slots:
        h_class = stage2_maps[pos]
        h_rest = stage2_maps[pos + 1]
        pos += 2
        class_maps[label] = class_contrast(supports[ci], h_class, h_rest, len(clusters[ci]))
    for ci, cluster in enumerate(clusters):
        if len(cluster) == 1:
            # H_c for a singleton cluster is the cluster's own base map
            class_maps[cluster[0]] = class_contrast(supports[ci], cluster_base[ci], None, 1)

    return ExplanationBundle(
        method="cwox2s",
        partition=partition,
        cluster_maps=tuple(cluster_maps),
        class_maps=class_maps,
        provenance=_provenance(explainer, out, top, cfg, image_id),
    )


def _single_cluster_partition(top) -> ConfusionPartition:
    return ConfusionPartition((tuple(top.labels),))


def explain_swox(oracle: ModelOracle, explainer: BaseExplainer, x: Image,
                 cfg: ContrastConfig = ContrastConfig(),
                 image_id: str = "") -> ExplanationBundle:
    """Plain whole-output explanation: one raw base map per top class."""
    try:
        out = oracle.classify(x)
    except Exception as exc:
        raise ExplanationError(f"classify: oracle failed: {exc}") from exc
    top = select_top_k(out, cfg.k_cap, cfg.mass)
    maps = _base_maps(explainer, x, [frozenset([lab]) for lab in top.labels], "base maps")
    return ExplanationBundle(
        method="swox",
        partition=_single_cluster_partition(top),
        cluster_maps=(),
        class_maps=dict(zip(top.labels, maps)),
        provenance=_provenance(explainer, out, top, cfg, image_id),
    )


def _one_stage_maps(oracle: ModelOracle, explainer: BaseExplainer, x: Image,
                    cfg: ContrastConfig, image_id: str):
    try:
        out = oracle.classify(x)
    except Exception as exc:
        raise ExplanationError(f"classify: oracle failed: {exc}") from exc
    top = select_top_k(out, cfg.k_cap, cfg.mass)
    top_set = top.label_set
    targets: list[frozenset[str]] = []
    for label in top.labels:
        targets.append(frozenset([label]))
        if top.k > 1:
            targets.append(top_set - {label})
    maps = _base_maps(explainer, x, targets, "base maps")
    if cfg.normalize_base:
        maps = [_normalize(m) for m in maps]
    per_class: dict[str, tuple[SaliencyMap, SaliencyMap | None]] = {}
    pos = 0
    for label in top.labels:
        h_class = maps[pos]
        pos += 1
        h_rest = None
        if top.k > 1:
            h_rest = maps[pos]
            pos += 1
        per_class[label] = (h_class, h_rest)
    return out, top, per_class


def explain_cwox1sA(oracle: ModelOracle, explainer: BaseExplainer, x: Image,
                    cfg: ContrastConfig = ContrastConfig(),
                    image_id: str = "") -> ExplanationBundle:
    """One-stage contrast by subtraction: ReLU(H_c - H_rest) per top class.

    With a single top class the foil is empty and defined as a zero map, so
    the explanation reduces to the class's own base map.
    """
    out, top, per_class = _one_stage_maps(oracle, explainer, x, cfg, image_id)
    class_maps = {}
    for label, (h_class, h_rest) in per_class.items():
        if h_rest is None:
            class_maps[label] = h_class
        else:
            class_maps[label] = SaliencyMap(np.maximum(h_class.data - h_rest.data, 0.0))
    return ExplanationBundle(
        method="cwox1sA",
        partition=_single_cluster_partition(top),
        cluster_maps=(),
        class_maps=class_maps,
        provenance=_provenance(explainer, out, top, cfg, image_id),
    )


def inverse_map(map_: SaliencyMap) -> SaliencyMap:
    """1 - H / max(H); all-ones when the map has no positive peak."""
    peak = map_.data.max()
    if peak <= 0.0:
        return SaliencyMap(np.ones_like(map_.data))
    return SaliencyMap(1.0 - map_.data / peak)


def explain_cwox1sB(oracle: ModelOracle, explainer: BaseExplainer, x: Image,
                    cfg: ContrastConfig = ContrastConfig(),
                    image_id: str = "") -> ExplanationBundle:
    """One-stage contrast by inverse masking: H_c * (1 - H_rest / max H_rest)."""
    out, top, per_class = _one_stage_maps(oracle, explainer, x, cfg, image_id)
    class_maps = {}
    for label, (h_class, h_rest) in per_class.items():
        if h_rest is None:
            class_maps[label] = h_class
        else:
            class_maps[label] = SaliencyMap(h_class.data * inverse_map(h_rest).data)
    return ExplanationBundle(
        method="cwox1sB",
        partition=_single_cluster_partition(top),
        cluster_maps=(),
        class_maps=class_maps,
        provenance=_provenance(explainer, out, top, cfg, image_id),
    )


EXPLAIN_METHODS = {
    "cwox2s": explain_cwox2s,
    "cwox1sA": explain_cwox1sA,
    "cwox1sB": explain_cwox1sB,
    "swox": explain_swox,
}


# --- bundle persistence ------------------------------------------------------


def _safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", label)


def save_bundle(bundle: ExplanationBundle, directory: str | Path) -> None:
    """Persist a bundle as manifest.json plus one NPY file per heatmap."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cluster_files = []
    for i, map_ in enumerate(bundle.cluster_maps):
        fname = f"cluster_{i}.npy"
        save_heatmap(directory / fname, map_)
        cluster_files.append(fname)
    class_files: dict[str, str] = {}
    for ci, cluster in enumerate(bundle.partition.clusters):
        for label in cluster:
            fname = f"class_{ci}_{_safe_name(label)}.npy"
            save_heatmap(directory / fname, bundle.class_maps[label])
            class_files[label] = fname
    manifest = {
        "method": bundle.method,
        "partition": [list(c) for c in bundle.partition.clusters],
        "provenance": bundle.provenance,
        "cluster_maps": cluster_files,
        "class_maps": class_files,
    }
    atomic_write_text(directory / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))


def load_bundle(directory: str | Path) -> ExplanationBundle:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    partition = ConfusionPartition(tuple(tuple(c) for c in manifest["partition"]))
    cluster_maps = tuple(load_heatmap(directory / f) for f in manifest["cluster_maps"])
    class_maps = {
        label: load_heatmap(directory / fname)
        for label, fname in manifest["class_maps"].items()
    }
    return ExplanationBundle(
        method=manifest["method"],
        partition=partition,
        cluster_maps=cluster_maps,
        class_maps=class_maps,
        provenance=manifest.get("provenance", {}),
    )
