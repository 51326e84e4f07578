"""Confusion clusters from label co-occurrence.

Offline: run the classifier over a dataset, keep each image's top labels as a
short document, count pairwise co-occurrence, and agglomerate labels into a
leveled tree using normalized pointwise mutual information (NPMI) as the
similarity. Online: restrict the tree to one output's top labels and cut it
at level 1 to obtain the confusion clusters.

Trees built elsewhere (e.g. by latent-tree analysis toolkits) can be imported
from the JSON schema accepted by :func:`import_tree`.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

from .core import CwoxError, Image, TopKSelection, select_top_k
from .oracle import ModelOracle


class TreeError(CwoxError):
    """Base class for cluster-tree validation failures."""


class TreeSchemaError(TreeError):
    """The tree document does not match the expected schema or structure."""


class DuplicateLabelError(TreeError):
    """The same label appears on more than one leaf."""


class LevelInversionError(TreeError):
    """Levels do not strictly increase from leaf to root."""


@dataclass(frozen=True)
class Document:
    """The top labels of one classified image, treated as a tiny document."""

    image: str
    labels: frozenset[str]

    def __post_init__(self) -> None:
        labels = frozenset(self.labels)
        if not labels:
            raise ValueError("document must contain at least one label")
        object.__setattr__(self, "labels", labels)

    def to_json(self) -> str:
        return json.dumps({"image": self.image, "labels": sorted(self.labels)})

    @classmethod
    def from_json(cls, line: str) -> "Document":
        doc = json.loads(line)
        return cls(image=str(doc["image"]), labels=frozenset(doc["labels"]))


@dataclass(frozen=True)
class ExtractError:
    """A per-image failure during document extraction."""

    image: str
    message: str


def extract_documents(
    oracle: ModelOracle,
    images: Iterable[tuple[str, Image]],
    k_cap: int = 5,
    mass: float = 0.95,
    workers: int = 1,
) -> Iterator[Document | ExtractError]:
    """Classify each (id, image) pair and yield its top-label document.

    Oracle failures yield an :class:`ExtractError` for that image and the
    stream continues. An empty image source raises ``ValueError``. With
    ``workers > 1`` classification runs concurrently but results keep the
    input order.
    """

    def one(item: tuple[str, Image]) -> Document | ExtractError:
        image_id, image = item
        try:
            top = select_top_k(oracle.classify(image), k_cap=k_cap, mass=mass)
            return Document(image=image_id, labels=frozenset(top.labels))
        except Exception as exc:
            return ExtractError(image=image_id, message=f"{type(exc).__name__}: {exc}")

    count = 0
    if workers <= 1:
        for item in images:
            count += 1
            yield one(item)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for result in pool.map(one, images):
                count += 1
                yield result
    if count == 0:
        raise ValueError("image source is empty")


@dataclass(frozen=True)
class CooccurrenceStats:
    """Pairwise label counts with smoothed NPMI.

    Smoothing adds ``epsilon`` to every count and ``2 * epsilon`` to the
    document total, which keeps every probability strictly inside (0, 1) and
    NPMI inside [-1, 1] even for never-co-occurring pairs.
    """

    vocabulary: tuple[str, ...]
    n_docs: int
    marginals: Mapping[str, int]
    joints: Mapping[tuple[str, str], int]
    epsilon: float = 0.5

    def joint(self, u: str, v: str) -> int:
        key = (u, v) if u <= v else (v, u)
        return self.joints.get(key, 0)

    def npmi(self, u: str, v: str) -> float:
        if u == v:
            raise ValueError("NPMI is defined for distinct labels")
        for lab in (u, v):
            if lab not in self.marginals:
                raise ValueError(f"unknown label {lab!r}")
        denom = self.n_docs + 2.0 * self.epsilon
        p_uv = (self.joint(u, v) + self.epsilon) / denom
        p_u = (self.marginals[u] + self.epsilon) / denom
        p_v = (self.marginals[v] + self.epsilon) / denom
        value = math.log(p_uv / (p_u * p_v)) / (-math.log(p_uv))
        # mathematically in [-1, 1]; clamp the last-ulp float overshoot
        return min(1.0, max(-1.0, value))


def cooccurrence_stats(docs: Iterable[Document], epsilon: float = 0.5) -> CooccurrenceStats:
    """Count marginals and unordered-pair joints over a document collection."""
    marginals: Counter[str] = Counter()
    joints: Counter[tuple[str, str]] = Counter()
    n_docs = 0
    for doc in docs:
        n_docs += 1
        labels = sorted(doc.labels)
        marginals.update(labels)
        joints.update(itertools.combinations(labels, 2))
    if n_docs == 0:
        raise ValueError("at least one document is required")
    return CooccurrenceStats(
        vocabulary=tuple(sorted(marginals)),
        n_docs=n_docs,
        marginals=dict(marginals),
        joints=dict(joints),
        epsilon=epsilon,
    )


@dataclass(frozen=True)
class TreeNode:
    id: str
    level: int
    parent: str | None
    label: str | None = None


@dataclass(frozen=True)
class ClusterTree:
    """A leveled hierarchy over class labels.

    Leaves sit at level 0 and carry labels; internal nodes group leaves whose
    labels co-occur. Levels strictly increase from every leaf up to the
    single root.
    """

    nodes: tuple[TreeNode, ...]

    def __post_init__(self) -> None:
        nodes = tuple(self.nodes)
        if not nodes:
            raise TreeSchemaError("tree must contain at least one node")
        by_id: dict[str, TreeNode] = {}
        for node in nodes:
            if node.id in by_id:
                raise TreeSchemaError(f"duplicate node id {node.id!r}")
            by_id[node.id] = node
        roots = [n for n in nodes if n.parent is None]
        if len(roots) != 1:
            raise TreeSchemaError(f"tree must have exactly one root, found {len(roots)}")
        children: dict[str, list[TreeNode]] = {n.id: [] for n in nodes}
        for node in nodes:
            if node.parent is not None:
                if node.parent not in by_id:
                    raise TreeSchemaError(f"node {node.id!r} has unknown parent {node.parent!r}")
                children[node.parent].append(node)
                if node.level >= by_id[node.parent].level:
                    raise LevelInversionError(
                        f"node {node.id!r} (level {node.level}) under "
                        f"{node.parent!r} (level {by_id[node.parent].level})"
                    )
        seen_labels: set[str] = set()
        for node in nodes:
            if node.level < 0:
                raise TreeSchemaError(f"node {node.id!r} has negative level")
            if not children[node.id]:
                if node.level != 0:
                    raise LevelInversionError(f"leaf {node.id!r} sits at level {node.level}, not 0")
                if node.label is None:
                    raise TreeSchemaError(f"leaf {node.id!r} carries no label")
                if node.label in seen_labels:
                    raise DuplicateLabelError(f"label {node.label!r} appears on multiple leaves")
                seen_labels.add(node.label)
            elif node.label is not None:
                raise TreeSchemaError(f"internal node {node.id!r} must not carry a label")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_leaf_by_label", {n.label: n for n in nodes if n.label})

    @property
    def labels(self) -> frozenset[str]:
        return frozenset(self._leaf_by_label)

    def level1_ancestor(self, label: str) -> str | None:
        """Id of the nearest ancestor with level >= 1, or None if absent."""
        leaf = self._leaf_by_label.get(label)
        if leaf is None:
            return None
        node = leaf
        while node.parent is not None:
            node = self._by_id[node.parent]
            if node.level >= 1:
                return node.id
        return None


def export_tree(tree: ClusterTree) -> dict:
    """Canonical JSON-ready form: nodes sorted by (level, id)."""
    nodes = sorted(tree.nodes, key=lambda n: (n.level, n.id))
    return {
        "nodes": [
            {"id": n.id, "level": n.level, "parent": n.parent, "label": n.label}
            for n in nodes
        ]
    }


def import_tree(document: dict | str) -> ClusterTree:
    """Parse and validate a tree JSON document.

    Raises :class:`TreeSchemaError`, :class:`DuplicateLabelError` or
    :class:`LevelInversionError` depending on what is wrong.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise TreeSchemaError(f"tree document is not valid JSON: {exc}") from exc
    if not isinstance(document, dict) or not isinstance(document.get("nodes"), list):
        raise TreeSchemaError("tree document must be an object with a 'nodes' list")
    nodes = []
    for raw in document["nodes"]:
        if not isinstance(raw, dict):
            raise TreeSchemaError("every node must be an object")
        try:
            node_id = raw["id"]
            level = raw["level"]
        except KeyError as exc:
            raise TreeSchemaError(f"node missing required key {exc}") from exc
        parent = raw.get("parent")
        label = raw.get("label")
        if not isinstance(node_id, str) or not isinstance(level, int) or isinstance(level, bool):
            raise TreeSchemaError(f"node {node_id!r}: id must be a string and level an integer")
        if parent is not None and not isinstance(parent, str):
            raise TreeSchemaError(f"node {node_id!r}: parent must be a string or null")
        if label is not None and not isinstance(label, str):
            raise TreeSchemaError(f"node {node_id!r}: label must be a string or null")
        nodes.append(TreeNode(id=node_id, level=level, parent=parent, label=label))
    return ClusterTree(tuple(nodes))


@dataclass(frozen=True)
class ConfusionPartition:
    """Ordered, disjoint confusion clusters covering one output's top labels."""

    clusters: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        clusters = tuple(tuple(c) for c in self.clusters)
        if not clusters:
            raise ValueError("partition must contain at least one cluster")
        flat = [lab for c in clusters for lab in c]
        if any(not c for c in clusters):
            raise ValueError("clusters must be non-empty")
        if len(set(flat)) != len(flat):
            raise ValueError("clusters must be disjoint")
        object.__setattr__(self, "clusters", clusters)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for c in self.clusters for lab in c)

    def cluster_of(self, label: str) -> tuple[str, ...]:
        for cluster in self.clusters:
            if label in cluster:
                return cluster
        raise ValueError(f"label {label!r} is not in the partition")


def restrict_and_cut(tree: ClusterTree, top: TopKSelection) -> ConfusionPartition:
    """Group the top labels by their nearest level->=1 ancestor in the tree.

    Labels missing from the tree become singleton clusters. Since the top
    labels arrive best-first, ordering clusters by first appearance orders
    them by descending maximum in-cluster probability.
    """
    groups: dict[object, list[str]] = {}
    order: list[object] = []
    for label in top.labels:
        anc = tree.level1_ancestor(label)
        key: object = anc if anc is not None else ("singleton", label)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(label)
    return ConfusionPartition(tuple(tuple(groups[k]) for k in order))


# --- NPMI agglomeration -----------------------------------------------------


@dataclass
class _Dendro:
    """Dendrogram node produced during agglomeration."""

    members: tuple[str, ...]  # sorted leaf labels
    children: tuple["_Dendro", ...] = ()
    sim: float = math.inf  # merge similarity; inf for leaves


def _agglomerate(stats: CooccurrenceStats) -> _Dendro:
    """Average-linkage agglomeration on NPMI, deterministic under ties.

    Ties on the best merge similarity are broken by the lexicographically
    smallest pair of member tuples, so the dendrogram depends only on the
    labels and counts, never on iteration order.
    """
    labels = stats.vocabulary
    n = len(labels)
    if n == 1:
        return _Dendro(members=(labels[0],))
    sim = np.full((n, n), -np.inf)
    for i, j in itertools.combinations(range(n), 2):
        sim[i, j] = sim[j, i] = stats.npmi(labels[i], labels[j])
    clusters: dict[int, _Dendro] = {i: _Dendro(members=(labels[i],)) for i in range(n)}
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    while len(clusters) > 1:
        idx = np.nonzero(active)[0]
        sub = sim[np.ix_(idx, idx)]
        np.fill_diagonal(sub, -np.inf)
        best_sim = sub.max()
        ti, tj = np.nonzero(sub == best_sim)
        pairs = [(idx[a], idx[b]) for a, b in zip(ti, tj) if a < b]
        i, j = min(pairs, key=lambda p: tuple(sorted((clusters[p[0]].members,
                                                      clusters[p[1]].members))))
        merged = _Dendro(
            members=tuple(sorted(clusters[i].members + clusters[j].members)),
            children=(clusters[i], clusters[j]),
            sim=float(best_sim),
        )
        # average linkage: similarity to the merge is the size-weighted mean
        others = active.copy()
        others[[i, j]] = False
        sim[i, others] = sim[others, i] = (
            sizes[i] * sim[i, others] + sizes[j] * sim[j, others]
        ) / (sizes[i] + sizes[j])
        sizes[i] += sizes[j]
        active[j] = False
        del clusters[j]
        clusters[i] = merged
    return next(iter(clusters.values()))


def build_tree(stats: CooccurrenceStats, theta: float = 0.2) -> ClusterTree:
    """Build a leveled label tree by cutting an NPMI dendrogram at ``theta``.

    Level-1 nodes are the maximal dendrogram subtrees whose merges all reach
    similarity ``theta``; labels that never merge that strongly get singleton
    level-1 nodes. The merges that remain above the cut become level-2+
    nodes, and a root always sits above the level-1 layer.
    """
    if not stats.vocabulary:
        raise ValueError("statistics cover no labels")
    root = _agglomerate(stats)

    def good(node: _Dendro) -> bool:
        if not node.children:
            return True
        return node.sim >= theta and all(good(c) for c in node.children)

    def cut(node: _Dendro) -> list[_Dendro]:
        if good(node):
            return [node]
        return [g for child in node.children for g in cut(child)]

    groups = cut(root)
    group_members = {g.members for g in groups}
    counter = itertools.count()
    node_id: dict[tuple[str, ...], str] = {}
    node_level: dict[tuple[str, ...], int] = {}
    parent_of: dict[str, str] = {}
    for group in sorted(groups, key=lambda g: g.members):
        node_id[group.members] = f"g{next(counter)}"
        node_level[group.members] = 1

    def walk(node: _Dendro) -> str:
        """Contract the dendrogram above the cut into tree nodes."""
        if node.members in group_members:
            return node_id[node.members]
        child_ids = [walk(c) for c in node.children]
        gid = f"g{next(counter)}"
        node_id[node.members] = gid
        node_level[node.members] = 1 + max(node_level[c.members] for c in node.children)
        for cid in child_ids:
            parent_of[cid] = gid
        return gid

    top_id = walk(root)
    nodes: list[TreeNode] = []
    if len(groups) == 1:
        # the whole vocabulary merged into one level-1 group: add a root
        root_id = f"g{next(counter)}"
        parent_of[top_id] = root_id
        nodes.append(TreeNode(id=root_id, level=2, parent=None))

    for members in sorted(node_id):
        gid = node_id[members]
        nodes.append(TreeNode(id=gid, level=node_level[members], parent=parent_of.get(gid)))
        if node_level[members] == 1:
            for label in members:
                nodes.append(TreeNode(id=label, level=0, parent=gid, label=label))
    return ClusterTree(tuple(nodes))
