"""Confusion-cluster mining: NPMI statistics and the leveled label tree.

Shows how co-occurrence statistics translate into a tree, how the threshold
theta controls the level-1 cut, and how a classifier output is partitioned by
restricting the tree to its top labels.
"""

import json
from pathlib import Path

import numpy as np

from cwox import (
    Document,
    TopKSelection,
    build_tree,
    cooccurrence_stats,
    export_tree,
    import_tree,
    restrict_and_cut,
)

OUT = Path(__file__).parent / "output" / "02"
OUT.mkdir(parents=True, exist_ok=True)
rng = np.random.default_rng(1)

# --- plant three co-occurrence blocks ----------------------------------------
blocks = [["cello", "violin"], ["acoustic-guitar", "banjo", "electric-guitar"],
          ["screwdriver", "syringe"]]
documents = []
for i in range(1500):
    block = blocks[int(rng.integers(len(blocks)))]
    labels = {lab for lab in block if rng.random() < 0.9} or {block[0]}
    documents.append(Document(image=f"doc{i}", labels=frozenset(labels)))

stats = cooccurrence_stats(documents)
print("within-block vs cross-block similarity:")
print(f"  NPMI(cello, violin)          = {stats.npmi('cello', 'violin'):+.3f}")
print(f"  NPMI(acoustic-guitar, banjo) = {stats.npmi('acoustic-guitar', 'banjo'):+.3f}")
print(f"  NPMI(cello, banjo)           = {stats.npmi('cello', 'banjo'):+.3f}")

# --- the theta knob ------------------------------------------------------------
for theta in (0.2, 0.95, 1.1):
    tree = build_tree(stats, theta=theta)
    level1 = {}
    for node in tree.nodes:
        if node.label is not None:
            level1.setdefault(node.parent, []).append(node.label)
    print(f"theta={theta}: level-1 groups = {sorted(map(sorted, level1.values()))}")

tree = build_tree(stats, theta=0.2)
(OUT / "tree.json").write_text(json.dumps(export_tree(tree), indent=2))

# --- trees survive the JSON round trip ------------------------------------------
reloaded = import_tree(json.loads((OUT / "tree.json").read_text()))
assert export_tree(reloaded) == export_tree(tree)
print("tree JSON round trip: identical")

# --- partitioning one classifier output -----------------------------------------
top = TopKSelection(("cello", "acoustic-guitar", "banjo", "violin", "electric-guitar"))
partition = restrict_and_cut(reloaded, top)
print("top-5 labels partitioned into:", [list(c) for c in partition.clusters])

top_with_stranger = TopKSelection(("cello", "violin", "zebra"))
partition = restrict_and_cut(reloaded, top_with_stranger)
print("labels missing from the tree fall back to singletons:",
      [list(c) for c in partition.clusters])
