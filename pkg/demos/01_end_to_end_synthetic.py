"""End-to-end walkthrough on a fully synthetic world.

Builds a small linear-softmax classifier, mines confusion clusters from its
own outputs, explains one input with the two-stage contrastive method, and
scores the explanation with the deletion metrics. Everything runs in a couple
of seconds; outputs land in demos/output/01/.
"""

import json
from pathlib import Path

import numpy as np

from cwox import (
    ContrastConfig,
    Image,
    MetricConfig,
    RiseConfig,
    RiseExplainer,
    SyntheticClassifier,
    build_tree,
    compare_methods,
    cooccurrence_stats,
    enumerate_pairs,
    explain_cwox2s,
    export_tree,
    extract_documents,
    overlay,
    save_bundle,
    save_image,
)

OUT = Path(__file__).parent / "output" / "01"
OUT.mkdir(parents=True, exist_ok=True)
rng = np.random.default_rng(0)

# --- a classifier whose classes come in two visually-confusable groups -------
# 'husky' and 'wolf' read the top half of the image, 'mug' and 'bowl' the
# bottom half; within a group the classes differ only by small patches.
h = w = 16
labels = ("husky", "wolf", "mug", "bowl")
weights = np.zeros((4, h, w, 1))
weights[0, :8, :, 0] = 1.0
weights[1, :8, :, 0] = 1.0
weights[2, 8:, :, 0] = 1.0
weights[3, 8:, :, 0] = 1.0
weights[0, :3, :3, 0] += 2.0   # husky's ears
weights[1, :3, 13:, 0] += 2.0  # wolf's snout
weights[2, 13:, :3, 0] += 2.0  # mug's handle
weights[3, 13:, 13:, 0] += 2.0 # bowl's rim
oracle = SyntheticClassifier(labels, weights, np.zeros(4), temperature=24.0)

# --- offline phase: documents from classifier outputs, then the label tree ---
images = [(f"sample{i}", Image(np.clip(rng.random((h, w, 1)) + 0.2, 0, 1)))
          for i in range(300)]
documents = [d for d in extract_documents(oracle, images, k_cap=4, mass=0.95)]
print(f"extracted {len(documents)} documents; example: {documents[0]}")

stats = cooccurrence_stats(documents)
print(f"NPMI(husky, wolf) = {stats.npmi('husky', 'wolf'):.3f}, "
      f"NPMI(husky, mug) = {stats.npmi('husky', 'mug'):.3f}")

tree = build_tree(stats, theta=0.2)
(OUT / "tree.json").write_text(json.dumps(export_tree(tree), indent=2))
print(f"label tree written with {len(tree.nodes)} nodes")

# --- online phase: explain one input ------------------------------------------
scene = np.full((h, w, 1), 0.7)
scene[:3, :3, 0] = 1.0  # the ears are clearly visible
image = Image(scene)
out = oracle.classify(image)
print("classifier output:", {lab: round(float(p), 3)
                             for lab, p in zip(out.labels, out.probabilities)})

explainer = RiseExplainer(oracle, RiseConfig(num_masks=3000, cell_grid=6, seed=7,
                                             baseline="zero"))
bundle = explain_cwox2s(oracle, explainer, tree, image,
                        ContrastConfig(k_cap=4, mass=1.0), image_id="scene")
print("confusion clusters:", [list(c) for c in bundle.partition.clusters])
save_bundle(bundle, OUT / "bundle")

for i, cmap in enumerate(bundle.cluster_maps):
    save_image(OUT / f"overlay_cluster_{i}.png", overlay(image, cmap))
for label, cmap in bundle.class_maps.items():
    save_image(OUT / f"overlay_class_{label}.png", overlay(image, cmap))
print(f"overlays written to {OUT}")

# --- score the explanation -----------------------------------------------------
cfg = MetricConfig(baseline="zero")
for pair in enumerate_pairs(bundle.partition):
    comp = compare_methods(oracle, image, [bundle], pair, cfg)
    score = comp.scores[0]
    print(f"  {pair[0]:6s} vs {sorted(pair[1])}: "
          f"CAUC={score.cauc:.4f} CDROP={score.cdrop:.4f} n_delta={score.n_delta}")
