"""Small classifiers shared by the demo scripts."""

import numpy as np

from cwox import ClassOutput, Image, SyntheticClassifier, softmax


def left_right_model(h=16, w=16, temperature=8.0) -> SyntheticClassifier:
    """Two classes: 'left' reads the left half of the image, 'right' the right."""
    wl = np.zeros((h, w, 1))
    wr = np.zeros((h, w, 1))
    wl[:, : w // 2, 0] = 1.0
    wr[:, w // 2 :, 0] = 1.0
    return SyntheticClassifier(("left", "right"), np.stack([wl, wr]),
                               np.zeros(2), temperature)


class SaturatingQuadrantModel:
    """Two confusion clusters whose shared evidence saturates.

    Classes a/b share redundant evidence on the left half of a 8x8 image
    (c/d on the right); small disjoint corner patches carry the
    discriminative weight. Mimics how CNN logits respond to whole objects:
    per-class saliency peaks on the object, but only the small
    class-specific details move the within-cluster margin.
    """

    labels = ("a", "b", "c", "d")
    input_size = (8, 8, 1)

    def __init__(self, alpha=1.0, beta=0.5, sat_frac=0.6, temperature=2.0):
        self.alpha = alpha
        self.beta = beta
        self.sat = sat_frac * 16.0
        self.temperature = temperature

    def classify(self, image: Image) -> ClassOutput:
        x = image.data[:, :, 0]
        shared_left = x[2:6, 0:4].sum()
        shared_right = x[2:6, 4:8].sum()
        disjoint = {"a": x[0:2, 0:4].sum(), "b": x[6:8, 0:4].sum(),
                    "c": x[0:2, 4:8].sum(), "d": x[6:8, 4:8].sum()}
        shared = {"a": shared_left, "b": shared_left,
                  "c": shared_right, "d": shared_right}
        z = np.array([
            (self.alpha * min(shared[c], self.sat) + self.beta * disjoint[c])
            / self.temperature
            for c in self.labels
        ])
        return ClassOutput(self.labels, softmax(z), z)


TWO_CLUSTER_TREE = {"nodes": [
    {"id": "root", "level": 2, "parent": None},
    {"id": "L", "level": 1, "parent": "root"},
    {"id": "R", "level": 1, "parent": "root"},
    {"id": "a", "level": 0, "parent": "L", "label": "a"},
    {"id": "b", "level": 0, "parent": "L", "label": "b"},
    {"id": "c", "level": 0, "parent": "R", "label": "c"},
    {"id": "d", "level": 0, "parent": "R", "label": "d"},
]}
