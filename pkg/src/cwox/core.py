"""Core value types and pixel-level primitives shared by every other module.

Everything here is an immutable value: the wrapped numpy arrays are copied on
construction and marked read-only, so instances can be shared freely across
threads. All operations are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class CwoxError(Exception):
    """Base class for errors raised by this package."""


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over a 1-D logit vector."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = arr.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Image:
    """An H x W x C image with values in [0, 1], row-major, channel-interleaved.

    ``data`` may be passed as (H, W) for grayscale; it is stored as (H, W, 1).
    Only 1- and 3-channel images are supported.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise ValueError(f"image data must be 2-D or 3-D, got {arr.ndim}-D")
        if arr.shape[2] not in (1, 3):
            raise ValueError(f"image must have 1 or 3 channels, got {arr.shape[2]}")
        if arr.size == 0:
            raise ValueError("image must be non-empty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image values must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class SaliencyMap:
    """An H x W grid of finite per-pixel importance values.

    Maps may be at any resolution; base explainers often emit grids coarser
    than the image. Use :func:`upsample` before ranking image pixels.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"saliency map must be 2-D, got {arr.ndim}-D")
        if arr.size == 0:
            raise ValueError("saliency map must be non-empty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("saliency map values must be finite")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ClassOutput:
    """A classifier's whole output: aligned labels, probabilities and logits.

    Probabilities must sum to 1 and be the softmax of the logits, both within
    ``atol``. The default tolerance suits in-process float64 classifiers; the
    remote client relaxes it to absorb server-side float32 rounding.
    """

    labels: tuple[str, ...]
    probabilities: np.ndarray
    logits: np.ndarray
    atol: float = field(default=1e-6, repr=False, compare=False)

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        probs = np.asarray(self.probabilities, dtype=np.float64)
        logits = np.asarray(self.logits, dtype=np.float64)
        if len(labels) == 0:
            raise ValueError("class output must cover at least one label")
        if len(set(labels)) != len(labels):
            raise ValueError("labels must be distinct")
        if probs.shape != (len(labels),) or logits.shape != (len(labels),):
            raise ValueError("probabilities and logits must align with labels")
        if not np.all(np.isfinite(logits)):
            raise ValueError("logits must be finite")
        if probs.min() < 0.0 or probs.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(probs.sum() - 1.0) > self.atol:
            raise ValueError(f"probabilities sum to {probs.sum()}, not 1")
        if np.max(np.abs(softmax(logits) - probs)) > self.atol:
            raise ValueError("probabilities are not the softmax of the logits")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "probabilities", _freeze(probs))
        object.__setattr__(self, "logits", _freeze(logits))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"unknown label {label!r}") from None

    def probability(self, label: str) -> float:
        return float(self.probabilities[self.index(label)])

    def logit(self, label: str) -> float:
        return float(self.logits[self.index(label)])


@dataclass(frozen=True)
class TopKSelection:
    """The top output labels of one classification, best first."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        if len(labels) == 0:
            raise ValueError("top-k selection must contain at least one label")
        if len(set(labels)) != len(labels):
            raise ValueError("top-k labels must be distinct")
        object.__setattr__(self, "labels", labels)

    @property
    def k(self) -> int:
        return len(self.labels)

    @property
    def label_set(self) -> frozenset[str]:
        return frozenset(self.labels)


def upsample(map_: SaliencyMap, target_h: int, target_w: int) -> SaliencyMap:
    """Bilinearly resample a saliency map to the target resolution.

    Uses the half-pixel-centre (align-corners=false) convention with edge
    clamping, so outputs are convex combinations of input values and stay
    within the input's [min, max] range.
    """
    if target_h < 1 or target_w < 1:
        raise ValueError("target dimensions must be at least 1x1")
    src = map_.data
    h, w = src.shape
    ys = (np.arange(target_h) + 0.5) * (h / target_h) - 0.5
    xs = (np.arange(target_w) + 0.5) * (w / target_w) - 0.5
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    ty = ys - y0
    tx = xs - x0
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    top = (1.0 - tx)[np.newaxis, :] * src[np.ix_(y0c, x0c)] + tx[np.newaxis, :] * src[np.ix_(y0c, x1c)]
    bot = (1.0 - tx)[np.newaxis, :] * src[np.ix_(y1c, x0c)] + tx[np.newaxis, :] * src[np.ix_(y1c, x1c)]
    out = (1.0 - ty)[:, np.newaxis] * top + ty[:, np.newaxis] * bot
    return SaliencyMap(out)


def pixel_order(map_: SaliencyMap) -> np.ndarray:
    """Row-major pixel indices sorted by descending saliency.

    Ties keep ascending row-major index order, so the ranking is fully
    deterministic and deletion metrics are reproducible.
    """
    flat = map_.data.ravel()
    return np.argsort(-flat, kind="stable")


def select_top_k(out: ClassOutput, k_cap: int = 5, mass: float = 0.95) -> TopKSelection:
    """Select the top labels: the smallest prefix whose cumulative probability
    strictly exceeds ``mass``, capped at ``k_cap`` labels.

    Equal probabilities keep the classifier's label order. ``mass=1.0``
    degenerates to a fixed top-``k_cap`` selection, since a cumulative
    probability can never strictly exceed 1.
    """
    if k_cap < 1:
        raise ValueError("k_cap must be at least 1")
    if not 0.0 < mass <= 1.0:
        raise ValueError("mass must lie in (0, 1]")
    order = np.argsort(-out.probabilities, kind="stable")
    cum = np.cumsum(out.probabilities[order])
    over = np.nonzero(cum > mass)[0]
    needed = int(over[0]) + 1 if over.size else len(order)
    k = max(1, min(k_cap, needed))
    return TopKSelection(tuple(out.labels[i] for i in order[:k]))
