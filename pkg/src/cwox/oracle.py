"""Classifier oracles: an in-process linear-softmax model and a remote client.

Any object with ``labels``, ``input_size`` and ``classify`` satisfies the
:class:`ModelOracle` protocol; tests and callers are free to supply their own.
The remote client speaks the model-server HTTP protocol (``GET /meta``,
``POST /classify``, ``POST /saliency``) and never invents data the server did
not send: a response without logits is rejected rather than back-filled from
probabilities, because composing compound classes needs true logits.
"""

from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
import requests

from .core import ClassOutput, CwoxError, Image, SaliencyMap, softmax
from .io import png_bytes

ENV_MODEL_URL = "CWOX_MODEL_URL"


class OracleError(CwoxError):
    """Base class for oracle failures; ``payload`` carries the server body."""

    def __init__(self, message: str, payload: object = None):
        super().__init__(message)
        self.payload = payload


class OracleNetworkError(OracleError):
    """The server could not be reached or the transport failed."""


class OracleProtocolError(OracleError):
    """The server answered with something other than the protocol."""


class OracleInvariantError(OracleError):
    """The response parsed but violates a classifier-output invariant."""


@runtime_checkable
class ModelOracle(Protocol):
    """A classifier: a label vocabulary, an expected input size, and classify."""

    @property
    def labels(self) -> tuple[str, ...]: ...

    @property
    def input_size(self) -> tuple[int, int, int]:
        """(height, width, channels) the oracle expects."""
        ...

    def classify(self, image: Image) -> ClassOutput: ...


@dataclass(frozen=True)
class SyntheticClassifier:
    """Linear-softmax classifier: logit_c = (<weights_c, x> + bias_c) / temperature.

    Its per-pixel influence on each logit is exactly its weight map, which
    gives attribution tests an analytic ground truth.
    """

    class_labels: tuple[str, ...]
    weights: np.ndarray  # (n_classes, H, W, C)
    biases: np.ndarray  # (n_classes,)
    temperature: float = 1.0

    def __post_init__(self) -> None:
        labels = tuple(self.class_labels)
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if len(labels) < 2:
            raise ValueError("synthetic classifier needs at least 2 classes")
        if len(set(labels)) != len(labels):
            raise ValueError("class labels must be distinct")
        if w.ndim != 4 or w.shape[0] != len(labels):
            raise ValueError("weights must have shape (n_classes, H, W, C)")
        if w.shape[3] not in (1, 3):
            raise ValueError("weight maps must have 1 or 3 channels")
        if b.shape != (len(labels),):
            raise ValueError("biases must align with class labels")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("weights and biases must be finite")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        object.__setattr__(self, "class_labels", labels)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)
        self.weights.flags.writeable = False
        self.biases.flags.writeable = False

    @property
    def labels(self) -> tuple[str, ...]:
        return self.class_labels

    @property
    def input_size(self) -> tuple[int, int, int]:
        return self.weights.shape[1], self.weights.shape[2], self.weights.shape[3]

    def classify(self, image: Image) -> ClassOutput:
        if image.data.shape != self.weights.shape[1:]:
            raise ValueError(
                f"image shape {image.data.shape} does not match "
                f"classifier input {self.weights.shape[1:]}"
            )
        logits = (np.tensordot(self.weights, image.data, axes=3) + self.biases) / self.temperature
        return ClassOutput(self.labels, softmax(logits), logits)


def synthetic_classify(model: SyntheticClassifier, image: Image) -> ClassOutput:
    """Functional alias for :meth:`SyntheticClassifier.classify`."""
    return model.classify(image)


def save_synthetic(path: str | Path, model: SyntheticClassifier) -> None:
    h, w, c = model.input_size
    doc = {
        "labels": list(model.labels),
        "height": h,
        "width": w,
        "channels": c,
        "weights": model.weights.tolist(),
        "biases": model.biases.tolist(),
        "temperature": model.temperature,
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_synthetic(path: str | Path) -> SyntheticClassifier:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    weights = np.asarray(doc["weights"], dtype=np.float64)
    expected = (len(doc["labels"]), doc["height"], doc["width"], doc["channels"])
    if weights.shape != expected:
        raise ValueError(f"weights shape {weights.shape} does not match header {expected}")
    return SyntheticClassifier(
        class_labels=tuple(doc["labels"]),
        weights=weights,
        biases=np.asarray(doc["biases"], dtype=np.float64),
        temperature=float(doc.get("temperature", 1.0)),
    )


class RemoteOracle:
    """HTTP client for a model server, with connection pooling.

    The endpoint defaults to the ``CWOX_MODEL_URL`` environment variable.
    Server-side float32 arithmetic is absorbed by validating classifier
    outputs at a relaxed 1e-4 tolerance.
    """

    ATOL = 1e-4

    def __init__(self, endpoint: str | None = None, *, timeout: float = 60.0,
                 session: requests.Session | None = None):
        endpoint = endpoint or os.environ.get(ENV_MODEL_URL)
        if not endpoint:
            raise ValueError(f"no endpoint given and {ENV_MODEL_URL} is not set")
        self._base = endpoint.rstrip("/")
        self._timeout = timeout
        self._session = session or requests.Session()
        self._meta: dict | None = None

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        url = self._base + path
        try:
            resp = self._session.request(method, url, json=body, timeout=self._timeout)
        except requests.RequestException as exc:
            raise OracleNetworkError(f"{method} {url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise OracleProtocolError(
                f"{method} {url} returned HTTP {resp.status_code}", payload=resp.text
            )
        try:
            doc = resp.json()
        except ValueError as exc:
            raise OracleProtocolError(f"{method} {url} returned non-JSON body",
                                      payload=resp.text) from exc
        if not isinstance(doc, dict):
            raise OracleProtocolError(f"{method} {url} returned a non-object body", payload=doc)
        return doc

    @property
    def meta(self) -> dict:
        if self._meta is None:
            doc = self._request("GET", "/meta")
            for key in ("labels", "input_height", "input_width", "channels"):
                if key not in doc:
                    raise OracleProtocolError(f"/meta response missing {key!r}", payload=doc)
            if not doc["labels"]:
                raise OracleProtocolError("/meta lists no labels", payload=doc)
            self._meta = doc
        return self._meta

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.meta["labels"])

    @property
    def input_size(self) -> tuple[int, int, int]:
        m = self.meta
        return int(m["input_height"]), int(m["input_width"]), int(m["channels"])

    def classify(self, image: Image) -> ClassOutput:
        body = {"image_png_b64": base64.b64encode(png_bytes(image)).decode("ascii")}
        doc = self._request("POST", "/classify", body)
        if "probabilities" not in doc:
            raise OracleProtocolError("/classify response missing probabilities", payload=doc)
        if "logits" not in doc:
            # Deriving logits from probabilities would lose the additive
            # constant that compound-class logits depend on; refuse instead.
            raise OracleProtocolError("/classify response missing logits", payload=doc)
        labels = self.labels
        probs = np.asarray(doc["probabilities"], dtype=np.float64)
        logits = np.asarray(doc["logits"], dtype=np.float64)
        if probs.shape != (len(labels),) or logits.shape != (len(labels),):
            raise OracleProtocolError(
                f"/classify arrays do not align with the {len(labels)} labels in /meta",
                payload=doc,
            )
        try:
            return ClassOutput(labels, probs, logits, atol=self.ATOL)
        except ValueError as exc:
            raise OracleInvariantError(f"/classify output invalid: {exc}", payload=doc) from exc

    def saliency(self, image: Image, targets: Sequence[Sequence[str] | frozenset[str]],
                 explainer: str = "gradcam", params: dict | None = None) -> list[SaliencyMap]:
        """Request one server-side saliency map per target label set."""
        vocab = set(self.labels)
        norm_targets: list[list[str]] = []
        for target in targets:
            tset = sorted(target) if isinstance(target, (set, frozenset)) else list(target)
            if not tset:
                raise ValueError("saliency targets must be non-empty")
            unknown = [t for t in tset if t not in vocab]
            if unknown:
                raise ValueError(f"unknown labels in saliency target: {unknown}")
            norm_targets.append(tset)
        body = {
            "image_png_b64": base64.b64encode(png_bytes(image)).decode("ascii"),
            "targets": norm_targets,
            "explainer": explainer,
            "params": params or {},
        }
        doc = self._request("POST", "/saliency", body)
        if "maps" not in doc or not isinstance(doc["maps"], list):
            raise OracleProtocolError("/saliency response missing maps", payload=doc)
        if len(doc["maps"]) != len(norm_targets):
            raise OracleProtocolError(
                f"/saliency returned {len(doc['maps'])} maps for {len(norm_targets)} targets",
                payload=doc,
            )
        maps = []
        for entry in doc["maps"]:
            try:
                h, w = int(entry["height"]), int(entry["width"])
                data = np.asarray(entry["data"], dtype=np.float64).reshape(h, w)
            except (KeyError, TypeError, ValueError) as exc:
                raise OracleProtocolError(f"/saliency map entry invalid: {exc}",
                                          payload=entry) from exc
            if not np.all(np.isfinite(data)):
                raise OracleInvariantError("/saliency map contains non-finite values",
                                           payload=entry)
            maps.append(SaliencyMap(data))
        return maps


def remote_classify(endpoint: str, image: Image) -> ClassOutput:
    return RemoteOracle(endpoint).classify(image)


def remote_saliency(endpoint: str, image: Image,
                    targets: Sequence[Sequence[str] | frozenset[str]],
                    explainer: str = "gradcam",
                    params: dict | None = None) -> list[SaliencyMap]:
    return RemoteOracle(endpoint).saliency(image, targets, explainer, params)
