"""Shared fixtures: tiny images, linear classifiers, and a mock model server."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from cwox.core import Image
from cwox.oracle import SyntheticClassifier


def make_image(h=8, w=8, channels=1, value=None, seed=None):
    if value is not None:
        return Image(np.full((h, w, channels), float(value)))
    rng = np.random.default_rng(seed if seed is not None else 0)
    return Image(rng.random((h, w, channels)))


def left_right_classifier(h=8, w=8, temperature=4.0):
    """Two classes: 'a' weighs the left half, 'b' the right half."""
    wa = np.zeros((h, w, 1))
    wb = np.zeros((h, w, 1))
    wa[:, : w // 2, 0] = 1.0
    wb[:, w // 2 :, 0] = 1.0
    return SyntheticClassifier(
        class_labels=("a", "b"),
        weights=np.stack([wa, wb]),
        biases=np.zeros(2),
        temperature=temperature,
    )


class _MockHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):  # keep test output quiet
        pass

    def _send(self, status: int, body) -> None:
        payload = body if isinstance(body, bytes) else json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_GET(self):
        self.server.requests.append(("GET", self.path, None))
        response = self.server.responses.get(("GET", self.path))
        if response is None:
            self._send(404, {"error": "not found"})
        else:
            self._send(*response)

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length)) if length else None
        self.server.requests.append(("POST", self.path, body))
        response = self.server.responses.get(("POST", self.path))
        if response is None:
            self._send(404, {"error": "not found"})
        else:
            self._send(*response)


class MockServer:
    """A tiny HTTP server whose responses tests configure per (method, path)."""

    def __init__(self):
        self._httpd = HTTPServer(("127.0.0.1", 0), _MockHandler)
        self._httpd.responses = {}
        self._httpd.requests = []
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}"

    @property
    def requests(self):
        return self._httpd.requests

    def respond(self, method: str, path: str, body, status: int = 200) -> None:
        self._httpd.responses[(method, path)] = (status, body)

    def set_meta(self, labels, h=4, w=4, channels=1) -> None:
        self.respond("GET", "/meta", {
            "labels": list(labels), "input_height": h, "input_width": w, "channels": channels,
        })

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture
def mock_server():
    server = MockServer()
    yield server
    server.close()
