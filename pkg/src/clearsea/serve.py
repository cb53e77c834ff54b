"""HTTP inference service.

A thin façade over the library: every enhancement goes through the same
encode / blend / decode path as the command line, so the PNG bytes for a
given image and alpha are identical in both places.

Endpoints (all responses carry ``Access-Control-Allow-Origin: *``):

- ``POST /api/upload?domain=SYN|REAL`` with a PNG or JPEG body.  Decodes
  the image, runs the encoders once, and caches the content map plus the
  style and clean-style latents under a fresh unguessable token.
  Replies ``{"token", "width", "height", "domain"}``.  An undecodable
  body is 415; a body over ``MAX_BODY_BYTES`` or an image whose longest
  side exceeds the configured limit is 413; an image the model cannot
  take (too small, sides not divisible by 4) is 422.
- ``GET /api/enhance?token=...&alpha=...`` renders the cached upload at
  the given enhancement level (default 1.0, accepted range [-0.5, 1.5])
  and returns PNG bytes.  Unknown token is 404; a malformed or
  out-of-range alpha is 422.  The decode is deterministic, so repeated
  identical requests return identical bytes.
- ``GET /api/latents?token=...`` returns the upload's style and
  clean-style vectors as JSON.  Values are serialized by Python's
  shortest-round-trip float repr, so the reals survive the trip at full
  precision.
- ``GET /api/health`` returns ``{"checkpoint_id", "model_config_hash"}``
  identifying exactly which weights are loaded.

Uploads live in a least-recently-used cache of ``cache_size`` entries;
the oldest upload is dropped when a new one would exceed the bound, and
its token then answers 404.  Rendered PNGs are memoized per upload (at
most ``RESULT_CACHE`` levels) purely as a speedup.  With ``static_dir``
set, anything outside ``/api/`` is served from that directory, which is
how the bundled browser UI is mounted.
"""
from __future__ import annotations

import hashlib
import json
import math
import mimetypes
import os
import secrets
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlsplit

import numpy as np

from . import imageio, latentlab, trainer
from .errors import DataError
from .model import REAL, SYN, EnhancementModel, StyleLatent

MAX_BODY_BYTES = 32 << 20
RESULT_CACHE = 64


@dataclass(frozen=True)
class ServiceConfig:
    checkpoint: str
    host: str = "127.0.0.1"
    port: int = 8765
    static_dir: str | None = None
    cache_size: int = 16
    max_side: int = 1024
    verbose: bool = False


@dataclass
class Upload:
    domain: str
    width: int
    height: int
    content: np.ndarray
    style: StyleLatent
    clean_style: StyleLatent
    results: OrderedDict = field(default_factory=OrderedDict)  # alpha -> png bytes


class ServiceState:
    """Model plus the upload cache; shared by all request threads."""

    def __init__(self, model: EnhancementModel, checkpoint_id: str, model_config_hash: str, cfg: ServiceConfig):
        self.model = model
        self.checkpoint_id = checkpoint_id
        self.model_config_hash = model_config_hash
        self.cfg = cfg
        self.uploads: OrderedDict[str, Upload] = OrderedDict()
        self.lock = threading.Lock()

    def put(self, upload: Upload) -> str:
        token = secrets.token_hex(16)
        with self.lock:
            self.uploads[token] = upload
            while len(self.uploads) > self.cfg.cache_size:
                self.uploads.popitem(last=False)
        return token

    def get(self, token: str) -> Upload | None:
        with self.lock:
            upload = self.uploads.get(token)
            if upload is not None:
                self.uploads.move_to_end(token)
            return upload


def build_state(cfg: ServiceConfig) -> ServiceState:
    model, meta = trainer.load_model_from_checkpoint(cfg.checkpoint)
    with open(cfg.checkpoint, "rb") as fh:
        checkpoint_id = hashlib.sha256(fh.read()).hexdigest()[:16]
    config_json = json.dumps(meta["train_config"]["model"], sort_keys=True)
    model_config_hash = hashlib.sha256(config_json.encode()).hexdigest()[:16]
    return ServiceState(model, checkpoint_id, model_config_hash, cfg)


def render(state: ServiceState, token: str, alpha: float) -> bytes | None:
    """PNG bytes for a cached upload at one enhancement level."""
    upload = state.get(token)
    if upload is None:
        return None
    with state.lock:
        if alpha in upload.results:
            upload.results.move_to_end(alpha)
            return upload.results[alpha]
    blended = latentlab.manipulate_style(upload.style, upload.clean_style, alpha)
    image = state.model.decode(upload.content, blended)
    data = imageio.encode_rgb(image)
    with state.lock:
        upload.results[alpha] = data
        while len(upload.results) > RESULT_CACHE:
            upload.results.popitem(last=False)
    return data


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    # -- plumbing ------------------------------------------------------

    @property
    def state(self) -> ServiceState:
        return self.server.state

    def log_message(self, fmt, *args):
        if self.state.cfg.verbose:
            super().log_message(fmt, *args)

    def _send(self, status: int, content_type: str, body: bytes, extra: dict | None = None) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        for key, value in (extra or {}).items():
            self.send_header(key, value)
        self.end_headers()
        self.wfile.write(body)

    def _json(self, status: int, obj) -> None:
        self._send(status, "application/json", json.dumps(obj).encode())

    def _fail(self, status: int, message: str) -> None:
        self._json(status, {"error": message})

    # -- routing ---------------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Max-Age", "600")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_POST(self):
        if urlsplit(self.path).path == "/api/upload":
            self._upload()
        else:
            self._fail(404, "no such endpoint")

    def do_GET(self):
        parts = urlsplit(self.path)
        if parts.path == "/api/enhance":
            self._enhance(parse_qs(parts.query))
        elif parts.path == "/api/latents":
            self._latents(parse_qs(parts.query))
        elif parts.path == "/api/health":
            self._json(200, {
                "checkpoint_id": self.state.checkpoint_id,
                "model_config_hash": self.state.model_config_hash,
            })
        elif parts.path.startswith("/api/"):
            self._fail(404, "no such endpoint")
        else:
            self._static(unquote(parts.path))

    # -- endpoint bodies ---------------------------------------------------

    def _upload(self):
        query = parse_qs(urlsplit(self.path).query)
        domain = query.get("domain", [SYN])[0]
        if domain not in (SYN, REAL):
            # replying before the body is read, so the connection cannot be reused
            self.close_connection = True
            payload = json.dumps({"error": f"domain must be {SYN} or {REAL}"}).encode()
            self._send(422, "application/json", payload, extra={"Connection": "close"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            length = -1
        if length <= 0:
            self._fail(415, "empty or unreadable request body")
            return
        if length > MAX_BODY_BYTES:
            # body is never read, so the connection cannot be reused
            self.close_connection = True
            payload = json.dumps({"error": f"body exceeds {MAX_BODY_BYTES} bytes"}).encode()
            self._send(413, "application/json", payload, extra={"Connection": "close"})
            return
        body = self.rfile.read(length)
        try:
            image = imageio.decode_rgb(body)
        except DataError as exc:
            self._fail(415, str(exc))
            return
        h, w = image.shape[:2]
        if max(h, w) > self.state.cfg.max_side:
            self._fail(413, f"image side {max(h, w)} exceeds limit {self.state.cfg.max_side}")
            return
        model = self.state.model
        try:
            content = model.encode_content(image)
            style = model.encode_style(image, domain)
        except ValueError as exc:
            self._fail(422, str(exc))
            return
        clean = model.transform_style(style)
        token = self.state.put(Upload(domain, w, h, content, style, clean))
        self._json(200, {"token": token, "width": w, "height": h, "domain": domain})

    def _enhance(self, query: dict):
        token = query.get("token", [None])[0]
        if not token:
            self._fail(422, "token query parameter is required")
            return
        raw_alpha = query.get("alpha", ["1.0"])[0]
        try:
            alpha = float(raw_alpha)
        except ValueError:
            self._fail(422, f"alpha is not a number: {raw_alpha!r}")
            return
        if not math.isfinite(alpha) or not -0.5 <= alpha <= 1.5:
            self._fail(422, f"alpha {raw_alpha} outside [-0.5, 1.5]")
            return
        data = render(self.state, token, alpha)
        if data is None:
            self._fail(404, "unknown or expired token")
            return
        self._send(200, "image/png", data)

    def _latents(self, query: dict):
        token = query.get("token", [None])[0]
        if not token:
            self._fail(422, "token query parameter is required")
            return
        upload = self.state.get(token)
        if upload is None:
            self._fail(404, "unknown or expired token")
            return
        self._json(200, {
            "domain": upload.domain,
            "style": [float(v) for v in upload.style.vector],
            "clean_style": [float(v) for v in upload.clean_style.vector],
        })

    def _static(self, path: str):
        root = self.state.cfg.static_dir
        if root is None:
            self._fail(404, "no such endpoint")
            return
        rel = path.lstrip("/") or "index.html"
        full = os.path.realpath(os.path.join(root, rel))
        if os.path.isdir(full):
            full = os.path.join(full, "index.html")
        # refuse anything that escapes the static root
        if os.path.commonpath([full, os.path.realpath(root)]) != os.path.realpath(root):
            self._fail(404, "not found")
            return
        if not os.path.isfile(full):
            self._fail(404, "not found")
            return
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as fh:
            self._send(200, ctype, fh.read())


def make_server(cfg: ServiceConfig) -> ThreadingHTTPServer:
    state = build_state(cfg)
    server = ThreadingHTTPServer((cfg.host, cfg.port), _Handler)
    server.daemon_threads = True
    server.state = state
    return server


def run(cfg: ServiceConfig) -> None:
    server = make_server(cfg)
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port}/ (checkpoint {server.state.checkpoint_id})", flush=True)
    try:
        server.serve_forever()
    finally:
        server.server_close()
