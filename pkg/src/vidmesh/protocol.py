"""Wire protocol connecting the engine to model backends.

Transport is newline-delimited UTF-8 JSON: one envelope per line, one
response per request, matching ``request_id``. The same JSON bodies travel
over a child process's standard streams (the normative transport) or as
HTTP POST bodies, one envelope per request. Frame indices on the wire are
0-based.

Envelope layout::

    {"body": {...}, "request_id": 0, "type": "hello", "version": 1}

Keys are serialized sorted with compact separators, so a given envelope has
exactly one byte representation; golden transcripts rely on this. Binary
payloads are base64: images as PNG, soft masks as row-major float16 grids.
Binary masks cross the wire in the run-length layout from
:mod:`vidmesh.masks` as ``{"counts": [...], "height": H, "width": W}``.

Message catalog (request -> response):

    hello         -> hello_ack      backend handshake (kind, layout, capabilities)
    seg_start     -> seg_start_ack  open a segmentation session
    seg_frame     -> seg_frame_result   per-frame masks in prompt order
    complete_pass -> complete_result    full-video mask completion for one human
    recover_clip  -> recover_result     pixel recovery for one occlusion interval
    hmr_batch     -> hmr_result         mesh parameters for a padded slot batch
    error                           terminal failure for the request
"""

from __future__ import annotations

import base64
import io
import json
import math
import subprocess
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from PIL import Image

from .core import ParamLayout, RleMask
from .errors import (
    BackendProtocolError,
    BackendUnavailable,
    MalformedJson,
    UnencodableValue,
    UnknownType,
    VersionMismatch,
)
from .masks import ProbMask, validate_rle

PROTOCOL_VERSION = 1

REQUEST_RESPONSE = {
    "hello": "hello_ack",
    "seg_start": "seg_start_ack",
    "seg_frame": "seg_frame_result",
    "complete_pass": "complete_result",
    "recover_clip": "recover_result",
    "hmr_batch": "hmr_result",
}

MESSAGE_TYPES = frozenset(REQUEST_RESPONSE) | frozenset(REQUEST_RESPONSE.values()) | {"error"}

BACKEND_KINDS = ("segmentation", "completion", "hmr")


@dataclass(frozen=True)
class Envelope:
    type: str
    request_id: int
    version: int
    body: dict


@dataclass(frozen=True)
class HandshakeInfo:
    backend_kind: str
    param_layout: Optional[ParamLayout] = None
    capabilities: tuple[str, ...] = ()

    def __post_init__(self):
        if self.backend_kind not in BACKEND_KINDS:
            raise ValueError(f"unknown backend kind {self.backend_kind!r}")
        if self.backend_kind == "hmr" and self.param_layout is None:
            raise ValueError("hmr handshake requires a param_layout")

    def to_json(self) -> dict:
        body = {
            "backend_kind": self.backend_kind,
            "capabilities": sorted(self.capabilities),
        }
        if self.param_layout is not None:
            body["param_layout"] = self.param_layout.to_json()
        return body

    @classmethod
    def from_json(cls, obj: dict) -> "HandshakeInfo":
        layout = obj.get("param_layout")
        return cls(
            backend_kind=obj["backend_kind"],
            param_layout=ParamLayout.from_json(layout) if layout else None,
            capabilities=tuple(obj.get("capabilities", ())),
        )


def _check_finite(value, path="body"):
    if isinstance(value, float):
        if not math.isfinite(value):
            raise UnencodableValue(f"non-finite float at {path}")
    elif isinstance(value, dict):
        for k, v in value.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            _check_finite(v, f"{path}[{i}]")


def encode_message(env: Envelope) -> bytes:
    """Serialize an envelope to its single canonical line of UTF-8 JSON."""
    if env.type not in MESSAGE_TYPES:
        raise UnknownType(f"unknown message type {env.type!r}")
    if env.version != PROTOCOL_VERSION:
        raise VersionMismatch(f"version {env.version} != {PROTOCOL_VERSION}")
    _check_finite(env.body)
    obj = {
        "body": env.body,
        "request_id": int(env.request_id),
        "type": env.type,
        "version": env.version,
    }
    try:
        text = json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
    except ValueError as exc:
        raise UnencodableValue(str(exc)) from exc
    return text.encode("utf-8") + b"\n"


def decode_message(data: bytes | str) -> Envelope:
    """Parse one complete line back into an envelope, strictly."""
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="strict")
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"invalid JSON line: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedJson("envelope is not an object")
    extra = set(obj) - {"type", "request_id", "version", "body"}
    missing = {"type", "request_id", "version", "body"} - set(obj)
    if extra or missing:
        raise MalformedJson(f"bad envelope keys (missing={sorted(missing)}, extra={sorted(extra)})")
    if not isinstance(obj["type"], str) or obj["type"] not in MESSAGE_TYPES:
        raise UnknownType(f"unknown message type {obj['type']!r}")
    if obj["version"] != PROTOCOL_VERSION:
        raise VersionMismatch(f"version {obj['version']!r} != {PROTOCOL_VERSION}")
    if not isinstance(obj["request_id"], int) or isinstance(obj["request_id"], bool) or obj["request_id"] < 0:
        raise MalformedJson("request_id must be a non-negative integer")
    if not isinstance(obj["body"], dict):
        raise MalformedJson("body must be an object")
    return Envelope(type=obj["type"], request_id=obj["request_id"], version=obj["version"], body=obj["body"])


# ---------------------------------------------------------------------------
# payload codecs


def rle_to_wire(mask: RleMask) -> dict:
    return {"width": mask.width, "height": mask.height, "counts": list(mask.counts)}


def rle_from_wire(obj: dict) -> RleMask:
    mask = RleMask(width=int(obj["width"]), height=int(obj["height"]), counts=tuple(obj["counts"]))
    validate_rle(mask)
    return mask


def prob_to_wire(mask: ProbMask) -> dict:
    data = np.ascontiguousarray(mask.values, dtype=np.float16).tobytes()
    return {
        "width": mask.width,
        "height": mask.height,
        "data": base64.b64encode(data).decode("ascii"),
    }


def prob_from_wire(obj: dict) -> ProbMask:
    width, height = int(obj["width"]), int(obj["height"])
    raw = base64.b64decode(obj["data"])
    values = np.frombuffer(raw, dtype=np.float16).astype(np.float64).reshape(height, width)
    return ProbMask(width=width, height=height, values=np.clip(values, 0.0, 1.0))


def mask_to_wire(mask: RleMask | ProbMask | None) -> Optional[dict]:
    if mask is None:
        return None
    if isinstance(mask, RleMask):
        return {"rle": rle_to_wire(mask)}
    return {"prob": prob_to_wire(mask)}


def mask_from_wire(obj: Optional[dict]) -> RleMask | ProbMask | None:
    if obj is None:
        return None
    if "rle" in obj:
        return rle_from_wire(obj["rle"])
    if "prob" in obj:
        return prob_from_wire(obj["prob"])
    raise MalformedJson("mask payload must carry 'rle' or 'prob'")


def image_to_wire(image: np.ndarray) -> dict:
    arr = np.asarray(image, dtype=np.uint8)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return {"png": base64.b64encode(buf.getvalue()).decode("ascii")}


def image_from_wire(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["png"])
    with Image.open(io.BytesIO(raw)) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


# ---------------------------------------------------------------------------
# client connections (one in-flight request per connection)


class Connection:
    """Request/response client over some line transport."""

    def __init__(self):
        self._next_id = 0
        self._lock = threading.Lock()

    def _send_line(self, line: bytes) -> bytes:
        raise NotImplementedError

    def request(self, msg_type: str, body: dict) -> dict:
        """Send one request and return the matching response body.

        An ``error`` response raises BackendProtocolError with its code.
        """
        with self._lock:
            request_id = self._next_id
            self._next_id += 1
            line = encode_message(Envelope(msg_type, request_id, PROTOCOL_VERSION, body))
            reply = self._send_line(line)
        env = decode_message(reply)
        if env.request_id != request_id:
            raise BackendProtocolError(
                f"response id {env.request_id} does not match request {request_id}"
            )
        if env.type == "error":
            raise BackendProtocolError(
                env.body.get("message", "backend error"), code=env.body.get("code")
            )
        expected = REQUEST_RESPONSE[msg_type]
        if env.type != expected:
            raise BackendProtocolError(f"expected {expected}, got {env.type}")
        return env.body

    def close(self) -> None:
        pass


class InProcessConnection(Connection):
    """Dispatches through a server handler in this process, still passing
    through the byte codec so behavior matches the real transports. With a
    tape attached it records the exact request/response lines."""

    def __init__(self, handler: Callable[[bytes], bytes], tape: Optional[list[bytes]] = None):
        super().__init__()
        self._handler = handler
        self.tape = tape

    def _send_line(self, line: bytes) -> bytes:
        reply = self._handler(line)
        if self.tape is not None:
            self.tape.append(line)
            self.tape.append(reply)
        return reply


class StdioConnection(Connection):
    """Talks to a child process over its standard streams."""

    def __init__(self, command: list[str]):
        super().__init__()
        try:
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
            )
        except OSError as exc:
            raise BackendUnavailable(f"cannot spawn backend {command!r}: {exc}") from exc

    def _send_line(self, line: bytes) -> bytes:
        if self._proc.poll() is not None:
            raise BackendUnavailable(f"backend exited with code {self._proc.returncode}")
        try:
            self._proc.stdin.write(line)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BackendUnavailable(f"backend pipe closed: {exc}") from exc
        reply = self._proc.stdout.readline()
        if not reply:
            raise BackendUnavailable("backend closed its stdout")
        return reply

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=3)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()


class HttpConnection(Connection):
    """POSTs one envelope per request body to a single endpoint."""

    def __init__(self, url: str, timeout: float = 30.0):
        super().__init__()
        self._url = url
        self._timeout = timeout

    def _send_line(self, line: bytes) -> bytes:
        req = urllib.request.Request(
            self._url, data=line, headers={"Content-Type": "application/json"}, method="POST"
        )
        try:
            with urllib.request.urlopen(req, timeout=self._timeout) as resp:
                return resp.read()
        except urllib.error.URLError as exc:
            raise BackendUnavailable(f"HTTP backend unreachable: {exc}") from exc


# ---------------------------------------------------------------------------
# server side


class RequestFailure(BackendProtocolError):
    """Raised by a backend to fail one request with a protocol error code.

    Server dispatchers turn it into an error envelope; in-process callers
    see it as a BackendProtocolError directly.
    """

    def __init__(self, code: str, message: str):
        super().__init__(message, code=code)


def make_line_handler(dispatch: Callable[[Envelope], tuple[str, dict]]) -> Callable[[bytes], bytes]:
    """Wrap an envelope dispatcher into a bytes-in/bytes-out line handler
    shared by the stdio, HTTP, and in-process transports."""

    def handle(line: bytes) -> bytes:
        request_id = 0
        try:
            env = decode_message(line)
            request_id = env.request_id
            rtype, body = dispatch(env)
            return encode_message(Envelope(rtype, request_id, PROTOCOL_VERSION, body))
        except RequestFailure as exc:
            return encode_message(
                Envelope("error", request_id, PROTOCOL_VERSION, {"code": exc.code, "message": str(exc)})
            )
        except (MalformedJson, UnknownType, VersionMismatch) as exc:
            return encode_message(
                Envelope(
                    "error",
                    request_id,
                    PROTOCOL_VERSION,
                    {"code": "bad_request", "message": str(exc)},
                )
            )

    return handle


def serve_stdio(handler: Callable[[bytes], bytes], stdin=None, stdout=None) -> None:
    """Answer newline-delimited requests until stdin closes."""
    import sys

    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(handler(line))
        stdout.flush()


def serve_http(handler: Callable[[bytes], bytes], port: int, ready_event=None):
    """Serve envelopes over HTTP POST. Returns the bound server object."""
    from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            reply = handler(self.rfile.read(length))
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(reply)))
            self.end_headers()
            self.wfile.write(reply)

        def log_message(self, fmt, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", port), Handler)
    if ready_event is not None:
        ready_event.set()
    return server
