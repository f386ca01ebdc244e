"""TCP client for an external encoder service.

Framing: 4-byte big-endian payload length, then a UTF-8 JSON payload.
On connect the client sends ``{"op": "hello"}`` and the server answers
``{"dim": k, "model": "..."}``; after that each request carries a u64
``id`` echoed back in its response. Image patches are resampled to
``out_size`` client-side (one documented bilinear rule for every patch)
and shipped as base64 PNG.
"""

from __future__ import annotations

import base64
import io
import json
import socket
import struct
import threading
from typing import Sequence

import numpy as np
from PIL import Image

from ..errors import EncoderUnavailable, DimMismatch, LgcaError
from ..geometry import ImageFrame, Region, extract_patch, resample_frame
from . import EmbedPatch, EmbedRequest, EmbedText, EmbeddingVector

MAX_FRAME_BYTES = 64 * 1024 * 1024


class RemoteProtocolError(LgcaError):
    """The service sent a malformed frame or reported a request error."""


def send_frame(sock: socket.socket, payload: dict) -> None:
    body = json.dumps(payload, separators=(",", ":")).encode("utf-8")
    sock.sendall(struct.pack(">I", len(body)) + body)


def recv_frame(sock: socket.socket) -> dict:
    header = _recv_exact(sock, 4)
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME_BYTES:
        raise RemoteProtocolError(f"frame of {length} bytes exceeds limit")
    body = _recv_exact(sock, length)
    try:
        return json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RemoteProtocolError(f"undecodable frame: {exc}") from exc


def _recv_exact(sock: socket.socket, size: int) -> bytes:
    buf = bytearray()
    while len(buf) < size:
        chunk = sock.recv(size - len(buf))
        if not chunk:
            raise EncoderUnavailable("connection closed mid-frame")
        buf.extend(chunk)
    return bytes(buf)


def png_b64(frame: ImageFrame) -> str:
    im = Image.fromarray(frame.to_array())
    out = io.BytesIO()
    im.save(out, format="PNG")
    return base64.b64encode(out.getvalue()).decode("ascii")


class RemoteEncoder:
    """Blocking client; thread-safe via one lock around the connection.

    Concurrent callers are serialized per handle (the contract is
    per-request isolation, not parallel flight); batches pipeline all
    writes before reading so one round of latency covers N requests.
    """

    backend = "remote"

    def __init__(self, host: str, port: int, *, out_size: int = 224, timeout: float = 30.0):
        self.host = host
        self.port = port
        self.out_size = out_size
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._dim: int | None = None
        self.model: str | None = None
        self._next_id = 0
        self._lock = threading.Lock()

    @property
    def dim(self) -> int:
        if self._dim is None:
            with self._lock:
                self._ensure_connected()
        assert self._dim is not None
        return self._dim

    def _ensure_connected(self) -> None:
        if self._sock is not None:
            return
        try:
            sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        except OSError as exc:
            raise EncoderUnavailable(
                f"cannot reach encoder at {self.host}:{self.port}: {exc}"
            ) from exc
        try:
            send_frame(sock, {"op": "hello"})
            hello = recv_frame(sock)
        except OSError as exc:
            sock.close()
            raise EncoderUnavailable(f"handshake failed: {exc}") from exc
        if "dim" not in hello:
            sock.close()
            raise RemoteProtocolError(f"handshake reply missing dim: {hello}")
        dim = int(hello["dim"])
        if self._dim is not None and dim != self._dim:
            sock.close()
            raise DimMismatch(f"service dim changed from {self._dim} to {dim}")
        self._dim = dim
        self.model = hello.get("model")
        self._sock = sock

    def close(self) -> None:
        with self._lock:
            if self._sock is not None:
                self._sock.close()
                self._sock = None

    def _request_payloads(self, items: Sequence[EmbedRequest]) -> list[dict]:
        payloads = []
        for item in items:
            self._next_id += 1
            if isinstance(item, EmbedText):
                payloads.append(
                    {"id": self._next_id, "op": "embed_text", "text": item.text}
                )
            elif isinstance(item, EmbedPatch):
                patch = self._patch_frame(item.image, item.region)
                payloads.append(
                    {
                        "id": self._next_id,
                        "op": "embed_image",
                        "png_b64": png_b64(patch),
                        "out_size": self.out_size,
                    }
                )
            else:
                raise LgcaError(f"unsupported batch item {type(item).__name__}")
        return payloads

    def _patch_frame(self, image: ImageFrame, region: Region | None) -> ImageFrame:
        if region is None:
            return resample_frame(image, self.out_size)
        return extract_patch(image, region, self.out_size)

    def _roundtrip(self, payloads: list[dict]) -> list[EmbeddingVector]:
        self._ensure_connected()
        sock = self._sock
        assert sock is not None
        try:
            for payload in payloads:
                send_frame(sock, payload)
            replies: dict[int, dict] = {}
            for _ in payloads:
                frame = recv_frame(sock)
                replies[int(frame.get("id", -1))] = frame
        except socket.timeout as exc:
            self._drop_connection()
            raise EncoderUnavailable(f"encoder timed out: {exc}") from exc
        except OSError as exc:
            self._drop_connection()
            raise EncoderUnavailable(f"encoder connection failed: {exc}") from exc

        out: list[EmbeddingVector] = []
        for index, payload in enumerate(payloads):
            reply = replies.get(payload["id"])
            if reply is None:
                raise RemoteProtocolError(
                    f"batch item {index}: no reply for request id {payload['id']}"
                )
            if "error" in reply:
                raise RemoteProtocolError(
                    f"batch item {index} (request {payload['id']}) failed: "
                    f"{reply['error']}"
                )
            vector = np.asarray(reply.get("embedding", ()), dtype=np.float64)
            declared = int(reply.get("dim", vector.size))
            if vector.size != self._dim or declared != self._dim:
                raise DimMismatch(
                    f"batch item {index}: expected dim {self._dim}, "
                    f"got {vector.size} (declared {declared})"
                )
            # defensive re-normalization: service vectors may be off unit
            out.append(EmbeddingVector.unit(vector))
        return out

    def _drop_connection(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def embed_text(self, text: str) -> EmbeddingVector:
        if not text:
            from ..errors import EmptyInput

            raise EmptyInput("cannot embed empty text")
        return self.batch_embed([EmbedText(text)])[0]

    def embed_image_patch(
        self, image: ImageFrame, region: Region | None = None
    ) -> EmbeddingVector:
        return self.batch_embed([EmbedPatch(image, region)])[0]

    def batch_embed(self, items: Sequence[EmbedRequest]) -> list[EmbeddingVector]:
        if not items:
            return []
        with self._lock:
            payloads = self._request_payloads(items)
            return self._roundtrip(payloads)
