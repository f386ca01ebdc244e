"""Length-prefixed JSON framing, server side.

Frames are a 4-byte big-endian payload length followed by UTF-8 JSON.
The client opens with {"op": "hello"}; every other request carries a u64
"id" that the response must echo.
"""

from __future__ import annotations

import json
import socket
import struct

MAX_FRAME_BYTES = 64 * 1024 * 1024


class FrameError(Exception):
    """Unrecoverable framing problem; the connection should be closed."""


class PeerClosed(Exception):
    """The peer closed the connection cleanly between frames."""


def send_frame(sock: socket.socket, payload: dict) -> None:
    body = json.dumps(payload, separators=(",", ":")).encode("utf-8")
    sock.sendall(struct.pack(">I", len(body)) + body)


def recv_frame(sock: socket.socket) -> dict:
    header = _recv_exact(sock, 4, eof_ok=True)
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME_BYTES:
        raise FrameError(f"frame of {length} bytes exceeds limit")
    body = _recv_exact(sock, length, eof_ok=False)
    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameError(f"undecodable frame: {exc}") from exc
    if not isinstance(payload, dict):
        raise FrameError("frame payload must be a JSON object")
    return payload


def _recv_exact(sock: socket.socket, size: int, *, eof_ok: bool) -> bytes:
    buf = bytearray()
    while len(buf) < size:
        chunk = sock.recv(size - len(buf))
        if not chunk:
            if eof_ok and not buf:
                raise PeerClosed()
            raise FrameError("connection closed mid-frame")
        buf.extend(chunk)
    return bytes(buf)
