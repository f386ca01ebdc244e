"""Threaded TCP encoder service.

One reader thread per connection; all inference funnels through a single
batch queue so the model sees batched calls while each request keeps its
own reply routing. Replies are written under a per-connection lock, so
concurrent hello/inference replies never interleave bytes within a
frame. Malformed JSON closes the connection; well-formed requests with
bad content get an error response carrying their id.
"""

from __future__ import annotations

import base64
import io
import logging
import queue
import socket
import threading
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .protocol import FrameError, PeerClosed, recv_frame, send_frame

log = logging.getLogger("lgca_sidecar")

QUEUE_STOP = object()


@dataclass
class _Job:
    payload: dict
    sock: socket.socket
    write_lock: threading.Lock
    kind: str = ""
    data: object = None
    error: str | None = None
    reply: dict = field(default_factory=dict)


class EncoderServer:
    def __init__(
        self,
        backend,
        host: str = "127.0.0.1",
        port: int = 0,
        batch_size: int = 8,
    ):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.backend = backend
        self.batch_size = batch_size
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(64)
        self.host, self.port = self._sock.getsockname()
        self._queue: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    # -- lifecycle ------------------------------------------------------

    def start(self) -> None:
        """Run accept loop and inference worker in background threads."""
        for target in (self._accept_loop, self._inference_loop):
            thread = threading.Thread(target=target, daemon=True)
            thread.start()
            self._threads.append(thread)

    def serve_forever(self) -> None:
        self.start()
        try:
            self._stop.wait()
        except KeyboardInterrupt:
            pass
        finally:
            self.shutdown()

    def shutdown(self) -> None:
        self._stop.set()
        self._queue.put(QUEUE_STOP)
        try:
            self._sock.close()
        except OSError:
            pass

    # -- connection handling --------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, addr = self._sock.accept()
            except OSError:
                return
            thread = threading.Thread(
                target=self._serve_connection, args=(conn, addr), daemon=True
            )
            thread.start()

    def _serve_connection(self, conn: socket.socket, addr) -> None:
        write_lock = threading.Lock()
        try:
            while not self._stop.is_set():
                try:
                    payload = recv_frame(conn)
                except PeerClosed:
                    return
                except FrameError as exc:
                    log.warning("closing %s: %s", addr, exc)
                    return
                self._dispatch(payload, conn, write_lock)
        except OSError:
            return
        finally:
            conn.close()

    def _dispatch(self, payload: dict, conn: socket.socket, write_lock) -> None:
        op = payload.get("op")
        if op == "hello":
            with write_lock:
                send_frame(
                    conn, {"dim": self.backend.dim, "model": self.backend.model_name}
                )
            return

        request_id = payload.get("id")
        if not isinstance(request_id, int):
            with write_lock:
                send_frame(conn, {"id": 0, "error": "request is missing an integer id"})
            return

        job = _Job(payload=payload, sock=conn, write_lock=write_lock)
        if op == "embed_text":
            text = payload.get("text")
            if not isinstance(text, str) or not text:
                job.error = "embed_text needs a non-empty text field"
            else:
                job.kind, job.data = "text", text
        elif op == "embed_image":
            try:
                raw = base64.b64decode(payload.get("png_b64", ""), validate=True)
                with Image.open(io.BytesIO(raw)) as im:
                    rgb = im.convert("RGB")
                    out_size = payload.get("out_size")
                    if isinstance(out_size, int) and out_size >= 1:
                        rgb = rgb.resize((out_size, out_size), Image.BILINEAR)
                    job.kind, job.data = "image", np.asarray(rgb, dtype=np.uint8)
            except Exception as exc:
                job.error = f"cannot decode image: {exc}"
        else:
            job.error = f"unknown op {op!r}"

        if job.error is not None:
            self._send_reply(job, {"id": request_id, "error": job.error})
            return
        self._queue.put(job)

    def _send_reply(self, job: _Job, payload: dict) -> None:
        try:
            with job.write_lock:
                send_frame(job.sock, payload)
        except OSError:
            pass  # peer went away; nothing to do

    # -- inference -------------------------------------------------------

    def _inference_loop(self) -> None:
        while True:
            first = self._queue.get()
            if first is QUEUE_STOP:
                return
            batch = [first]
            while len(batch) < self.batch_size:
                try:
                    nxt = self._queue.get_nowait()
                except queue.Empty:
                    break
                if nxt is QUEUE_STOP:
                    self._queue.put(QUEUE_STOP)
                    break
                batch.append(nxt)
            self._run_batch(batch)

    def _run_batch(self, batch: list[_Job]) -> None:
        for kind in ("text", "image"):
            jobs = [j for j in batch if j.kind == kind]
            if not jobs:
                continue
            try:
                if kind == "text":
                    vectors = self.backend.embed_text_batch([j.data for j in jobs])
                else:
                    vectors = self.backend.embed_image_batch([j.data for j in jobs])
            except Exception as exc:  # inference failure hits the whole batch
                log.exception("inference failed")
                for job in jobs:
                    self._send_reply(
                        job, {"id": job.payload["id"], "error": f"inference failed: {exc}"}
                    )
                continue
            for job, vector in zip(jobs, vectors):
                self._send_reply(
                    job,
                    {
                        "id": job.payload["id"],
                        "dim": int(vector.size),
                        "embedding": [float(x) for x in vector],
                    },
                )
