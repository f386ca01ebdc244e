"""Encoders mapping image patches and text into one unit-norm vector space.

Two backends share the same surface: a deterministic in-process toy world
(fixtures for exact offline tests) and a TCP client for an external
encoder service. All vectors leaving this package are L2-normalized, so
downstream similarity math is exactly cosine.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, Union

import numpy as np

from ..errors import DimMismatch, InvalidParams
from ..geometry import ImageFrame, Region

UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class EmbeddingVector:
    """k-dimensional unit vector (float64)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 2:
            raise InvalidParams("embedding must be a 1-D vector of dim >= 2")
        norm = float(np.linalg.norm(arr))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise InvalidParams(f"embedding norm {norm!r} is not within 1e-6 of 1")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.size

    @staticmethod
    def unit(values) -> "EmbeddingVector":
        """Normalize arbitrary values into an EmbeddingVector."""
        arr = np.asarray(values, dtype=np.float64)
        norm = float(np.linalg.norm(arr))
        if norm <= 0.0 or not np.isfinite(norm):
            raise InvalidParams("cannot normalize a zero or non-finite vector")
        return EmbeddingVector(arr / norm)


@dataclass(frozen=True)
class EmbedText:
    """Batch item: encode a text string."""

    text: str


@dataclass(frozen=True)
class EmbedPatch:
    """Batch item: encode a region of a frame (None region = whole frame)."""

    image: ImageFrame
    region: Region | None = None


EmbedRequest = Union[EmbedText, EmbedPatch]


class Encoder(Protocol):
    """Common surface of the toy and remote backends."""

    @property
    def dim(self) -> int: ...

    def embed_text(self, text: str) -> EmbeddingVector: ...

    def embed_image_patch(
        self, image: ImageFrame, region: Region | None = None
    ) -> EmbeddingVector: ...

    def batch_embed(self, items: Sequence[EmbedRequest]) -> list[EmbeddingVector]: ...


def embed_text(enc: Encoder, text: str) -> EmbeddingVector:
    return enc.embed_text(text)


def embed_image_patch(
    enc: Encoder, image: ImageFrame, region: Region | None = None
) -> EmbeddingVector:
    return enc.embed_image_patch(image, region)


def batch_embed(enc: Encoder, items: Sequence[EmbedRequest]) -> list[EmbeddingVector]:
    """Order-preserving batch encode, equivalent to element-wise calls."""
    return enc.batch_embed(items)


def run_batch_serially(enc: Encoder, items: Sequence[EmbedRequest]) -> list[EmbeddingVector]:
    """Default batch strategy: element-wise calls, first failure annotated."""
    out: list[EmbeddingVector] = []
    for i, item in enumerate(items):
        try:
            if isinstance(item, EmbedText):
                out.append(enc.embed_text(item.text))
            elif isinstance(item, EmbedPatch):
                out.append(enc.embed_image_patch(item.image, item.region))
            else:
                raise InvalidParams(f"unsupported batch item {type(item).__name__}")
        except Exception as exc:
            raise type(exc)(f"batch item {i}: {exc}") from exc
    return out


def check_dim(expected: int, got: int, context: str) -> None:
    if expected != got:
        raise DimMismatch(f"{context}: expected dim {expected}, got {got}")


from .toy import ToyEncoder, ToyWorld  # noqa: E402
from .remote import RemoteEncoder  # noqa: E402


def make_encoder(spec: str, *, out_size: int = 224):
    """Build an encoder from ``toy:<world.json>`` or ``remote:<host>:<port>``."""
    kind, _, rest = spec.partition(":")
    if kind == "toy" and rest:
        return ToyEncoder(ToyWorld.load(rest))
    if kind == "remote" and rest:
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise InvalidParams(f"remote encoder spec needs host:port, got {spec!r}")
        return RemoteEncoder(host, int(port), out_size=out_size)
    raise InvalidParams(f"unknown encoder spec {spec!r}")


__all__ = [
    "EmbedPatch",
    "EmbedRequest",
    "EmbedText",
    "EmbeddingVector",
    "Encoder",
    "RemoteEncoder",
    "ToyEncoder",
    "ToyWorld",
    "batch_embed",
    "embed_image_patch",
    "embed_text",
    "make_encoder",
]
