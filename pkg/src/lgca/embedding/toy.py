"""Deterministic fixture encoder over labeled feature grids.

A toy world assigns every pixel of every known frame a feature label and
every lexicon token a unit prototype vector. A region embeds to the
normalized, area-weighted sum of the prototypes of the features it
covers; a text embeds to the normalized sum of the prototypes of its
distinct tokens. Both are pure functions of (world, request), which makes
pipeline outcomes analytically predictable in tests.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import EmptyInput, InvalidParams
from ..geometry import ImageFrame, Region
from ..rng import stream_for
from . import (
    EmbedRequest,
    EmbeddingVector,
    run_batch_serially,
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric runs, deduplicated, first occurrence order."""
    seen: set[str] = set()
    out: list[str] = []
    for tok in _TOKEN_RE.findall(text.lower()):
        if tok not in seen:
            seen.add(tok)
            out.append(tok)
    return out


def pseudo_prototype(dim: int, seed: int, tag: str) -> np.ndarray:
    """Deterministic unit vector for tokens outside the lexicon.

    Draws ``dim`` uniforms in [-1, 1) from the (seed, tag) stream and
    normalizes; the same token always maps to the same direction.
    """
    rng = stream_for(seed, tag)
    v = np.array([rng.uniform(-1.0, 1.0) for _ in range(dim)])
    norm = float(np.linalg.norm(v))
    if norm <= 0.0:  # 2^-64-grade improbable, but normalize() must not see 0
        v[0] = 1.0
        norm = 1.0
    return v / norm


class _GridIndex:
    """Per-frame feature areas answered via summed-area tables."""

    def __init__(self, labels: list[str], grid: np.ndarray):
        self.labels = labels
        self.height, self.width = grid.shape
        self._tables = []
        for idx in range(len(labels)):
            mask = (grid == idx).astype(np.int64)
            table = np.zeros((self.height + 1, self.width + 1), dtype=np.int64)
            table[1:, 1:] = mask.cumsum(axis=0).cumsum(axis=1)
            self._tables.append(table)

    def areas(self, x0: int, y0: int, side: int) -> list[int]:
        return self.areas_rect(x0, y0, x0 + side, y0 + side)

    def areas_rect(self, x0: int, y0: int, x1: int, y1: int) -> list[int]:
        return [
            int(t[y1, x1] - t[y0, x1] - t[y1, x0] + t[y0, x0]) for t in self._tables
        ]


@dataclass
class ToyWorld:
    """Feature grids, a token lexicon, and the seed for unknown tokens."""

    dim: int
    seed: int
    grids: dict[str, _GridIndex]
    lexicon: dict[str, np.ndarray]

    @classmethod
    def from_dict(cls, data: dict) -> "ToyWorld":
        dim = int(data["dim"])
        if dim < 2:
            raise InvalidParams("toy world dim must be >= 2")
        seed = int(data.get("seed", 0))

        lexicon: dict[str, np.ndarray] = {}
        for token, value in data.get("lexicon", {}).items():
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                proto = pseudo_prototype(dim, int(value), f"proto:{token}")
            else:
                arr = np.asarray(value, dtype=np.float64)
                if arr.shape != (dim,):
                    raise InvalidParams(
                        f"lexicon {token!r}: expected {dim} values, got {arr.shape}"
                    )
                norm = float(np.linalg.norm(arr))
                if norm <= 0.0:
                    raise InvalidParams(f"lexicon {token!r}: zero vector")
                proto = arr / norm
            lexicon[token] = proto
        _check_distinct(lexicon)

        grids: dict[str, _GridIndex] = {}
        for frame_id, rows in data.get("grid", {}).items():
            arr = np.asarray(rows, dtype=object)
            if arr.ndim != 2:
                raise InvalidParams(f"grid {frame_id!r} must be a 2-D array of labels")
            labels = sorted({str(v) for v in arr.ravel()})
            index_of = {lab: i for i, lab in enumerate(labels)}
            idx_grid = np.vectorize(lambda v: index_of[str(v)])(arr).astype(np.int32)
            grids[frame_id] = _GridIndex(labels, idx_grid)
        return cls(dim=dim, seed=seed, grids=grids, lexicon=lexicon)

    @classmethod
    def load(cls, path: str) -> "ToyWorld":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def prototype(self, token: str) -> np.ndarray:
        known = self.lexicon.get(token)
        if known is not None:
            return known
        return pseudo_prototype(self.dim, self.seed, f"token:{token}")


def _check_distinct(lexicon: dict[str, np.ndarray]) -> None:
    items = list(lexicon.items())
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            if np.allclose(items[i][1], items[j][1], atol=1e-12):
                raise InvalidParams(
                    f"lexicon prototypes {items[i][0]!r} and {items[j][0]!r} coincide"
                )


class ToyEncoder:
    """In-process encoder backed by a ToyWorld; pure and freely concurrent."""

    backend = "toy"

    def __init__(self, world: ToyWorld):
        self.world = world

    @property
    def dim(self) -> int:
        return self.world.dim

    def embed_text(self, text: str) -> EmbeddingVector:
        tokens = tokenize(text)
        if not tokens:
            raise EmptyInput("cannot embed empty text")
        total = np.zeros(self.world.dim)
        for tok in tokens:
            total += self.world.prototype(tok)
        return EmbeddingVector.unit(total)

    def embed_image_patch(
        self, image: ImageFrame, region: Region | None = None
    ) -> EmbeddingVector:
        grid = self.world.grids.get(image.id)
        if grid is None:
            raise InvalidParams(f"frame {image.id!r} has no feature grid in this world")
        if (grid.width, grid.height) != (image.width, image.height):
            raise InvalidParams(
                f"frame {image.id!r} is {image.width}x{image.height} but its grid "
                f"is {grid.width}x{grid.height}"
            )
        if region is None:
            areas = grid.areas_rect(0, 0, image.width, image.height)
        else:
            if region.source != image.id:
                raise InvalidParams(
                    f"region belongs to {region.source!r}, not {image.id!r}"
                )
            if (
                region.x0 + region.side > image.width
                or region.y0 + region.side > image.height
            ):
                raise InvalidParams(f"region {region} out of bounds")
            areas = grid.areas(region.x0, region.y0, region.side)
        total = np.zeros(self.world.dim)
        for label, area in zip(grid.labels, areas):
            if area:
                total += area * self.world.prototype(label)
        return EmbeddingVector.unit(total)

    def batch_embed(self, items: Sequence[EmbedRequest]) -> list[EmbeddingVector]:
        return run_batch_serially(self, items)
