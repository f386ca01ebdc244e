"""Softmax weighting, the weighted cross-alignment matrix, and top-K selection.

The cross-alignment matrix between a weighted crop set C and a weighted
description set D has entries

    A[s][t] = w_s * v_t * cos(crop_embedding_s, description_embedding_t)

and its score is the sum of all entries, accumulated with Kahan
compensation so the value is reproducible to 1e-12 regardless of
summation order. Top-K selection is by entry value descending with ties
broken by ascending (row, col), a total order, so results are identical
across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .embedding import EmbeddingVector
from .errors import DimMismatch, EmptyInput, InvalidParams
from .geometry import Region

WEIGHT_SUM_TOL = 1e-9


def softmax_weights(similarities: Sequence[float], temperature: float = 1.0) -> list[float]:
    """Positive weights summing to 1, computed with max-subtraction.

    Subtracting the maximum before exponentiation makes the result
    invariant (to ~1e-12) under adding a constant to every similarity and
    immune to overflow. ``temperature`` divides the shifted similarities;
    1.0 reproduces the plain softmax.
    """
    if len(similarities) == 0:
        raise EmptyInput("softmax_weights needs at least one similarity")
    if not (temperature > 0.0) or not math.isfinite(temperature):
        raise InvalidParams(f"temperature must be finite and > 0, got {temperature}")
    values = [float(s) for s in similarities]
    if not all(math.isfinite(v) for v in values):
        raise InvalidParams("similarities must be finite")
    peak = max(values)
    exps = [math.exp((v - peak) / temperature) for v in values]
    total = math.fsum(exps)
    return [e / total for e in exps]


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Dot product of unit vectors, clamped into [-1, 1]."""
    if u.dim != v.dim:
        raise DimMismatch(f"cosine over dims {u.dim} and {v.dim}")
    d = float(np.dot(u.values, v.values))
    return max(-1.0, min(1.0, d))


@dataclass(frozen=True)
class WeightedCropSet:
    """Crop regions with their embeddings and normalized weights."""

    regions: tuple[Region, ...]
    embeddings: tuple[EmbeddingVector, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        _check_weighted(len(self.regions), self.embeddings, self.weights, "crop set")

    def __len__(self) -> int:
        return len(self.regions)


@dataclass(frozen=True)
class WeightedDescriptionSet:
    """Description strings with their embeddings and normalized weights."""

    texts: tuple[str, ...]
    embeddings: tuple[EmbeddingVector, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        _check_weighted(len(self.texts), self.embeddings, self.weights, "description set")

    def __len__(self) -> int:
        return len(self.texts)


def _check_weighted(
    n: int,
    embeddings: Sequence[EmbeddingVector],
    weights: Sequence[float],
    what: str,
) -> None:
    if n == 0:
        raise EmptyInput(f"{what} must be non-empty")
    if len(embeddings) != n or len(weights) != n:
        raise InvalidParams(
            f"{what}: {n} items, {len(embeddings)} embeddings, {len(weights)} weights"
        )
    if any(w <= 0.0 for w in weights):
        raise InvalidParams(f"{what}: weights must be strictly positive")
    total = math.fsum(weights)
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise InvalidParams(f"{what}: weights sum to {total!r}, expected 1")
    dims = {e.dim for e in embeddings}
    if len(dims) > 1:
        raise DimMismatch(f"{what}: mixed embedding dims {sorted(dims)}")


@dataclass
class AlignmentMatrix:
    """|C| x |D| weighted cross-alignment entries plus their compensated sum."""

    entries: np.ndarray
    score: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


def kahan_sum(values: np.ndarray) -> float:
    """Compensated sum in index order; reproducible to ~1e-12."""
    total = 0.0
    carry = 0.0
    for v in values.ravel():
        y = float(v) - carry
        t = total + y
        carry = (t - total) - y
        total = t
    return total


def build_matrix(
    crops: WeightedCropSet,
    descs: WeightedDescriptionSet,
    counters=None,
) -> AlignmentMatrix:
    """Weighted cross-alignment matrix and its score.

    Cosines are clipped into [-1, 1] before weighting so |A[s][t]| never
    exceeds w_s * v_t even under unit-norm rounding drift.
    """
    if crops.embeddings[0].dim != descs.embeddings[0].dim:
        raise DimMismatch(
            f"crop dim {crops.embeddings[0].dim} vs description dim "
            f"{descs.embeddings[0].dim}"
        )
    crop_mat = np.stack([e.values for e in crops.embeddings])
    desc_mat = np.stack([e.values for e in descs.embeddings])
    cos = np.clip(crop_mat @ desc_mat.T, -1.0, 1.0)
    entries = np.outer(np.asarray(crops.weights), np.asarray(descs.weights)) * cos
    if counters is not None:
        counters.matrix_entries += entries.size
    return AlignmentMatrix(entries=entries, score=kahan_sum(entries))


@dataclass(frozen=True)
class SelectionSet:
    """Top-K matrix cells, best first, plus their deduplicated row order."""

    indices: tuple[tuple[int, int], ...]
    rows: tuple[int, ...] = field(default=())

    @staticmethod
    def from_ordered(indices: Sequence[tuple[int, int]]) -> "SelectionSet":
        rows: list[int] = []
        seen: set[int] = set()
        for s, _ in indices:
            if s not in seen:
                seen.add(s)
                rows.append(s)
        return SelectionSet(indices=tuple(indices), rows=tuple(rows))


def select_topk(matrix: AlignmentMatrix, topk: int, counters=None) -> SelectionSet:
    """The min(topk, |C|*|D|) largest entries under the documented order.

    Order: value descending, ties by ascending (row, col). Implemented as
    a bounded min-heap over the cells so one pass selects the winners;
    every key comparison is counted into ``counters.sort_comparisons``.
    """
    if topk < 1:
        raise InvalidParams(f"topk must be >= 1, got {topk}")
    n_rows, n_cols = matrix.shape
    k = min(topk, n_rows * n_cols)

    comparisons = 0

    def worse(a: tuple[float, int, int], b: tuple[float, int, int]) -> bool:
        # strict total order: lower value is worse; equal values make the
        # later (row, col) worse
        nonlocal comparisons
        comparisons += 1
        if a[0] != b[0]:
            return a[0] < b[0]
        return (a[1], a[2]) > (b[1], b[2])

    # min-heap keyed by "badness": the root is the weakest kept cell
    heap: list[tuple[float, int, int]] = []

    def sift_down(i: int) -> None:
        n = len(heap)
        while True:
            left = 2 * i + 1
            if left >= n:
                return
            child = left
            right = left + 1
            if right < n and worse(heap[right], heap[left]):
                child = right
            if worse(heap[child], heap[i]):
                heap[i], heap[child] = heap[child], heap[i]
                i = child
            else:
                return

    flat = matrix.entries.ravel()
    cells = ((float(flat[s * n_cols + t]), s, t) for s in range(n_rows) for t in range(n_cols))

    for cell in cells:
        if len(heap) < k:
            heap.append(cell)
            if len(heap) == k:
                for i in range(k // 2 - 1, -1, -1):
                    sift_down(i)
        elif worse(heap[0], cell):
            heap[0] = cell
            sift_down(0)

    if len(heap) < k:  # matrix smaller than topk; heapify what we have
        for i in range(len(heap) // 2 - 1, -1, -1):
            sift_down(i)

    # pop worst-first, then reverse into best-first order
    ordered: list[tuple[float, int, int]] = []
    while heap:
        root = heap[0]
        last = heap.pop()
        if heap:
            heap[0] = last
            sift_down(0)
        ordered.append(root)
    ordered.reverse()

    if counters is not None:
        counters.sort_comparisons += comparisons
    return SelectionSet.from_ordered([(s, t) for _, s, t in ordered])
