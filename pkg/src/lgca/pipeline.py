"""Multi-step expansion scoring and the argmax matching procedure.

One evaluation of an (image, label) pair runs:

  1. sample N square crops, encode them, and weight each by the softmax
     of its cosine to the whole image;
  2. T expansion steps; step j builds the cross-alignment matrix of the
     current crop set against the fixed description set, records the
     matrix score as score_j, selects the step's top-K cells, expands the
     deduplicated rows by tau, re-encodes them, and re-weights the new
     set against the whole image with the same softmax;
  3. the pair similarity is sum_j step_weights[j] * score_j.

The non-expanding baseline stops after the first matrix and returns its
score, which equals score_1 bit for bit, so step weights (1, 0, ..., 0)
reduce the full pipeline to the baseline exactly.

The step count in halving mode is the largest T with floor(N / 2^T) = 1
and step j uses top-K = floor(N / 2^j); fixed-initial mode starts from a
configured top-K and halves it down to 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

from .alignment import (
    WeightedCropSet,
    WeightedDescriptionSet,
    build_matrix,
    cosine,
    select_topk,
    softmax_weights,
)
from .embedding import EmbedPatch, EmbedText, EmbeddingVector, Encoder
from .errors import ConfigError, DegenerateN, EmptyInput, InvalidParams
from .geometry import CropParams, ImageFrame, expand_region, sample_crops

ScheduleMode = Literal["halving", "fixed_initial"]


@dataclass(frozen=True)
class Schedule:
    """Step count and the per-step top-K sequence."""

    n_crops: int
    steps: int
    topk_per_step: tuple[int, ...]
    mode: ScheduleMode


def make_schedule(
    n_crops: int,
    mode: ScheduleMode = "halving",
    fixed_topk: int | None = None,
) -> Schedule:
    """Build the top-K schedule for ``n_crops``.

    halving:        T is the largest integer with floor(N / 2^T) = 1 and
                    the step-j top-K is floor(N / 2^j), ending at 1.
    fixed_initial:  top-K starts at ``fixed_topk`` and halves down to 1.
    """
    if n_crops < 2:
        raise DegenerateN(f"need at least 2 crops for a schedule, got {n_crops}")
    if mode == "halving":
        steps = n_crops.bit_length() - 1  # largest T with 2^T <= N
        topk = tuple(n_crops // (1 << j) for j in range(1, steps + 1))
    elif mode == "fixed_initial":
        if fixed_topk is None or fixed_topk < 1:
            raise InvalidParams("fixed_initial mode needs fixed_topk >= 1")
        values = [fixed_topk]
        while values[-1] > 1:
            values.append(values[-1] // 2)
        topk = tuple(values)
        steps = len(topk)
    else:
        raise InvalidParams(f"unknown schedule mode {mode!r}")
    return Schedule(n_crops=n_crops, steps=steps, topk_per_step=topk, mode=mode)


@dataclass(frozen=True)
class LgcaConfig:
    """Everything one evaluation needs besides the data and the encoder."""

    crop: CropParams
    tau: float = 1.25
    step_weights: tuple[float, ...] | None = None  # None = uniform 1/T
    temperature: float = 1.0
    schedule_mode: ScheduleMode = "halving"
    fixed_topk: int | None = None

    def __post_init__(self):
        if self.tau <= 1.0:
            raise InvalidParams(f"tau must be > 1, got {self.tau}")
        if self.step_weights is not None:
            w = tuple(float(x) for x in self.step_weights)
            if any(x < 0.0 for x in w) or all(x == 0.0 for x in w):
                raise InvalidParams("step_weights must be >= 0 and not all zero")
            object.__setattr__(self, "step_weights", w)

    def schedule(self) -> Schedule:
        return make_schedule(self.crop.n_crops, self.schedule_mode, self.fixed_topk)

    def resolved_step_weights(self, steps: int) -> tuple[float, ...]:
        if self.step_weights is None:
            return tuple(1.0 / steps for _ in range(steps))
        if len(self.step_weights) != steps:
            raise ConfigError(
                f"{len(self.step_weights)} step weights for a {steps}-step schedule"
            )
        return self.step_weights


@dataclass(frozen=True)
class StepTrace:
    """Provenance of one expansion step."""

    step: int
    topk: int
    n_in: int
    n_out: int
    score: float
    selected: tuple[tuple[int, int], ...]
    entries_computed: int

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "topk": self.topk,
            "n_in": self.n_in,
            "n_out": self.n_out,
            "score": self.score,
            "selected": [list(pair) for pair in self.selected],
            "entries_computed": self.entries_computed,
        }


@dataclass(frozen=True)
class LabelResult:
    label: str
    similarity: float
    traces: tuple[StepTrace, ...]


@dataclass(frozen=True)
class SimilarityReport:
    """Per-candidate similarities and the argmax prediction for one image."""

    image_id: str
    results: tuple[LabelResult, ...]
    predicted_label: str

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "predicted_label": self.predicted_label,
            "results": [
                {
                    "label": r.label,
                    "similarity": r.similarity,
                    "steps": [t.to_dict() for t in r.traces],
                }
                for r in self.results
            ],
        }


def build_description_set(
    encoder: Encoder,
    label: str,
    texts: Sequence[str],
    temperature: float = 1.0,
) -> WeightedDescriptionSet:
    """Embed a label's descriptions and weight them against the label text."""
    if not texts:
        raise EmptyInput(f"label {label!r} has no descriptions")
    embeddings = encoder.batch_embed([EmbedText(t) for t in texts])
    anchor = encoder.embed_text(label)
    weights = softmax_weights([cosine(e, anchor) for e in embeddings], temperature)
    return WeightedDescriptionSet(
        texts=tuple(texts), embeddings=tuple(embeddings), weights=tuple(weights)
    )


@dataclass(frozen=True)
class CropState:
    """Initial weighted crop set plus the whole-image anchor embedding."""

    crops: WeightedCropSet
    image_embedding: EmbeddingVector


def initial_crop_state(
    image: ImageFrame,
    config: LgcaConfig,
    encoder: Encoder,
    counters=None,
) -> CropState:
    """Sample, encode, and weight the starting crop set (shared with Q)."""
    regions = sample_crops(image, config.crop)
    image_embedding = encoder.embed_image_patch(image, None)
    embeddings = encoder.batch_embed([EmbedPatch(image, r) for r in regions])
    if counters is not None:
        counters.encoder_calls += 1 + len(regions)
    weights = softmax_weights(
        [cosine(e, image_embedding) for e in embeddings], config.temperature
    )
    crops = WeightedCropSet(
        regions=tuple(regions), embeddings=tuple(embeddings), weights=tuple(weights)
    )
    return CropState(crops=crops, image_embedding=image_embedding)


def expansion_step(
    crops: WeightedCropSet,
    descs: WeightedDescriptionSet,
    topk: int,
    tau: float,
    image: ImageFrame,
    encoder: Encoder,
    *,
    temperature: float = 1.0,
    image_embedding: EmbeddingVector | None = None,
    step_index: int = 1,
    counters=None,
) -> tuple[WeightedCropSet, StepTrace]:
    """One expansion step: score, select, expand, re-encode, re-weight."""
    matrix = build_matrix(crops, descs, counters)
    selection = select_topk(matrix, topk, counters)

    expanded = tuple(
        expand_region(crops.regions[row], tau, image) for row in selection.rows
    )
    if counters is not None:
        counters.expansions += len(expanded)
        counters.encoder_calls += len(expanded) + (image_embedding is None)
    if image_embedding is None:
        image_embedding = encoder.embed_image_patch(image, None)
    embeddings = encoder.batch_embed([EmbedPatch(image, r) for r in expanded])
    weights = softmax_weights(
        [cosine(e, image_embedding) for e in embeddings], temperature
    )
    new_crops = WeightedCropSet(
        regions=expanded, embeddings=tuple(embeddings), weights=tuple(weights)
    )
    trace = StepTrace(
        step=step_index,
        topk=topk,
        n_in=len(crops),
        n_out=len(new_crops),
        score=matrix.score,
        selected=selection.indices,
        entries_computed=matrix.entries.size,
    )
    return new_crops, trace


def lgca_similarity(
    image: ImageFrame,
    descs: WeightedDescriptionSet,
    config: LgcaConfig,
    encoder: Encoder,
    *,
    state: CropState | None = None,
    counters=None,
) -> tuple[float, tuple[StepTrace, ...]]:
    """Similarity of one (image, description set) pair over the full schedule."""
    schedule = config.schedule()
    step_weights = config.resolved_step_weights(schedule.steps)
    if state is None:
        state = initial_crop_state(image, config, encoder, counters)

    crops = state.crops
    traces: list[StepTrace] = []
    similarity = 0.0
    for j, topk in enumerate(schedule.topk_per_step, start=1):
        crops, trace = expansion_step(
            crops,
            descs,
            topk,
            config.tau,
            image,
            encoder,
            temperature=config.temperature,
            image_embedding=state.image_embedding,
            step_index=j,
            counters=counters,
        )
        traces.append(trace)
        similarity += step_weights[j - 1] * trace.score
    return similarity, tuple(traces)


def baseline_q_similarity(
    image: ImageFrame,
    descs: WeightedDescriptionSet,
    config: LgcaConfig,
    encoder: Encoder,
    *,
    state: CropState | None = None,
    counters=None,
) -> float:
    """Non-expanding score: the first-step matrix score and nothing else."""
    if state is None:
        state = initial_crop_state(image, config, encoder, counters)
    return build_matrix(state.crops, descs, counters).score


def classify(
    image: ImageFrame,
    candidates: Sequence[tuple[str, WeightedDescriptionSet]],
    config: LgcaConfig,
    encoder: Encoder,
    *,
    counters=None,
) -> SimilarityReport:
    """Evaluate every candidate on one shared crop sample and take the argmax.

    Crops are sampled and encoded once per image and reused across labels,
    which keeps the scores comparable. Ties go to the lexicographically
    smallest label.
    """
    if not candidates:
        raise EmptyInput("classify needs at least one candidate label")
    state = initial_crop_state(image, config, encoder, counters)
    results = []
    for label, descs in candidates:
        similarity, traces = lgca_similarity(
            image, descs, config, encoder, state=state, counters=counters
        )
        results.append(LabelResult(label=label, similarity=similarity, traces=traces))
    best = min(results, key=lambda r: (-r.similarity, r.label))
    return SimilarityReport(
        image_id=image.id, results=tuple(results), predicted_label=best.label
    )
