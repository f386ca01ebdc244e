"""Operation counting and empirical verification of the work bounds.

The expansion schedule halves the crop frontier every step, so the total
number of alignment-matrix entries over a run is

    sum_j |C_in at step j| * M  <=  N*M * (1 + 1/2 + 1/4 + ...)  <  2*N*M

and the comparisons spent selecting top-K cells stay within a small
constant of N*M*log2(N*M). Both are checked here with exact integer
counters on synthetic worlds: the counters are incremented at the exact
points the work happens, so a counted run is a measurement, not an
estimate.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .embedding import ToyEncoder, ToyWorld
from .errors import BoundViolated, InvalidParams
from .geometry import CropParams, ImageFrame
from .pipeline import (
    LgcaConfig,
    baseline_q_similarity,
    build_description_set,
    lgca_similarity,
)
from .rng import stream_for

DEFAULT_N_GRID = (16, 32, 64, 128, 256, 512, 1024)
DEFAULT_M_GRID = (8, 32, 128)
COMPARISON_CONSTANT_LIMIT = 4.0


@dataclass
class OpCounters:
    """Exact work counts for one evaluation; monotone during a run."""

    matrix_entries: int = 0
    sort_comparisons: int = 0
    encoder_calls: int = 0
    expansions: int = 0

    def total(self) -> int:
        return (
            self.matrix_entries
            + self.sort_comparisons
            + self.encoder_calls
            + self.expansions
        )

    def to_dict(self) -> dict:
        return {
            "matrix_entries": self.matrix_entries,
            "sort_comparisons": self.sort_comparisons,
            "encoder_calls": self.encoder_calls,
            "expansions": self.expansions,
        }


def entries_upper_bound(n_crops: int, n_descs: int) -> int:
    """Schedule-sum ceiling on matrix entries: N*M plus the halving tail.

    Exact integer statement of the geometric-series argument; strictly
    below 2*N*M for every N >= 2.
    """
    total = n_crops * n_descs
    steps = n_crops.bit_length() - 1
    for j in range(1, steps):  # step j+1 consumes at most topk_j rows
        total += (n_crops // (1 << j)) * n_descs
    return total


@dataclass(frozen=True)
class PairFixture:
    """A synthetic (image, descriptions) pair on a toy world."""

    image: ImageFrame
    encoder: ToyEncoder
    label: str
    descriptions: tuple[str, ...]


def synthetic_pair(n_descs: int, seed: int, *, size: int = 40, dim: int = 12) -> PairFixture:
    """Random block-world pair: 8 features on a grid, M token-mix texts."""
    rng = stream_for(seed, f"bench:{n_descs}")
    features = [f"f{i}" for i in range(8)]
    block = size // 4
    rows = []
    for by in range(4):
        band = []
        for bx in range(4):
            band.append(features[rng.next_below(len(features))])
        rows.extend([[band[x // block] for x in range(size)]] * block)
    lexicon: dict[str, object] = {name: 1000 + i for i, name in enumerate(features)}
    lexicon["thing"] = 999
    world = ToyWorld.from_dict(
        {"dim": dim, "seed": seed, "grid": {"bench": rows}, "lexicon": lexicon}
    )
    texts = []
    for t in range(n_descs):
        k = 1 + rng.next_below(3)
        toks = ["thing"] + [features[rng.next_below(len(features))] for _ in range(k)]
        texts.append(" ".join(toks) + f" v{t}")
    image = ImageFrame.from_array(
        "bench", np.zeros((size, size, 3), dtype=np.uint8)
    )
    return PairFixture(
        image=image, encoder=ToyEncoder(world), label="thing", descriptions=tuple(texts)
    )


def run_counted(
    fixture: PairFixture, config: LgcaConfig, algorithm: str = "lgca"
) -> OpCounters:
    """Run one pair single-threaded with counters attached."""
    counters = OpCounters()
    descs = build_description_set(
        fixture.encoder, fixture.label, fixture.descriptions, config.temperature
    )
    if algorithm == "lgca":
        lgca_similarity(fixture.image, descs, config, fixture.encoder, counters=counters)
    elif algorithm == "q":
        baseline_q_similarity(
            fixture.image, descs, config, fixture.encoder, counters=counters
        )
    else:
        raise InvalidParams(f"unknown algorithm {algorithm!r}")
    return counters


@dataclass(frozen=True)
class GridPoint:
    n_crops: int
    n_descs: int
    q: OpCounters
    lgca: OpCounters
    ratio_entries: float
    comparison_constant: float
    wall_q: float
    wall_lgca: float

    def to_dict(self) -> dict:
        return {
            "n": self.n_crops,
            "m": self.n_descs,
            "q": self.q.to_dict(),
            "lgca": self.lgca.to_dict(),
            "ratio_entries": self.ratio_entries,
            "comparison_constant": self.comparison_constant,
            "wall_q_seconds": self.wall_q,
            "wall_lgca_seconds": self.wall_lgca,
        }


@dataclass
class ComplexityReport:
    points: list[GridPoint] = field(default_factory=list)
    fitted_constant: float = 0.0
    q_only: bool = False

    def to_dict(self) -> dict:
        return {
            "points": [p.to_dict() for p in self.points],
            "fitted_constant": self.fitted_constant,
            "comparison_constant_limit": COMPARISON_CONSTANT_LIMIT,
            "q_only": self.q_only,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    CSV_HEADER = "n,m,entries_q,entries_lgca,comparisons_lgca,ratio"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for p in self.points:
            lines.append(
                f"{p.n_crops},{p.n_descs},{p.q.matrix_entries},"
                f"{p.lgca.matrix_entries},{p.lgca.sort_comparisons},"
                f"{format(p.ratio_entries, '.9g')}"
            )
        return "\n".join(lines) + "\n"


def verify_bound(
    n_grid=DEFAULT_N_GRID,
    m_grid=DEFAULT_M_GRID,
    trials: int = 1,
    *,
    tau: float = 1.25,
    seed: int = 0,
    q_only: bool = False,
) -> ComplexityReport:
    """Sweep the (N, M) grid and check both bounds point by point.

    Per point: lgca matrix entries must stay at or below 2*N*M (exact
    integers) and selection comparisons at or below 4 * N*M * log2(N*M);
    the achieved comparison constant is reported. Violations raise
    BoundViolated naming the offending point. With multiple trials the
    worst counters across seeds are kept.
    """
    if not n_grid or not m_grid:
        raise InvalidParams("grids must be non-empty")
    if any(n < 2 for n in n_grid):
        raise InvalidParams("every N in the grid must be >= 2")
    if any(m < 1 for m in m_grid):
        raise InvalidParams("every M in the grid must be >= 1")
    if trials < 1:
        raise InvalidParams("trials must be >= 1")

    report = ComplexityReport(q_only=q_only)
    for n in n_grid:
        for m in m_grid:
            worst: GridPoint | None = None
            for trial in range(trials):
                point = _run_point(n, m, tau, seed + trial, q_only)
                if worst is None or point.lgca.total() > worst.lgca.total():
                    worst = point
            assert worst is not None
            _check_point(worst)
            report.points.append(worst)
    report.fitted_constant = max(p.comparison_constant for p in report.points)
    return report


def _run_point(n: int, m: int, tau: float, seed: int, q_only: bool) -> GridPoint:
    fixture = synthetic_pair(m, seed)
    config = LgcaConfig(
        crop=CropParams(n_crops=n, ratio_lo=0.2, ratio_hi=0.9, seed=seed),
        tau=tau,
    )
    t0 = time.perf_counter()
    q = run_counted(fixture, config, "q")
    t1 = time.perf_counter()
    lgca = q if q_only else run_counted(fixture, config, "lgca")
    t2 = time.perf_counter()

    ratio = lgca.matrix_entries / q.matrix_entries
    budget = n * m * math.log2(n * m)
    constant = lgca.sort_comparisons / budget if budget > 0 else 0.0
    return GridPoint(
        n_crops=n,
        n_descs=m,
        q=q,
        lgca=lgca,
        ratio_entries=ratio,
        comparison_constant=constant,
        wall_q=t1 - t0,
        wall_lgca=(t2 - t1) if not q_only else t1 - t0,
    )


def _check_point(point: GridPoint) -> None:
    n, m = point.n_crops, point.n_descs
    if point.lgca.matrix_entries > 2 * n * m:
        raise BoundViolated(
            f"matrix entries {point.lgca.matrix_entries} exceed 2*N*M = {2 * n * m} "
            f"at N={n}, M={m}"
        )
    limit = COMPARISON_CONSTANT_LIMIT * n * m * math.log2(n * m)
    if point.lgca.sort_comparisons > limit:
        raise BoundViolated(
            f"sort comparisons {point.lgca.sort_comparisons} exceed "
            f"{limit:.0f} at N={n}, M={m}"
        )
