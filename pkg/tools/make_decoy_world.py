#!/usr/bin/env python3
"""Generate and verify the decoy-feature fixture used by the acceptance suite.

Scenario: a waterbird scene contains two "orange" cues, a small beak
block and a band of glowing water, whose prototypes overlap the single
description of the WRONG label ("swan"). The RIGHT label ("tern") is
described by the scene's structural features including the shadowed
water ring around the bird. Small random crops score the swan
description well, so the one-shot baseline ranks swan above tern; the
expansion steps grow the selected crops into the shadow ring, whose
prototype anti-correlates with both orange cues, so the multi-step
similarity ranks tern above swan.

The script searches crop seeds for a comfortable double margin, verifies
the winning configuration with a brute-force evaluator that recomputes
every number from the raw grid (no alignment/pipeline imports), and
writes:

    tests/fixtures/decoy_world.json
    tests/fixtures/decoy-tern.png
    tests/fixtures/decoy_descriptions.json
    tests/fixtures/decoy_manifest.json
    tests/fixtures/decoy_expected.json   (frozen margins + per-step scores)

Run from the repository root:  python3 tools/make_decoy_world.py
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np
from PIL import Image

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from lgca.geometry import CropParams, ImageFrame, sample_crops  # noqa: E402

SIZE = 32
DIM = 16
IMAGE_ID = "decoy-tern"

BEAK = (10, 22)  # rows/cols [10, 22): 12x12 decoy block
SHADOW = (7, 25)  # rows/cols [7, 25): anti-correlated ring around it
GLOW_COLS = 24  # bottom band split: glow to the left, weed to the right

REST_FEATURES = [
    "wing", "nape", "crest", "eye",
    "flank", "breast", "tail", "rump",
    "weed",
]

# axes: 0 beak, 1..9 rest features, 10 glow-self, 11 orange-spare,
# 12 swan, 13 tern, 14 murk-self; one spare
AX_BEAK = 0
AX_GLOW_SELF = 10
AX_ORANGE_SPARE = 11
AX_SWAN = 12
AX_TERN = 13
AX_MURK_SELF = 14

ORANGE_BEAK_COS = 0.72
GLOW_ORANGE_SHARE = 0.95
MURK_BEAK = -0.5
MURK_ORANGE = -0.5

TRUE_LABEL = "tern"
DECOY_LABEL = "swan"
DESCRIPTIONS = {
    "swan": ["orange"],
    "tern": [" ".join(REST_FEATURES) + " murk"],
}

CROP = dict(n_crops=32, ratio_lo=0.16, ratio_hi=0.30)
TAU = 1.25  # fixed by the acceptance scenario

MIN_Q_MARGIN = 0.03
MIN_SIM_MARGIN = 0.08


def axis(i):
    v = [0.0] * DIM
    v[i] = 1.0
    return v


def build_grid() -> list[list[str]]:
    half = SIZE // 2
    grid = []
    for y in range(SIZE):
        row = []
        for x in range(SIZE):
            if BEAK[0] <= y < BEAK[1] and BEAK[0] <= x < BEAK[1]:
                row.append("beak")
            elif SHADOW[0] <= y < SHADOW[1] and SHADOW[0] <= x < SHADOW[1]:
                row.append("murk")
            elif y < SHADOW[0]:
                top = y < SHADOW[0] // 2
                if x < half:
                    row.append("wing" if top else "nape")
                else:
                    row.append("crest" if top else "eye")
            elif y >= SHADOW[1]:
                row.append("glow" if x < GLOW_COLS else "weed")
            else:
                upper = y < half
                if x < SHADOW[0]:
                    row.append("flank" if upper else "breast")
                else:
                    row.append("tail" if upper else "rump")
        grid.append(row)
    return grid


def build_lexicon() -> dict:
    lex = {"beak": axis(AX_BEAK)}
    for i, name in enumerate(REST_FEATURES, start=1):
        lex[name] = axis(i)
    lex["swan"] = axis(AX_SWAN)
    lex["tern"] = axis(AX_TERN)

    orange = [0.0] * DIM
    orange[AX_BEAK] = ORANGE_BEAK_COS
    orange[AX_ORANGE_SPARE] = math.sqrt(1.0 - ORANGE_BEAK_COS**2)
    lex["orange"] = orange

    glow = [0.0] * DIM
    glow[AX_ORANGE_SPARE] = GLOW_ORANGE_SHARE
    glow[AX_GLOW_SELF] = math.sqrt(1.0 - GLOW_ORANGE_SHARE**2)
    lex["glow"] = glow

    murk = [0.0] * DIM
    murk[AX_BEAK] = MURK_BEAK
    murk[AX_ORANGE_SPARE] = MURK_ORANGE
    murk[AX_MURK_SELF] = math.sqrt(1.0 - MURK_BEAK**2 - MURK_ORANGE**2)
    lex["murk"] = murk
    return lex


# ----------------------------------------------------------------------
# brute-force evaluator: everything recomputed from the raw grid with
# plain python/numpy, no alignment or pipeline imports
# ----------------------------------------------------------------------


class Brute:
    def __init__(self, grid, lexicon):
        self.grid = np.asarray(grid, dtype=object)
        self.protos = {k: np.asarray(v, dtype=np.float64) for k, v in lexicon.items()}
        for k, v in self.protos.items():
            self.protos[k] = v / np.linalg.norm(v)

    def region_vec(self, x0, y0, side):
        sub = self.grid[y0 : y0 + side, x0 : x0 + side]
        labels, counts = np.unique(sub, return_counts=True)
        total = np.zeros(DIM)
        for label, count in zip(labels, counts):
            total += float(count) * self.protos[str(label)]
        return total / np.linalg.norm(total)

    def full_vec(self):
        return self.region_vec(0, 0, SIZE)

    def text_vec(self, text):
        total = np.zeros(DIM)
        seen = []
        for tok in text.lower().split():
            if tok not in seen:
                seen.append(tok)
                total += self.protos[tok]
        return total / np.linalg.norm(total)

    @staticmethod
    def softmax(values):
        peak = max(values)
        exps = [math.exp(v - peak) for v in values]
        total = sum(exps)
        return [e / total for e in exps]

    def matrix_score(self, crop_vecs, w, desc_vecs, v):
        entries = [
            [w[s] * v[t] * float(crop_vecs[s] @ desc_vecs[t]) for t in range(len(v))]
            for s in range(len(w))
        ]
        return entries, sum(sum(row) for row in entries)

    @staticmethod
    def topk_rows(entries, topk):
        cells = [
            (entries[s][t], s, t)
            for s in range(len(entries))
            for t in range(len(entries[0]))
        ]
        cells.sort(key=lambda c: (-c[0], c[1], c[2]))
        rows, seen = [], set()
        for _, s, _ in cells[: min(topk, len(cells))]:
            if s not in seen:
                seen.add(s)
                rows.append(s)
        return rows

    @staticmethod
    def expand(region, tau):
        x0, y0, side = region
        new_side = min(max(math.floor(tau * side + 0.5), side + 1), SIZE)
        delta = (new_side - side) // 2
        nx = min(max(x0 - delta, 0), SIZE - new_side)
        ny = min(max(y0 - delta, 0), SIZE - new_side)
        return (nx, ny, new_side)

    def lgca(self, regions, label, steps_topk, tau):
        """Per-step matrix scores; the first is also the baseline score."""
        full = self.full_vec()
        desc_vecs = [self.text_vec(t) for t in DESCRIPTIONS[label]]
        anchor = self.text_vec(label)
        v = self.softmax([float(d @ anchor) for d in desc_vecs])

        current = [(r.x0, r.y0, r.side) for r in regions]
        crop_vecs = [self.region_vec(*r) for r in current]
        w = self.softmax([float(c @ full) for c in crop_vecs])

        scores = []
        for topk in steps_topk:
            entries, score = self.matrix_score(crop_vecs, w, desc_vecs, v)
            scores.append(score)
            rows = self.topk_rows(entries, topk)
            current = [self.expand(current[s], tau) for s in rows]
            crop_vecs = [self.region_vec(*r) for r in current]
            w = self.softmax([float(c @ full) for c in crop_vecs])
        return scores


def halving_topk(n):
    steps = n.bit_length() - 1
    return [n // (1 << j) for j in range(1, steps + 1)]


def beak_pure(region):
    return (
        BEAK[0] <= region.x0
        and region.x0 + region.side <= BEAK[1]
        and BEAK[0] <= region.y0
        and region.y0 + region.side <= BEAK[1]
    )


def evaluate_seed(brute, seed):
    params = CropParams(seed=seed, **CROP)
    image = ImageFrame.from_array(IMAGE_ID, np.zeros((SIZE, SIZE, 3), dtype=np.uint8))
    regions = sample_crops(image, params)
    pure = sum(beak_pure(r) for r in regions)
    if pure < 1:  # the scenario needs at least one crop exactly on the block
        return None
    topks = halving_topk(CROP["n_crops"])
    scores = {
        label: brute.lgca(regions, label, topks, TAU)
        for label in (DECOY_LABEL, TRUE_LABEL)
    }
    t = len(topks)
    sim = {label: sum(s) / t for label, s in scores.items()}  # uniform weights
    q = {label: s[0] for label, s in scores.items()}
    return {
        "seed": seed,
        "pure_decoy_crops": pure,
        "q": q,
        "sim": sim,
        "q_margin": q[DECOY_LABEL] - q[TRUE_LABEL],
        "sim_margin": sim[TRUE_LABEL] - sim[DECOY_LABEL],
        "steps": scores,
    }


def render_png(grid, path):
    colors = {
        "beak": (255, 140, 0),
        "murk": (36, 44, 56),
        "glow": (240, 180, 90),
    }
    for i, name in enumerate(REST_FEATURES):
        colors[name] = (50 + 18 * i, 85 + 13 * i, 115 + 9 * i)
    arr = np.array(
        [[colors[grid[y][x]] for x in range(SIZE)] for y in range(SIZE)],
        dtype=np.uint8,
    )
    Image.fromarray(arr).save(path)


def main():
    out_dir = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = build_grid()
    lexicon = build_lexicon()
    brute = Brute(grid, lexicon)

    best = None
    for seed in range(200_000):
        result = evaluate_seed(brute, seed)
        if result is None or result["q_margin"] <= 0 or result["sim_margin"] <= 0:
            continue
        key = min(result["q_margin"], result["sim_margin"] / 2)
        if best is None or key > best["key"]:
            best = {**result, "key": key}
            print(
                f"seed {seed}: pure={result['pure_decoy_crops']} "
                f"q_margin={result['q_margin']:.4f} sim_margin={result['sim_margin']:.4f}"
            )
        if best["q_margin"] >= MIN_Q_MARGIN and best["sim_margin"] >= MIN_SIM_MARGIN:
            break

    if best is None:
        print("no qualifying seed found", file=sys.stderr)
        return 1

    world = {
        "dim": DIM,
        "seed": 4242,
        "grid": {IMAGE_ID: grid},
        "lexicon": lexicon,
    }
    (out_dir / "decoy_world.json").write_text(json.dumps(world))
    render_png(grid, out_dir / "decoy-tern.png")
    (out_dir / "decoy_descriptions.json").write_text(json.dumps(DESCRIPTIONS, indent=2))
    manifest = {
        "descriptions_path": "decoy_descriptions.json",
        "entries": [
            {
                "image_path": "decoy-tern.png",
                "true_label": TRUE_LABEL,
                "candidate_labels": [DECOY_LABEL, TRUE_LABEL],
            }
        ],
    }
    (out_dir / "decoy_manifest.json").write_text(json.dumps(manifest, indent=2))
    expected = {
        "image_id": IMAGE_ID,
        "crop": {**CROP, "seed": best["seed"]},
        "tau": TAU,
        "labels": {"true": TRUE_LABEL, "decoy": DECOY_LABEL},
        "pure_decoy_crops": best["pure_decoy_crops"],
        "q_scores": best["q"],
        "similarities": best["sim"],
        "per_step_scores": best["steps"],
    }
    (out_dir / "decoy_expected.json").write_text(json.dumps(expected, indent=2))
    print(
        f"frozen seed {best['seed']}: Q {best['q']}, Sim {best['sim']}, "
        f"wrote fixtures to {out_dir}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
