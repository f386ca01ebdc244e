import json

import numpy as np
import pytest
from PIL import Image

FEATURE_COLORS = {
    "q0": (200, 40, 40),
    "q1": (40, 200, 40),
    "q2": (40, 40, 200),
    "q3": (200, 200, 40),
    "spot": (255, 128, 0),
}


def axis_vector(dim, i):
    v = [0.0] * dim
    v[i] = 1.0
    return v


def field_grid(size, base, block=None, block_at=(2, 2), block_side=3):
    """Uniform feature field with an optional planted block."""
    grid = [[base] * size for _ in range(size)]
    if block is not None:
        y0, x0 = block_at
        for y in range(y0, y0 + block_side):
            for x in range(x0, x0 + block_side):
                grid[y][x] = block
    return grid


def render_grid(grid):
    """PNG-able RGB array with one color per feature label."""
    h, w = len(grid), len(grid[0])
    arr = np.zeros((h, w, 3), dtype=np.uint8)
    palette = {}
    for y in range(h):
        for x in range(w):
            label = grid[y][x]
            if label not in palette:
                palette[label] = FEATURE_COLORS.get(
                    label, ((37 * len(palette)) % 256, (91 * len(palette)) % 256, 150)
                )
            arr[y, x] = palette[label]
    return arr


@pytest.fixture
def toy_dataset(tmp_path):
    """World + two images + descriptions + manifest + config, on disk."""
    size = 16
    # each image is dominated by features only its own label describes, so
    # the expected predictions are forced
    grid_a = field_grid(size, "q0", block="spot")
    grid_b = field_grid(size, "q3", block="q2", block_at=(10, 10))

    dim = 8
    lexicon = {
        name: axis_vector(dim, i)
        for i, name in enumerate(["q0", "q1", "q2", "q3", "spot"])
    }
    lexicon["alpha"] = axis_vector(dim, 5)
    lexicon["beta"] = axis_vector(dim, 6)
    world = {
        "dim": dim,
        "seed": 11,
        "grid": {"img-a": grid_a, "img-b": grid_b},
        "lexicon": lexicon,
    }
    world_path = tmp_path / "world.json"
    world_path.write_text(json.dumps(world))

    for name, grid in (("img-a", grid_a), ("img-b", grid_b)):
        Image.fromarray(render_grid(grid)).save(tmp_path / f"{name}.png")

    descriptions = {
        "alpha": ["q0 spot", "q0 q1"],
        "beta": ["q3 q2", "q3"],
    }
    descs_path = tmp_path / "descs.json"
    descs_path.write_text(json.dumps(descriptions))

    manifest = {
        "descriptions_path": "descs.json",
        "entries": [
            {
                "image_path": "img-a.png",
                "true_label": "alpha",
                "candidate_labels": ["alpha", "beta"],
            },
            {
                "image_path": "img-b.png",
                "true_label": "beta",
                "candidate_labels": ["alpha", "beta"],
            },
        ],
    }
    manifest_path = tmp_path / "manifest.json"
    manifest_path.write_text(json.dumps(manifest))

    config_path = tmp_path / "config.toml"
    config_path.write_text(
        "\n".join(
            [
                "n_crops = 8",
                "ratio_lo = 0.25",
                "ratio_hi = 0.6",
                "seed = 3",
                "tau = 1.25",
                f'encoder = "toy:{world_path}"',
                f'descriptions = "descs.json"',
            ]
        )
    )
    return {
        "dir": tmp_path,
        "world": world_path,
        "manifest": manifest_path,
        "config": config_path,
        "descriptions": descs_path,
    }
