import math

import numpy as np
import pytest

from lgca.embedding import (
    EmbedPatch,
    EmbedText,
    EmbeddingVector,
    ToyEncoder,
    ToyWorld,
    batch_embed,
    make_encoder,
)
from lgca.errors import EmptyInput, InvalidParams
from lgca.geometry import ImageFrame, Region


def axis(dim, i):
    v = [0.0] * dim
    v[i] = 1.0
    return v


def two_feature_world(dim=6):
    """4x4 frame: left half 'beak', right half 'water'."""
    grid = [["beak", "beak", "water", "water"] for _ in range(4)]
    return ToyWorld.from_dict(
        {
            "dim": dim,
            "seed": 99,
            "grid": {"img": grid},
            "lexicon": {
                "beak": axis(dim, 0),
                "water": axis(dim, 1),
                "orange": axis(dim, 2),
            },
        }
    )


def frame(frame_id, w, h):
    return ImageFrame.from_array(
        frame_id, np.zeros((h, w, 3), dtype=np.uint8)
    )


class TestEmbeddingVector:
    def test_rejects_non_unit(self):
        with pytest.raises(InvalidParams):
            EmbeddingVector(np.array([1.0, 1.0]))

    def test_unit_normalizes(self):
        v = EmbeddingVector.unit([3.0, 4.0])
        assert v.values == pytest.approx([0.6, 0.8])

    def test_unit_rejects_zero(self):
        with pytest.raises(InvalidParams):
            EmbeddingVector.unit([0.0, 0.0])


class TestToyImageEmbedding:
    def test_single_feature_region_is_prototype(self):
        enc = ToyEncoder(two_feature_world())
        img = frame("img", 4, 4)
        v = enc.embed_image_patch(img, Region(0, 0, 2, "img"))
        assert v.values[0] == pytest.approx(1.0)
        assert float(np.sum(np.abs(v.values[1:]))) == pytest.approx(0.0)

    def test_equal_area_mix_is_normalized_sum(self):
        enc = ToyEncoder(two_feature_world())
        img = frame("img", 4, 4)
        # region covering columns 1..2 splits beak/water 50:50
        v = enc.embed_image_patch(img, Region(1, 0, 2, "img"))
        expected = 1.0 / math.sqrt(2.0)
        assert v.values[0] == pytest.approx(expected)
        assert v.values[1] == pytest.approx(expected)

    def test_area_weighting(self):
        enc = ToyEncoder(two_feature_world())
        img = frame("img", 4, 4)
        # 3-wide region starting at column 0: 6 beak pixels, 3 water pixels
        v = enc.embed_image_patch(img, Region(0, 0, 3, "img"))
        norm = math.sqrt(6**2 + 3**2)
        assert v.values[0] == pytest.approx(6 / norm)
        assert v.values[1] == pytest.approx(3 / norm)

    def test_whole_frame_when_region_omitted(self):
        enc = ToyEncoder(two_feature_world())
        img = frame("img", 4, 4)
        v = enc.embed_image_patch(img)
        assert v.values[0] == pytest.approx(1 / math.sqrt(2))
        assert v.values[1] == pytest.approx(1 / math.sqrt(2))

    def test_unknown_frame_rejected(self):
        enc = ToyEncoder(two_feature_world())
        with pytest.raises(InvalidParams):
            enc.embed_image_patch(frame("mystery", 4, 4))

    def test_grid_size_mismatch_rejected(self):
        enc = ToyEncoder(two_feature_world())
        with pytest.raises(InvalidParams):
            enc.embed_image_patch(frame("img", 8, 8))

    def test_repeat_calls_bit_identical(self):
        enc = ToyEncoder(two_feature_world())
        img = frame("img", 4, 4)
        a = enc.embed_image_patch(img, Region(1, 1, 2, "img"))
        b = enc.embed_image_patch(img, Region(1, 1, 2, "img"))
        assert np.array_equal(a.values, b.values)


class TestToyTextEmbedding:
    def test_two_known_tokens(self):
        enc = ToyEncoder(two_feature_world())
        v = enc.embed_text("orange beak")
        expected = 1.0 / math.sqrt(2.0)
        assert v.values[2] == pytest.approx(expected)
        assert v.values[0] == pytest.approx(expected)

    def test_single_token_is_prototype_exactly(self):
        enc = ToyEncoder(two_feature_world())
        v = enc.embed_text("water")
        assert v.values[1] == pytest.approx(1.0)

    def test_empty_text_rejected(self):
        enc = ToyEncoder(two_feature_world())
        with pytest.raises(EmptyInput):
            enc.embed_text("")
        with pytest.raises(EmptyInput):
            enc.embed_text("   !!!   ")

    def test_unknown_tokens_stable_and_unit(self):
        enc = ToyEncoder(two_feature_world())
        a = enc.embed_text("zugzwang")
        b = enc.embed_text("zugzwang")
        assert np.array_equal(a.values, b.values)
        assert float(np.linalg.norm(a.values)) == pytest.approx(1.0)

    def test_duplicate_tokens_count_once(self):
        enc = ToyEncoder(two_feature_world())
        assert np.array_equal(
            enc.embed_text("beak beak beak").values, enc.embed_text("beak").values
        )

    def test_case_and_punctuation_folded(self):
        enc = ToyEncoder(two_feature_world())
        assert np.array_equal(
            enc.embed_text("Orange, BEAK!").values, enc.embed_text("orange beak").values
        )


class TestToyWorldValidation:
    def test_coincident_prototypes_rejected(self):
        with pytest.raises(InvalidParams):
            ToyWorld.from_dict(
                {
                    "dim": 4,
                    "grid": {},
                    "lexicon": {"a": axis(4, 0), "b": axis(4, 0)},
                }
            )

    def test_seed_valued_lexicon_entries(self):
        world = ToyWorld.from_dict(
            {"dim": 8, "grid": {}, "lexicon": {"a": 7, "b": 8}}
        )
        assert float(np.linalg.norm(world.lexicon["a"])) == pytest.approx(1.0)
        assert not np.allclose(world.lexicon["a"], world.lexicon["b"])

    def test_wrong_length_vector_rejected(self):
        with pytest.raises(InvalidParams):
            ToyWorld.from_dict(
                {"dim": 4, "grid": {}, "lexicon": {"a": [1.0, 0.0]}}
            )


class TestBatchEmbed:
    def test_batch_equals_elementwise(self):
        enc = ToyEncoder(two_feature_world())
        img = frame("img", 4, 4)
        items = [
            EmbedText("orange beak"),
            EmbedPatch(img, Region(0, 0, 2, "img")),
            EmbedPatch(img),
            EmbedText("water"),
        ]
        got = batch_embed(enc, items)
        assert len(got) == 4
        assert np.array_equal(got[0].values, enc.embed_text("orange beak").values)
        assert np.array_equal(
            got[1].values, enc.embed_image_patch(img, Region(0, 0, 2, "img")).values
        )
        assert np.array_equal(got[2].values, enc.embed_image_patch(img).values)
        assert np.array_equal(got[3].values, enc.embed_text("water").values)

    def test_empty_batch(self):
        enc = ToyEncoder(two_feature_world())
        assert batch_embed(enc, []) == []

    def test_identical_requests_identical_vectors(self):
        enc = ToyEncoder(two_feature_world())
        got = batch_embed(enc, [EmbedText("orange beak")] * 5)
        assert len(got) == 5
        for v in got[1:]:
            assert np.array_equal(v.values, got[0].values)

    def test_failure_carries_index(self):
        enc = ToyEncoder(two_feature_world())
        with pytest.raises(EmptyInput, match="batch item 1"):
            batch_embed(enc, [EmbedText("beak"), EmbedText("")])


class TestEncoderFactory:
    def test_toy_spec(self, tmp_path):
        import json

        world = {
            "dim": 4,
            "grid": {"x": [["a"]]},
            "lexicon": {"a": axis(4, 0)},
        }
        path = tmp_path / "world.json"
        path.write_text(json.dumps(world))
        enc = make_encoder(f"toy:{path}")
        assert enc.dim == 4

    def test_bad_specs(self):
        for spec in ("", "toy:", "remote:", "remote:hostonly", "magic:x"):
            with pytest.raises(InvalidParams):
                make_encoder(spec)
