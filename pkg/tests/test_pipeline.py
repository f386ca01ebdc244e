import math

import numpy as np
import pytest

from lgca.alignment import WeightedCropSet, build_matrix
from lgca.embedding import ToyEncoder, ToyWorld
from lgca.errors import ConfigError, DegenerateN, EmptyInput, InvalidParams
from lgca.geometry import CropParams, ImageFrame, Region
from lgca.pipeline import (
    LgcaConfig,
    baseline_q_similarity,
    build_description_set,
    classify,
    expansion_step,
    initial_crop_state,
    lgca_similarity,
    make_schedule,
)


def axis(dim, i):
    v = [0.0] * dim
    v[i] = 1.0
    return v


def checker_world(dim=8, size=16, seed=5):
    """Frame split into quadrant features plus a small planted block."""
    grid = [["q0"] * (size // 2) + ["q1"] * (size // 2) for _ in range(size // 2)]
    grid += [["q2"] * (size // 2) + ["q3"] * (size // 2) for _ in range(size // 2)]
    # 3x3 planted feature in the top-left quadrant
    for y in range(2, 5):
        for x in range(2, 5):
            grid[y][x] = "spot"
    lexicon = {name: axis(dim, i) for i, name in enumerate(["q0", "q1", "q2", "q3", "spot"])}
    lexicon["label-a"] = axis(dim, 5)
    lexicon["label-b"] = axis(dim, 6)
    world = ToyWorld.from_dict(
        {"dim": dim, "seed": seed, "grid": {"img": grid}, "lexicon": lexicon}
    )
    frame = ImageFrame.from_array("img", np.zeros((size, size, 3), dtype=np.uint8))
    return world, frame


def make_config(n_crops=8, seed=3, **kw):
    crop = CropParams(n_crops=n_crops, ratio_lo=0.25, ratio_hi=0.6, seed=seed)
    return LgcaConfig(crop=crop, **kw)


class TestMakeSchedule:
    def test_hundred_crops(self):
        sched = make_schedule(100)
        assert sched.steps == 6
        assert sched.topk_per_step == (50, 25, 12, 6, 3, 1)

    def test_two_crops(self):
        sched = make_schedule(2)
        assert sched.steps == 1
        assert sched.topk_per_step == (1,)

    def test_fixed_initial_ten(self):
        sched = make_schedule(100, mode="fixed_initial", fixed_topk=10)
        assert sched.topk_per_step == (10, 5, 2, 1)
        assert sched.steps == 4

    def test_fixed_initial_one(self):
        sched = make_schedule(100, mode="fixed_initial", fixed_topk=1)
        assert sched.topk_per_step == (1,)

    def test_degenerate_n(self):
        with pytest.raises(DegenerateN):
            make_schedule(1)

    def test_fixed_initial_needs_topk(self):
        with pytest.raises(InvalidParams):
            make_schedule(10, mode="fixed_initial")

    def test_closed_form_over_range(self):
        for n in range(2, 4097):
            sched = make_schedule(n)
            t = sched.steps
            assert n // (2**t) == 1
            assert n // (2 ** (t + 1)) == 0
            assert sched.topk_per_step[-1] == 1
            assert all(a >= b for a, b in zip(sched.topk_per_step, sched.topk_per_step[1:]))
            assert all(k >= 1 for k in sched.topk_per_step)


class TestConfig:
    def test_rejects_bad_tau(self):
        with pytest.raises(InvalidParams):
            make_config(tau=1.0)

    def test_rejects_all_zero_weights(self):
        with pytest.raises(InvalidParams):
            make_config(step_weights=(0.0, 0.0))

    def test_rejects_negative_weights(self):
        with pytest.raises(InvalidParams):
            make_config(step_weights=(1.0, -0.1))

    def test_weight_length_checked_at_resolve(self):
        config = make_config(n_crops=8, step_weights=(1.0, 1.0))  # T(8) = 3
        with pytest.raises(ConfigError):
            config.resolved_step_weights(config.schedule().steps)

    def test_uniform_default(self):
        config = make_config(n_crops=8)
        assert config.resolved_step_weights(3) == (1 / 3, 1 / 3, 1 / 3)


class TestDescriptionSet:
    def test_weights_follow_label_similarity(self):
        world, _ = checker_world()
        enc = ToyEncoder(world)
        descs = build_description_set(enc, "label-a", ["label-a", "q0"])
        # the description equal to the label embeds closer to it
        assert descs.weights[0] > descs.weights[1]
        assert math.fsum(descs.weights) == pytest.approx(1.0, abs=1e-12)

    def test_empty_descriptions_rejected(self):
        world, _ = checker_world()
        with pytest.raises(EmptyInput):
            build_description_set(ToyEncoder(world), "x", [])


class TestExpansionStep:
    def test_singleton_crop_set(self):
        world, frame = checker_world()
        enc = ToyEncoder(world)
        state = initial_crop_state(frame, make_config(n_crops=8), enc)
        single = type(state.crops)(
            regions=(state.crops.regions[0],),
            embeddings=(state.crops.embeddings[0],),
            weights=(1.0,),
        )
        descs = build_description_set(enc, "label-a", ["q0 q1"])
        new_crops, trace = expansion_step(
            single, descs, topk=5, tau=1.25, image=frame, encoder=enc,
            image_embedding=state.image_embedding,
        )
        assert len(new_crops) == 1
        assert new_crops.weights == (1.0,)
        assert trace.n_in == 1 and trace.n_out == 1
        assert new_crops.regions[0].contains(single.regions[0])

    def test_planted_feature_dilutes_under_expansion(self):
        """A crop exactly on the planted block embeds to its prototype; one
        expansion mixes in surrounding features and strictly lowers the
        cosine against a description naming that feature."""
        world, frame = checker_world()
        enc = ToyEncoder(world)
        spot_region = Region(2, 2, 3, "img")
        spot_desc = build_description_set(enc, "label-b", ["spot"])

        crops = WeightedCropSet(
            regions=(spot_region,),
            embeddings=(enc.embed_image_patch(frame, spot_region),),
            weights=(1.0,),
        )
        pre = build_matrix(crops, spot_desc).score
        assert pre == pytest.approx(1.0, abs=1e-12)

        new_crops, trace = expansion_step(
            crops, spot_desc, topk=1, tau=1.25, image=frame, encoder=enc,
        )
        post = build_matrix(new_crops, spot_desc).score
        assert trace.score == pytest.approx(pre, abs=1e-15)
        assert post < pre

    def test_selection_rows_drive_output_size(self):
        world, frame = checker_world()
        enc = ToyEncoder(world)
        config = make_config(n_crops=8)
        state = initial_crop_state(frame, config, enc)
        descs = build_description_set(enc, "label-a", ["q0", "q3 q2"])
        new_crops, trace = expansion_step(
            state.crops, descs, topk=4, tau=1.25, image=frame, encoder=enc,
            image_embedding=state.image_embedding,
        )
        assert trace.topk == 4
        assert len(set(trace.selected)) == 4
        rows = {s for s, _ in trace.selected}
        assert trace.n_out == len(rows)
        assert len(new_crops) == len(rows) <= 4


class TestSimilarity:
    def test_reduction_to_baseline_is_exact(self):
        world, frame = checker_world()
        enc = ToyEncoder(world)
        config = make_config(n_crops=8, step_weights=(1.0, 0.0, 0.0))
        descs = build_description_set(enc, "label-a", ["q0 spot", "q2"])
        state = initial_crop_state(frame, config, enc)
        sim, traces = lgca_similarity(frame, descs, config, enc, state=state)
        q = baseline_q_similarity(frame, descs, config, enc, state=state)
        assert sim == q  # bit-equal
        assert traces[0].score == q

    def test_step_weight_scaling_is_linear(self):
        world, frame = checker_world()
        enc = ToyEncoder(world)
        descs = build_description_set(enc, "label-a", ["q0", "spot q1"])
        base = make_config(n_crops=8, step_weights=(0.5, 0.3, 0.2))
        scaled = make_config(n_crops=8, step_weights=(1.5, 0.9, 0.6))
        state = initial_crop_state(frame, base, enc)
        sim_base, _ = lgca_similarity(frame, descs, base, enc, state=state)
        sim_scaled, _ = lgca_similarity(frame, descs, scaled, enc, state=state)
        assert sim_scaled == pytest.approx(3.0 * sim_base, rel=1e-12)

    def test_frontier_shrinks_with_schedule(self):
        world, frame = checker_world()
        enc = ToyEncoder(world)
        config = make_config(n_crops=16)
        descs = build_description_set(enc, "label-a", ["q0", "q1 q2"])
        sched = config.schedule()
        sim, traces = lgca_similarity(frame, descs, config, enc)
        assert len(traces) == sched.steps
        for trace, topk in zip(traces, sched.topk_per_step):
            assert trace.n_out <= topk
        assert traces[-1].topk == 1
        assert traces[-1].n_out == 1
        # step j+1 consumes step j's output
        for prev, nxt in zip(traces, traces[1:]):
            assert nxt.n_in == prev.n_out

    def test_deterministic_given_seed(self):
        world, frame = checker_world()
        enc = ToyEncoder(world)
        config = make_config(n_crops=8, seed=77)
        descs = build_description_set(enc, "label-a", ["q0 q3", "spot"])
        a = lgca_similarity(frame, descs, config, enc)
        b = lgca_similarity(frame, descs, config, enc)
        assert a == b


class TestClassify:
    def _candidates(self, enc, labels_and_texts):
        return [
            (label, build_description_set(enc, label, texts))
            for label, texts in labels_and_texts
        ]

    def test_single_candidate(self):
        world, frame = checker_world()
        enc = ToyEncoder(world)
        report = classify(
            frame,
            self._candidates(enc, [("only", ["q0"])]),
            make_config(n_crops=8),
            enc,
        )
        assert report.predicted_label == "only"
        assert report.image_id == "img"

    def test_identical_candidates_tie_break_lexicographic(self):
        world, frame = checker_world()
        enc = ToyEncoder(world)
        candidates = self._candidates(enc, [("zeta", ["q0 q1"]), ("alpha", ["q0 q1"])])
        report = classify(frame, candidates, make_config(n_crops=8), enc)
        sims = {r.label: r.similarity for r in report.results}
        assert sims["zeta"] == sims["alpha"]
        assert report.predicted_label == "alpha"

    def test_argmax_invariant_under_weight_scaling(self):
        world, frame = checker_world()
        enc = ToyEncoder(world)
        candidates = self._candidates(
            enc, [("a", ["q0", "spot"]), ("b", ["q2 q3"]), ("c", ["q1"])]
        )
        base = classify(frame, candidates, make_config(n_crops=8, step_weights=(1, 1, 1)), enc)
        scaled = classify(
            frame, candidates, make_config(n_crops=8, step_weights=(7, 7, 7)), enc
        )
        assert base.predicted_label == scaled.predicted_label
        for r_base, r_scaled in zip(base.results, scaled.results):
            assert r_scaled.similarity == pytest.approx(7 * r_base.similarity, rel=1e-12)

    def test_no_candidates_rejected(self):
        world, frame = checker_world()
        enc = ToyEncoder(world)
        with pytest.raises(EmptyInput):
            classify(frame, [], make_config(), enc)

    def test_report_round_trips_to_dict(self):
        world, frame = checker_world()
        enc = ToyEncoder(world)
        report = classify(
            frame, self._candidates(enc, [("a", ["q0"])]), make_config(n_crops=8), enc
        )
        d = report.to_dict()
        assert d["image_id"] == "img"
        assert d["predicted_label"] == "a"
        assert len(d["results"][0]["steps"]) == 3
