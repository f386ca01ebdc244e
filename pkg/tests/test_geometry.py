import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lgca.errors import InvalidParams
from lgca.geometry import (
    CropParams,
    ImageFrame,
    Region,
    expand_region,
    extract_patch,
    full_region,
    sample_crops,
)


def blank_frame(frame_id: str, width: int, height: int, value: int = 0) -> ImageFrame:
    arr = np.full((height, width, 3), value, dtype=np.uint8)
    return ImageFrame.from_array(frame_id, arr)


class TestFrameAndRegionInvariants:
    def test_buffer_length_checked(self):
        with pytest.raises(InvalidParams):
            ImageFrame(id="x", width=2, height=2, pixels=b"\x00" * 5)

    def test_dimensions_checked(self):
        with pytest.raises(InvalidParams):
            ImageFrame(id="x", width=0, height=2, pixels=b"")

    def test_region_rejects_negative(self):
        with pytest.raises(InvalidParams):
            Region(x0=-1, y0=0, side=3, source="x")

    def test_region_rejects_zero_side(self):
        with pytest.raises(InvalidParams):
            Region(x0=0, y0=0, side=0, source="x")


class TestSampleCrops:
    def test_ratio_window_respected(self):
        img = blank_frame("a", 100, 100)
        params = CropParams(n_crops=100, ratio_lo=0.5, ratio_hi=0.9, seed=7)
        regions = sample_crops(img, params)
        assert len(regions) == 100
        for r in regions:
            assert 50 <= r.side <= 90
            assert r.x0 + r.side <= 100
            assert r.y0 + r.side <= 100

    def test_ratio_near_one_gives_full_frame(self):
        img = blank_frame("b", 64, 64)
        params = CropParams(n_crops=2, ratio_lo=1.0 - 1e-9, ratio_hi=1.0, seed=3)
        for r in sample_crops(img, params):
            assert (r.x0, r.y0, r.side) == (0, 0, 64)

    def test_deterministic_under_seed(self):
        img = blank_frame("c", 100, 100)
        params = CropParams(n_crops=5, ratio_lo=0.3, ratio_hi=0.8, seed=42)
        assert sample_crops(img, params) == sample_crops(img, params)

    def test_different_image_id_shifts_stream(self):
        params = CropParams(n_crops=5, ratio_lo=0.3, ratio_hi=0.8, seed=42)
        a = sample_crops(blank_frame("one", 100, 100), params)
        b = sample_crops(blank_frame("two", 100, 100), params)
        assert a != [Region(r.x0, r.y0, r.side, "one") for r in b]

    def test_rejects_bad_params(self):
        with pytest.raises(InvalidParams):
            CropParams(n_crops=1, ratio_lo=0.5, ratio_hi=0.9, seed=0)
        with pytest.raises(InvalidParams):
            CropParams(n_crops=4, ratio_lo=0.9, ratio_hi=0.5, seed=0)
        with pytest.raises(InvalidParams):
            CropParams(n_crops=4, ratio_lo=0.0, ratio_hi=0.5, seed=0)
        with pytest.raises(InvalidParams):
            CropParams(n_crops=4, ratio_lo=0.5, ratio_hi=1.2, seed=0)

    def test_rejects_tiny_image(self):
        img = blank_frame("t", 1, 50)
        with pytest.raises(InvalidParams):
            sample_crops(img, CropParams(n_crops=2, ratio_lo=0.5, ratio_hi=0.9, seed=0))

    def test_non_square_frame_stays_in_bounds(self):
        img = blank_frame("wide", 120, 48)
        params = CropParams(n_crops=64, ratio_lo=0.4, ratio_hi=1.0, seed=11)
        for r in sample_crops(img, params):
            assert r.side <= 48
            assert r.x0 + r.side <= 120
            assert r.y0 + r.side <= 48


class TestExpandRegion:
    def test_center_anchored_growth(self):
        img = blank_frame("big", 1000, 1000)
        r = Region(x0=40, y0=40, side=100, source="big")
        out = expand_region(r, 1.25, img)
        assert (out.x0, out.y0, out.side) == (28, 28, 125)

    def test_clamps_at_origin(self):
        img = blank_frame("big", 1000, 1000)
        r = Region(x0=0, y0=0, side=100, source="big")
        out = expand_region(r, 1.1, img)
        assert (out.x0, out.y0, out.side) == (0, 0, 110)

    def test_full_frame_is_fixed_point(self):
        img = blank_frame("sq", 64, 64)
        r = full_region(img)
        for tau in (1.1, 1.25, 4.0):
            assert expand_region(r, tau, img) == r

    def test_rejects_tau_at_or_below_one(self):
        img = blank_frame("sq", 64, 64)
        r = Region(x0=0, y0=0, side=10, source="sq")
        for tau in (1.0, 0.5, -2.0):
            with pytest.raises(InvalidParams):
                expand_region(r, tau, img)

    def test_rejects_foreign_region(self):
        img = blank_frame("sq", 64, 64)
        r = Region(x0=0, y0=0, side=10, source="other")
        with pytest.raises(InvalidParams):
            expand_region(r, 1.25, img)


@st.composite
def region_in_frame(draw):
    w = draw(st.integers(min_value=2, max_value=200))
    h = draw(st.integers(min_value=2, max_value=200))
    side = draw(st.integers(min_value=1, max_value=min(w, h)))
    x0 = draw(st.integers(min_value=0, max_value=w - side))
    y0 = draw(st.integers(min_value=0, max_value=h - side))
    return w, h, Region(x0=x0, y0=y0, side=side, source="f")


class TestExpansionProperties:
    @settings(max_examples=300, deadline=None)
    @given(region_in_frame(), st.floats(min_value=1.0, max_value=8.0, exclude_min=True))
    def test_containment_bounds_and_growth(self, case, tau):
        w, h, region = case
        img = blank_frame("f", w, h)
        out = expand_region(region, tau, img)
        assert out.contains(region)
        assert out.x0 + out.side <= w and out.y0 + out.side <= h
        assert out.side >= region.side
        if out.side == region.side:
            assert region.side == img.min_side

    @settings(max_examples=100, deadline=None)
    @given(region_in_frame(), st.floats(min_value=1.0, max_value=4.0, exclude_min=True))
    def test_repeated_expansion_reaches_cap_and_sticks(self, case, tau):
        w, h, region = case
        img = blank_frame("f", w, h)
        current = region
        for _ in range(img.min_side + 1):
            grown = expand_region(current, tau, img)
            if grown == current:
                break
            current = grown
        assert current.side == img.min_side
        assert expand_region(current, tau, img) == current


class TestExtractPatch:
    def test_identity_resample_is_byte_exact(self):
        rng = np.random.default_rng(0)
        arr = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        img = ImageFrame.from_array("p", arr)
        out = extract_patch(img, full_region(img), out_size=32)
        assert out.pixels == img.pixels

    def test_corners_preserved_on_upsample(self):
        arr = np.zeros((2, 2, 3), dtype=np.uint8)
        arr[0, 0] = 10
        arr[0, 1] = 90
        arr[1, 0] = 170
        arr[1, 1] = 250
        img = ImageFrame.from_array("cb", arr)
        out = extract_patch(img, full_region(img), out_size=4).to_array()
        assert tuple(out[0, 0]) == (10, 10, 10)
        assert tuple(out[0, 3]) == (90, 90, 90)
        assert tuple(out[3, 0]) == (170, 170, 170)
        assert tuple(out[3, 3]) == (250, 250, 250)

    @pytest.mark.parametrize("out_size", [1, 3, 16, 224])
    def test_constant_field_invariance(self, out_size):
        img = blank_frame("u", 9, 9, value=137)
        out = extract_patch(img, Region(2, 3, 5, "u"), out_size=out_size)
        assert set(out.to_array().ravel().tolist()) == {137}

    def test_subwindow_extraction(self):
        arr = np.arange(6 * 6 * 3, dtype=np.uint8).reshape(6, 6, 3)
        img = ImageFrame.from_array("s", arr)
        out = extract_patch(img, Region(1, 2, 3, "s"), out_size=3)
        assert np.array_equal(out.to_array(), arr[2:5, 1:4])

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        arr = rng.integers(0, 256, size=(40, 40, 3), dtype=np.uint8)
        img = ImageFrame.from_array("d", arr)
        r = Region(3, 7, 21, "d")
        assert extract_patch(img, r, 224).pixels == extract_patch(img, r, 224).pixels


class TestImageIO:
    def test_png_roundtrip(self, tmp_path):
        rng = np.random.default_rng(9)
        arr = rng.integers(0, 256, size=(20, 30, 3), dtype=np.uint8)
        from PIL import Image

        path = tmp_path / "img.png"
        Image.fromarray(arr).save(path)
        frame = ImageFrame.from_file(str(path))
        assert frame.id == "img"
        assert (frame.width, frame.height) == (30, 20)
        assert np.array_equal(frame.to_array(), arr)
