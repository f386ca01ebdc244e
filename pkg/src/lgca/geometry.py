"""Square-crop sampling and center-anchored region expansion.

All regions are axis-aligned squares inside their source frame. Pixel
arithmetic is integer-only with one rounding rule everywhere: round half
up, ``floor(x + 0.5)``. Crop placement is uniform over all valid top-left
corners; expansion is anchored at the region center and clamped to the
frame, so the expanded region always contains the original.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import InvalidParams
from .rng import stream_for

DEFAULT_PATCH_SIZE = 224


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


@dataclass(frozen=True)
class ImageFrame:
    """8-bit RGB raster, row-major, 3 bytes per pixel."""

    id: str
    width: int
    height: int
    pixels: bytes

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidParams(f"frame {self.id!r}: dimensions must be >= 1")
        expected = self.width * self.height * 3
        if len(self.pixels) != expected:
            raise InvalidParams(
                f"frame {self.id!r}: buffer is {len(self.pixels)} bytes, "
                f"expected {expected} for {self.width}x{self.height} RGB"
            )

    @property
    def min_side(self) -> int:
        return min(self.width, self.height)

    def to_array(self) -> np.ndarray:
        """(height, width, 3) uint8 view of the pixel buffer."""
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(
            self.height, self.width, 3
        )

    @classmethod
    def from_array(cls, frame_id: str, arr: np.ndarray) -> "ImageFrame":
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise InvalidParams("expected an (H, W, 3) array")
        h, w, _ = arr.shape
        return cls(id=frame_id, width=w, height=h, pixels=arr.tobytes())

    @classmethod
    def from_file(cls, path: str, frame_id: str | None = None) -> "ImageFrame":
        """Load a PNG/JPEG file, normalizing to 8-bit RGB."""
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
        if frame_id is None:
            frame_id = _stem(path)
        return cls.from_array(frame_id, arr)


def _stem(path: str) -> str:
    name = path.replace("\\", "/").rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0] if "." in name else name


@dataclass(frozen=True)
class Region:
    """Square sub-window of a source frame; ``side`` pixels on each edge."""

    x0: int
    y0: int
    side: int
    source: str

    def __post_init__(self):
        if self.x0 < 0 or self.y0 < 0 or self.side < 1:
            raise InvalidParams(f"degenerate region {self!r}")

    def contains(self, other: "Region") -> bool:
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and self.x0 + self.side >= other.x0 + other.side
            and self.y0 + self.side >= other.y0 + other.side
        )


def full_region(image: ImageFrame) -> Region:
    """Largest square anchored at the origin (the whole frame when square)."""
    return Region(x0=0, y0=0, side=image.min_side, source=image.id)


def check_region(region: Region, image: ImageFrame) -> None:
    if region.source != image.id:
        raise InvalidParams(
            f"region belongs to {region.source!r}, not frame {image.id!r}"
        )
    if region.x0 + region.side > image.width or region.y0 + region.side > image.height:
        raise InvalidParams(f"region {region} exceeds {image.width}x{image.height}")


@dataclass(frozen=True)
class CropParams:
    """Random-crop controls: N draws of side ratio ~ U(ratio_lo, ratio_hi)."""

    n_crops: int
    ratio_lo: float
    ratio_hi: float
    seed: int

    def __post_init__(self):
        if self.n_crops < 2:
            raise InvalidParams(f"n_crops must be >= 2, got {self.n_crops}")
        if not (0.0 < self.ratio_lo < self.ratio_hi <= 1.0):
            raise InvalidParams(
                f"need 0 < ratio_lo < ratio_hi <= 1, got "
                f"({self.ratio_lo}, {self.ratio_hi})"
            )


def sample_crops(image: ImageFrame, params: CropParams) -> list[Region]:
    """Draw ``n_crops`` square regions, deterministic in (seed, image id).

    Per crop, three draws in fixed order from the stream seeded with
    (params.seed, "crops:<image id>"):

      1. ratio ~ U(ratio_lo, ratio_hi); side = round_half_up(ratio * min(H, W)),
         clamped to [1, min(H, W)];
      2. x0 uniform over {0, ..., W - side};
      3. y0 uniform over {0, ..., H - side}.
    """
    if image.min_side < 2:
        raise InvalidParams(f"frame {image.id!r} too small to crop (min side < 2)")
    m = image.min_side
    rng = stream_for(params.seed, f"crops:{image.id}")
    regions = []
    for _ in range(params.n_crops):
        ratio = rng.uniform(params.ratio_lo, params.ratio_hi)
        side = min(max(round_half_up(ratio * m), 1), m)
        x0 = rng.next_below(image.width - side + 1)
        y0 = rng.next_below(image.height - side + 1)
        regions.append(Region(x0=x0, y0=y0, side=side, source=image.id))
    return regions


def expand_region(region: Region, tau: float, image: ImageFrame) -> Region:
    """Grow ``region`` by factor ``tau`` about its center, clamped in-frame.

    new_side = min(round_half_up(tau * side), min(H, W)), forced to at
    least side + 1 while below the cap; the top-left corner moves back by
    (new_side - side) div 2 and is then clamped to keep the region inside
    the frame. The result always contains the input region, and repeated
    expansion reaches the full min(H, W) square in finitely many steps.
    """
    if tau <= 1.0:
        raise InvalidParams(f"expansion factor must be > 1, got {tau}")
    check_region(region, image)
    cap = image.min_side
    # below the cap, growth must be strict: round-half-up alone would stall
    # on tiny regions (e.g. side 1 at tau 1.25)
    new_side = min(max(round_half_up(tau * region.side), region.side + 1), cap)
    delta = (new_side - region.side) // 2
    x0 = min(max(region.x0 - delta, 0), image.width - new_side)
    y0 = min(max(region.y0 - delta, 0), image.height - new_side)
    return Region(x0=x0, y0=y0, side=new_side, source=region.source)


def extract_patch(
    image: ImageFrame, region: Region, out_size: int = DEFAULT_PATCH_SIZE
) -> ImageFrame:
    """Resample the region to ``out_size`` square via bilinear interpolation.

    The sample grid is corner-aligned: output pixel u maps to source
    coordinate u * (side - 1) / (out_size - 1), so corners map to corners,
    an identity-size extraction is byte-exact, and a constant region stays
    constant. Values are rounded half up into uint8.
    """
    if out_size < 1:
        raise InvalidParams(f"out_size must be >= 1, got {out_size}")
    check_region(region, image)
    patch_id = f"{region.source}+{region.x0}+{region.y0}+{region.side}@{out_size}"

    src = image.to_array()[
        region.y0 : region.y0 + region.side, region.x0 : region.x0 + region.side
    ]
    if out_size == region.side:
        return ImageFrame.from_array(patch_id, src)
    return ImageFrame.from_array(patch_id, _bilinear_resize(src, out_size))


def resample_frame(image: ImageFrame, out_size: int = DEFAULT_PATCH_SIZE) -> ImageFrame:
    """Whole frame (square or not) resampled to out_size x out_size."""
    if out_size < 1:
        raise InvalidParams(f"out_size must be >= 1, got {out_size}")
    if image.width == image.height == out_size:
        return image
    out = _bilinear_resize(image.to_array(), out_size)
    return ImageFrame.from_array(f"{image.id}@{out_size}", out)


def _sample_coords(src_size: int, out_size: int) -> np.ndarray:
    if out_size == 1:
        return np.array([(src_size - 1) / 2.0])
    return np.arange(out_size, dtype=np.float64) * (src_size - 1) / (out_size - 1)


def _bilinear_resize(src: np.ndarray, out_size: int) -> np.ndarray:
    arr = src.astype(np.float64)
    h, w = arr.shape[:2]

    ys = _sample_coords(h, out_size)
    i0y = np.floor(ys).astype(np.int64)
    i1y = np.minimum(i0y + 1, h - 1)
    fy = (ys - i0y)[:, None, None]
    # lerp as a + t*(b - a): exact for constant fields and integer coords
    rows = arr[i0y] + fy * (arr[i1y] - arr[i0y])

    xs = _sample_coords(w, out_size)
    i0x = np.floor(xs).astype(np.int64)
    i1x = np.minimum(i0x + 1, w - 1)
    fx = (xs - i0x)[None, :, None]
    out = rows[:, i0x] + fx * (rows[:, i1x] - rows[:, i0x])
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
