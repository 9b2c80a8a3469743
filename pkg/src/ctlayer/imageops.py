"""Deterministic image transforms used to build curated "pathological" datasets.

Five transforms are provided: rotation (lossless right-angle or bilinear),
down-up resampling, grid patch shuffling, and background replacement with
Gaussian noise or a supplied image behind a binary foreground mask.

Conventions, fixed so outputs are byte-reproducible:
  * 8-bit RGB throughout; intermediate math in float64.
  * Rounding back to 8 bits is round-half-up (floor(x + 0.5)) after clipping.
  * Bilinear resampling uses half-pixel-center source coordinates with edge
    clamping; bilinear rotation samples about the image center and fills
    out-of-source regions with black.
  * Every randomized transform takes an explicit seed.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PilImage

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class Image:
    """8-bit RGB raster: pixels is (height, width, 3) uint8, row-major."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError("image pixels must be (height, width, 3)")
        if arr.dtype != np.uint8:
            raise ValidationError("image pixels must be uint8")
        arr = np.ascontiguousarray(arr).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


@dataclass(frozen=True, eq=False)
class Mask:
    """Binary foreground mask: values is (height, width) uint8 of {0, 1}."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError("mask values must be (height, width)")
        if arr.dtype != np.uint8 or not np.all((arr == 0) | (arr == 1)):
            raise ValidationError("mask values must be uint8 of 0 or 1")
        arr = np.ascontiguousarray(arr).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])


def _round_to_u8(values: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(values, 0.0, 255.0) + 0.5).astype(np.uint8)


def _sample_bilinear(src: np.ndarray, rows: np.ndarray, cols: np.ndarray, zero_outside: bool) -> np.ndarray:
    """Bilinear sample float64 ``src`` (h, w, c) at fractional (rows, cols).

    ``zero_outside`` makes out-of-range corners contribute black; otherwise
    coordinates are expected pre-clamped and indices are merely clipped.
    """
    h, w = src.shape[:2]
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr = rows - r0
    fc = cols - c0
    out = np.zeros(rows.shape + (src.shape[2],), dtype=np.float64)
    corners = (
        (r0, c0, (1.0 - fr) * (1.0 - fc)),
        (r0, c0 + 1, (1.0 - fr) * fc),
        (r0 + 1, c0, fr * (1.0 - fc)),
        (r0 + 1, c0 + 1, fr * fc),
    )
    for rr, cc, wgt in corners:
        if zero_outside:
            valid = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
            wgt = wgt * valid
        ri = np.clip(rr, 0, h - 1)
        ci = np.clip(cc, 0, w - 1)
        out += wgt[..., None] * src[ri, ci]
    return out


def rotate(img: Image, angle: float, mode: str = "right-angle") -> Image:
    """Rotate counterclockwise; right-angle mode is a lossless pixel permutation.

    Right-angle mode requires angle in {0, 90, 180, 270} and, for 90/270,
    swaps the canvas dimensions. Bilinear mode accepts any angle, rotates
    about the image center on the same canvas, and fills regions outside the
    source with black.
    """
    if mode == "right-angle":
        if angle not in (0, 90, 180, 270):
            raise ValidationError("right-angle mode requires angle in {0, 90, 180, 270}")
        return Image(np.ascontiguousarray(np.rot90(img.pixels, k=int(angle) // 90)))
    if mode != "bilinear":
        raise ValidationError(f"unknown rotation mode {mode!r}")
    h, w = img.height, img.width
    theta = math.radians(float(angle))
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    center_r = (h - 1) / 2.0
    center_c = (w - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    di = rows - center_r
    dj = cols - center_c
    src_r = di * cos_t + dj * sin_t + center_r
    src_c = -di * sin_t + dj * cos_t + center_c
    sampled = _sample_bilinear(img.pixels.astype(np.float64), src_r, src_c, zero_outside=True)
    return Image(_round_to_u8(sampled))


def _resize_bilinear_float(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    sh, sw = src.shape[:2]
    rows = (np.arange(out_h, dtype=np.float64) + 0.5) * (sh / out_h) - 0.5
    cols = (np.arange(out_w, dtype=np.float64) + 0.5) * (sw / out_w) - 0.5
    rows = np.clip(rows, 0.0, sh - 1.0)
    cols = np.clip(cols, 0.0, sw - 1.0)
    grid_r, grid_c = np.meshgrid(rows, cols, indexing="ij")
    return _sample_bilinear(src, grid_r, grid_c, zero_outside=False)


def down_up(img: Image, factor: int) -> Image:
    """Average-pool down by ``factor`` then bilinear-upsample back; factor 1 is identity."""
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ValidationError("factor must be an integer >= 1")
    h, w = img.height, img.width
    if h % factor or w % factor:
        raise ValidationError(f"factor {factor} does not divide {w}x{h}")
    f = int(factor)
    pooled = (
        img.pixels.astype(np.float64)
        .reshape(h // f, f, w // f, f, 3)
        .mean(axis=(1, 3))
    )
    return Image(_round_to_u8(_resize_bilinear_float(pooled, h, w)))


def bilinear_resize(img: Image, out_w: int, out_h: int) -> Image:
    """Plain bilinear resize (half-pixel centers, edge clamp, round-half-up)."""
    if out_w < 1 or out_h < 1:
        raise ValidationError("target size must be positive")
    return Image(_round_to_u8(_resize_bilinear_float(img.pixels.astype(np.float64), out_h, out_w)))


def center_crop(img: Image, out_w: int, out_h: int) -> Image:
    if out_w < 1 or out_h < 1 or out_w > img.width or out_h > img.height:
        raise ValidationError(f"cannot crop {out_w}x{out_h} from {img.width}x{img.height}")
    top = (img.height - out_h) // 2
    left = (img.width - out_w) // 2
    return Image(np.ascontiguousarray(img.pixels[top : top + out_h, left : left + out_w]))


def shuffle_patches(img: Image, grid: int = 4, perm=None, seed: int = 0) -> Image:
    """Split into grid x grid tiles (row-major) and rearrange them.

    ``perm[i]`` names the source tile placed at position i; when absent, a
    uniform permutation is drawn from the seeded generator. The output pixel
    multiset is exactly the input's.
    """
    g = int(grid)
    if g < 1:
        raise ValidationError("grid must be >= 1")
    h, w = img.height, img.width
    if h % g or w % g:
        raise ValidationError(f"grid {g} does not divide {w}x{h}")
    n_tiles = g * g
    if perm is None:
        perm = np.random.default_rng(seed).permutation(n_tiles)
    perm = np.asarray(perm)
    if sorted(perm.tolist()) != list(range(n_tiles)):
        raise ValidationError(f"perm is not a permutation of 0..{n_tiles - 1}")
    th, tw = h // g, w // g
    out = np.empty_like(img.pixels)
    for dest in range(n_tiles):
        src = int(perm[dest])
        dr, dc = divmod(dest, g)
        sr, sc = divmod(src, g)
        out[dr * th : (dr + 1) * th, dc * tw : (dc + 1) * tw] = img.pixels[
            sr * th : (sr + 1) * th, sc * tw : (sc + 1) * tw
        ]
    return Image(out)


def composite_background(fg: Image, mask: Mask, bg: Image) -> Image:
    """Per-pixel select: foreground where mask is 1, background where 0."""
    if (fg.width, fg.height) != (bg.width, bg.height) or (fg.width, fg.height) != (
        mask.width,
        mask.height,
    ):
        raise ValidationError(
            f"dimension mismatch: fg {fg.width}x{fg.height}, mask {mask.width}x{mask.height}, "
            f"bg {bg.width}x{bg.height}"
        )
    keep = mask.values[..., None] == 1
    return Image(np.where(keep, fg.pixels, bg.pixels))


def gaussian_background(width: int, height: int, mean: float = 0.5, std: float = 0.25, seed: int = 0) -> Image:
    """I.i.d. normal noise per pixel/channel in unit scale, mapped to 8 bits.

    Values are drawn as N(mean, std^2) in [0, 1] units, scaled by 255,
    clipped, then rounded half-up; identical seeds give identical images.
    """
    if width < 1 or height < 1:
        raise ValidationError("size must be positive")
    if std < 0:
        raise ValidationError("std must be >= 0")
    rng = np.random.default_rng(seed)
    values = rng.normal(loc=float(mean), scale=float(std), size=(int(height), int(width), 3))
    return Image(_round_to_u8(values * 255.0))


def load_image(path) -> Image:
    with PilImage.open(path) as pil:
        arr = np.asarray(pil.convert("RGB"), dtype=np.uint8)
    return Image(arr)


def save_image(img: Image, path) -> None:
    PilImage.fromarray(img.pixels, mode="RGB").save(Path(path), format="PNG")


def encode_png(img: Image) -> bytes:
    buf = io.BytesIO()
    PilImage.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def load_mask(path) -> Mask:
    """Read a PNG as a binary mask: any nonzero pixel (any channel) means 1."""
    with PilImage.open(path) as pil:
        arr = np.asarray(pil)
    if arr.ndim == 3:
        binary = np.any(arr != 0, axis=-1)
    else:
        binary = arr != 0
    return Mask(binary.astype(np.uint8))


def save_mask(mask: Mask, path) -> None:
    PilImage.fromarray((mask.values * 255).astype(np.uint8), mode="L").save(Path(path), format="PNG")
