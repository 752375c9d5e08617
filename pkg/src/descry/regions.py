"""Mask-derived head/feet points, torso/leg band patch extraction and the
patch augmentation scheme used to prepare classifier training data.

Band fractions are measured over the detected bounding box height by
default: a band (0.20, 0.50) selects bbox-local rows r with
0.20*H <= r < 0.50*H. Anchoring to the occupied mask extent instead is
available behind the ``anchor`` flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DescryError
from .geometry import ImagePoint
from .model import PersonCandidate, decode_mask


class EmptyBandError(DescryError):
    """No foreground pixels fall inside the requested band."""


class EmptyMaskError(DescryError):
    """Instance mask has no foreground pixels."""


@dataclass(frozen=True)
class RegionBand:
    top_fraction: float
    bottom_fraction: float

    def __post_init__(self):
        if not (0.0 <= self.top_fraction < self.bottom_fraction <= 1.0):
            raise ValueError("band fractions must satisfy 0 <= top < bottom <= 1")


TORSO_BAND = RegionBand(0.20, 0.50)
LEG_BAND = RegionBand(0.50, 0.70)


@dataclass(frozen=True)
class Patch:
    """Background-free image patch: RGB pixels plus a per-pixel validity mask.

    Invalid (background) pixels are zeroed. ``origin_x``/``origin_y`` locate
    the patch's top-left corner in full-frame coordinates.
    """

    pixels: np.ndarray
    valid: np.ndarray
    origin_x: int = 0
    origin_y: int = 0

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.uint8)
        valid = np.asarray(self.valid, dtype=bool)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError("patch pixels must be HxWx3")
        if valid.shape != pixels.shape[:2]:
            raise ValueError("valid mask shape must match pixels")
        if not valid.any():
            raise ValueError("patch must contain at least one valid pixel")
        pixels = pixels.copy()
        pixels[~valid] = 0
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "valid", valid)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def valid_count(self) -> int:
        return int(self.valid.sum())


def head_feet_points(candidate: PersonCandidate) -> tuple[ImagePoint, ImagePoint]:
    """Head and feet points from the instance mask, in full-frame pixels.

    Head is the centroid of foreground pixels in the topmost two occupied
    mask rows, feet the centroid over the bottommost two; the two-row window
    keeps the points stable under single-pixel mask noise.
    """
    bitmap = decode_mask(candidate.mask)
    rows = np.flatnonzero(bitmap.any(axis=1))
    if rows.size == 0:
        raise EmptyMaskError(f"candidate '{candidate.candidate_id}' has an empty mask")

    def centroid(row_ids):
        ys, xs = np.nonzero(bitmap[row_ids])
        return ImagePoint(
            candidate.bbox.x + float(xs.mean()),
            candidate.bbox.y + float(row_ids[ys].mean()),
        )

    head = centroid(rows[:2])
    feet = centroid(rows[-2:])
    return head, feet


def band_rows(candidate: PersonCandidate, band: RegionBand, anchor: str = "bbox") -> range:
    """Bbox-local row range selected by a band."""
    if anchor == "bbox":
        base, extent = 0, candidate.bbox.height
    elif anchor == "mask":
        bitmap = decode_mask(candidate.mask)
        rows = np.flatnonzero(bitmap.any(axis=1))
        if rows.size == 0:
            raise EmptyMaskError(f"candidate '{candidate.candidate_id}' has an empty mask")
        base, extent = int(rows[0]), int(rows[-1] - rows[0] + 1)
    else:
        raise ValueError(f"unknown band anchor '{anchor}'")
    lo = int(np.ceil(band.top_fraction * extent))
    hi = int(np.ceil(band.bottom_fraction * extent))
    return range(base + lo, base + hi)


def extract_patch(candidate: PersonCandidate, frame_image: np.ndarray,
                  band: RegionBand, anchor: str = "bbox") -> Patch:
    """Extract the background-free patch for one body band.

    The patch is the tight bounding rectangle of the candidate's foreground
    pixels within the band's rows; pixels outside the instance mask are
    flagged invalid and zeroed. Raises EmptyBandError when the band contains
    no foreground (the cascade treats that attribute as unevaluable).
    """
    frame_image = np.asarray(frame_image)
    bbox = candidate.bbox
    if frame_image.ndim != 3 or frame_image.shape[2] != 3:
        raise ValueError("frame image must be HxWx3")
    if (bbox.x < 0 or bbox.y < 0
            or bbox.x + bbox.width > frame_image.shape[1]
            or bbox.y + bbox.height > frame_image.shape[0]):
        raise ValueError("frame image does not cover the candidate bbox")
    bitmap = decode_mask(candidate.mask)
    rows = band_rows(candidate, band, anchor=anchor)
    banded = np.zeros_like(bitmap)
    row_lo = max(rows.start, 0)
    row_hi = min(rows.stop, bbox.height)
    if row_lo < row_hi:
        banded[row_lo:row_hi] = bitmap[row_lo:row_hi]
    if not banded.any():
        raise EmptyBandError(
            f"empty band ({band.top_fraction:.2f}, {band.bottom_fraction:.2f}) "
            f"for candidate '{candidate.candidate_id}'"
        )
    ys, xs = np.nonzero(banded)
    r0, r1 = int(ys.min()), int(ys.max()) + 1
    c0, c1 = int(xs.min()), int(xs.max()) + 1
    window = frame_image[bbox.y + r0:bbox.y + r1, bbox.x + c0:bbox.x + c1, :]
    return Patch(
        pixels=window,
        valid=banded[r0:r1, c0:c1],
        origin_x=bbox.x + c0,
        origin_y=bbox.y + r0,
    )


@dataclass(frozen=True)
class AugmentConfig:
    angles: tuple = (1.0, 2.0, 3.0, 4.0, 5.0, -1.0, -2.0, -3.0, -4.0, -5.0)
    gamma: float = 1.5
    horizontal_flip: bool = True
    vertical_flip: bool = True
    resample: str = "bilinear"

    def outputs_per_patch(self) -> int:
        return (1 + int(self.horizontal_flip) + int(self.vertical_flip)
                + len(self.angles) + (1 if self.gamma != 1.0 else 0))


def flip_patch(patch: Patch, axis: str) -> Patch:
    if axis == "horizontal":
        return Patch(patch.pixels[:, ::-1], patch.valid[:, ::-1],
                     patch.origin_x, patch.origin_y)
    if axis == "vertical":
        return Patch(patch.pixels[::-1, :], patch.valid[::-1, :],
                     patch.origin_x, patch.origin_y)
    raise ValueError(f"unknown flip axis '{axis}'")


def apply_gamma(patch: Patch, gamma: float) -> Patch:
    """Brightness adjustment: out = 255 * (in/255) ** (1/gamma).

    gamma > 1 brightens; gamma = 1 is a pixel-exact identity.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    out = np.rint(255.0 * (patch.pixels / 255.0) ** (1.0 / gamma))
    return Patch(np.clip(out, 0, 255).astype(np.uint8), patch.valid,
                 patch.origin_x, patch.origin_y)


def rotate_patch(patch: Patch, degrees: float, resample: str = "bilinear") -> Patch:
    """Rotate about the patch center. Validity never leaks: a resampled pixel
    is valid only when every source pixel it draws from is valid."""
    h, w = patch.valid.shape
    theta = np.radians(degrees)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w]
    # inverse mapping: rotate destination coords back into the source frame
    dx, dy = xs - cx, ys - cy
    src_x = cos_t * dx + sin_t * dy + cx
    src_y = -sin_t * dx + cos_t * dy + cy

    if resample == "nearest":
        nx = np.rint(src_x).astype(int)
        ny = np.rint(src_y).astype(int)
        inside = (nx >= 0) & (nx < w) & (ny >= 0) & (ny < h)
        nx_c, ny_c = np.clip(nx, 0, w - 1), np.clip(ny, 0, h - 1)
        pixels = patch.pixels[ny_c, nx_c]
        valid = inside & patch.valid[ny_c, nx_c]
        pixels = pixels.copy()
        pixels[~valid] = 0
        return Patch(pixels, valid, patch.origin_x, patch.origin_y)
    if resample != "bilinear":
        raise ValueError(f"unknown resample mode '{resample}'")

    x0 = np.floor(src_x).astype(int)
    y0 = np.floor(src_y).astype(int)
    fx = src_x - x0
    fy = src_y - y0
    acc = np.zeros((h, w, 3), dtype=float)
    validity = np.ones((h, w), dtype=bool)
    for oy, wy in ((0, 1.0 - fy), (1, fy)):
        for ox, wx in ((0, 1.0 - fx), (1, fx)):
            weight = wx * wy
            sx, sy = x0 + ox, y0 + oy
            inside = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
            sx_c, sy_c = np.clip(sx, 0, w - 1), np.clip(sy, 0, h - 1)
            acc += weight[..., None] * np.where(
                inside[..., None], patch.pixels[sy_c, sx_c].astype(float), 0.0)
            contributes = weight > 1e-12
            ok = ~contributes | (inside & patch.valid[sy_c, sx_c])
            validity &= ok
    pixels = np.clip(np.rint(acc), 0, 255).astype(np.uint8)
    pixels[~validity] = 0
    return Patch(pixels, validity, patch.origin_x, patch.origin_y)


def augment_patch_named(patch: Patch, config: AugmentConfig = AugmentConfig()):
    """(transform_name, patch) pairs for one input, in deterministic order:
    the original, flips, every configured rotation, then the gamma-adjusted
    copy (skipped when gamma is exactly 1)."""
    out = [("original", patch)]
    if config.horizontal_flip:
        out.append(("hflip", flip_patch(patch, "horizontal")))
    if config.vertical_flip:
        out.append(("vflip", flip_patch(patch, "vertical")))
    for angle in config.angles:
        out.append((f"rot{angle:+g}", rotate_patch(patch, angle, resample=config.resample)))
    if config.gamma != 1.0:
        out.append((f"gamma{config.gamma:g}", apply_gamma(patch, config.gamma)))
    return out


def augment_patches(patches, config: AugmentConfig = AugmentConfig()) -> list[Patch]:
    """Expand each patch into its augmented family (see augment_patch_named)."""
    return [p for patch in patches for _, p in augment_patch_named(patch, config)]


def save_patch_image(patch: Patch, path) -> None:
    """Write a patch as RGBA PNG; the alpha channel carries validity."""
    from PIL import Image

    rgba = np.dstack([patch.pixels, np.where(patch.valid, 255, 0).astype(np.uint8)])
    Image.fromarray(rgba, mode="RGBA").save(path)


def load_patch_image(path) -> Patch:
    """Read a patch image; alpha > 127 marks valid pixels. Plain RGB images
    load as fully valid."""
    from PIL import Image

    with Image.open(path) as img:
        rgba = np.asarray(img.convert("RGBA"))
    return Patch(pixels=rgba[..., :3], valid=rgba[..., 3] > 127)
