"""Mammogram intensity normalization and isotropic resizing.

Three per-image transforms:

* window_rescale: clip to ``[mode - 500, mode + 800]`` around the modal
  non-background intensity and stretch linearly to 0..255 (FFDM images).
* od_map: gray value -> optical density via an affine-in-log10 scanner
  calibration, clamped and stretched to 0..255 (digitized film).
* isotropic_resize: shrink so the long side fits 2100 px and the short side
  fits 1700 px, whichever binds; never upscale.

All roundings are half-up to the nearest integer.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, DegenerateInputError, InputError

RESIZE_KERNEL = "pil-box-area-average"


@dataclass(frozen=True, eq=False)
class PixelImage:
    """Grayscale image as an ``(height, width)`` integer array."""

    pixels: np.ndarray
    bit_depth: int = 16

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 2 or p.size == 0:
            raise InputError(f"expected a non-empty 2-D pixel grid, got shape {p.shape}")
        if not np.issubdtype(p.dtype, np.integer):
            raise InputError(f"pixels must be integers, got {p.dtype}")
        if not 1 <= self.bit_depth <= 16:
            raise InputError(f"bit depth must be in 1..16, got {self.bit_depth}")
        if p.min() < 0 or p.max() >= 2**self.bit_depth:
            raise InputError(f"pixel values must lie in [0, 2^{self.bit_depth})")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class WindowConfig:
    lower_offset: int = 500
    upper_offset: int = 800
    background_threshold: int = 0

    def __post_init__(self):
        if self.lower_offset < 0 or self.upper_offset < 0:
            raise ConfigError("window offsets must be non-negative")
        if self.lower_offset + self.upper_offset == 0:
            raise ConfigError("window must have positive width")


@dataclass(frozen=True)
class OdCalibration:
    """``od = clamp(slope * log10(gray) + intercept, od_min, od_max)``.

    Scanner-specific coefficients come from the dataset provider. With
    ``invert=False`` higher optical density maps to a higher output value;
    ``invert=True`` flips the output so dense film is dark.
    """

    slope: float
    intercept: float
    od_min: float
    od_max: float
    invert: bool = False
    name: str = "custom"

    def __post_init__(self):
        vals = (self.slope, self.intercept, self.od_min, self.od_max)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError("calibration coefficients must be finite")
        if self.slope == 0:
            raise ConfigError("calibration slope of 0 is not a monotone mapping")
        if not self.od_min < self.od_max:
            raise ConfigError("od_min must be smaller than od_max")

    @classmethod
    def from_json(cls, path) -> OdCalibration:
        data = json.loads(Path(path).read_text())
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class ResizeConfig:
    max_long: int = 2100
    max_short: int = 1700

    def __post_init__(self):
        if not self.max_long >= self.max_short > 0:
            raise ConfigError("need max_long >= max_short > 0")


@dataclass
class PreprocessMeta:
    """JSON sidecar contents written next to each processed image."""

    source: str
    mode: str
    width_in: int
    height_in: int
    width_out: int
    height_out: int
    scale: float
    kernel: str | None = None
    intensity_mode: int | None = None
    window: list[int] | None = None
    calibration: str | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = asdict(self)
        d["format_version"] = 1
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def mode_excluding_background(img: PixelImage, cfg: WindowConfig = WindowConfig()) -> int:
    """Most frequent intensity above the background threshold.

    Ties go to the smallest intensity.

    Raises:
        DegenerateInputError: if every pixel is background.
    """
    values = img.pixels.ravel()
    values = values[values > cfg.background_threshold]
    if values.size == 0:
        raise DegenerateInputError("image has no pixels above the background threshold")
    hist = np.bincount(values)
    return int(np.argmax(hist))  # argmax returns the first maximum


def window_rescale(img: PixelImage, cfg: WindowConfig = WindowConfig()) -> tuple[PixelImage, dict]:
    """Clip to the window around the mode and stretch it to 0..255.

    Returns:
        The 8-bit image and ``{"intensity_mode": m, "window": [lo, hi]}``.
    """
    m = mode_excluding_background(img, cfg)
    lo, hi = m - cfg.lower_offset, m + cfg.upper_offset
    p = np.clip(img.pixels.astype(np.int64), lo, hi) - lo
    width = hi - lo
    # exact integer form of floor(255 * p / width + 1/2)
    out = (2 * 255 * p + width) // (2 * width)
    return PixelImage(out.astype(np.uint8), 8), {"intensity_mode": m, "window": [lo, hi]}


def od_map(img: PixelImage, cal: OdCalibration) -> PixelImage:
    """Map gray values to optical density and stretch ``[od_min, od_max]`` to 0..255.

    Gray value 0 is treated as 1 so the logarithm stays finite.
    """
    g = np.maximum(img.pixels.astype(np.float64), 1.0)
    od = np.clip(cal.slope * np.log10(g) + cal.intercept, cal.od_min, cal.od_max)
    out = round_half_up((od - cal.od_min) / (cal.od_max - cal.od_min) * 255.0)
    if cal.invert:
        out = 255.0 - out
    return PixelImage(out.astype(np.uint8), 8)


def resize_scale(width: int, height: int, cfg: ResizeConfig = ResizeConfig()) -> Fraction:
    """Exact isotropic scale factor: the tighter of both limits, capped at 1."""
    long_side, short_side = max(width, height), min(width, height)
    return min(Fraction(cfg.max_long, long_side), Fraction(cfg.max_short, short_side), Fraction(1))


def resized_shape(width: int, height: int, cfg: ResizeConfig = ResizeConfig()) -> tuple[int, int, Fraction]:
    s = resize_scale(width, height, cfg)
    return max(1, math.floor(width * s)), max(1, math.floor(height * s)), s


def isotropic_resize(img: PixelImage, cfg: ResizeConfig = ResizeConfig()) -> tuple[PixelImage, float]:
    """Downscale with area averaging so both side limits hold.

    Returns:
        The resized image (same bit depth) and the scale factor applied.
    """
    w, h, s = resized_shape(img.width, img.height, cfg)
    if s == 1:
        return img, 1.0
    src = Image.fromarray(img.pixels.astype(np.float32))
    out = np.asarray(src.resize((w, h), Image.Resampling.BOX), dtype=np.float64)
    out = np.clip(round_half_up(out), 0, 2**img.bit_depth - 1).astype(img.pixels.dtype)
    return PixelImage(out, img.bit_depth), float(s)


def load_image(path, bit_depth: int | None = None) -> PixelImage:
    """Read an 8/16-bit grayscale PNG or PGM.

    Args:
        bit_depth: Nominal source depth (e.g. 12 or 14 for 16-bit
            containers); inferred from the container when omitted.
    """
    with Image.open(path) as im:
        if im.mode not in ("L", "I", "I;16", "I;16B", "I;16L"):
            raise InputError(f"{path}: expected a grayscale image, got mode {im.mode}")
        arr = np.asarray(im)
        depth = 8 if im.mode == "L" else 16
    arr = arr.astype(np.uint8 if depth == 8 else np.uint16)
    return PixelImage(arr, bit_depth or depth)


def save_png(img: PixelImage, path) -> None:
    if img.bit_depth != 8:
        raise InputError("only 8-bit images are written")
    Image.fromarray(img.pixels.astype(np.uint8)).save(path, format="PNG")


def preprocess_file(
    src,
    out_dir,
    method: str = "window",
    window: WindowConfig = WindowConfig(),
    calibration: OdCalibration | None = None,
    resize: ResizeConfig | None = ResizeConfig(),
    bit_depth: int | None = None,
) -> PreprocessMeta:
    """Normalize one image file and write ``<stem>.png`` plus ``<stem>.json``."""
    src = Path(src)
    out_dir = Path(out_dir)
    img = load_image(src, bit_depth)
    meta = PreprocessMeta(
        source=src.name, mode=method, width_in=img.width, height_in=img.height,
        width_out=img.width, height_out=img.height, scale=1.0,
    )
    # intensity statistics come from the full-resolution source
    if method == "window":
        img, info = window_rescale(img, window)
        meta.intensity_mode = info["intensity_mode"]
        meta.window = info["window"]
    elif method == "od":
        if calibration is None:
            raise ConfigError("optical-density mapping needs a calibration")
        img = od_map(img, calibration)
        meta.calibration = calibration.name
    else:
        raise ConfigError(f"unknown preprocessing method {method!r}")
    if resize is not None:
        img, meta.scale = isotropic_resize(img, resize)
        meta.kernel = RESIZE_KERNEL
    meta.width_out, meta.height_out = img.width, img.height
    out_dir.mkdir(parents=True, exist_ok=True)
    save_png(img, out_dir / f"{src.stem}.png")
    (out_dir / f"{src.stem}.json").write_text(meta.to_json())
    return meta
