"""Visual-to-thermal lookalike augmentation.

Color images are converted to gray with a fixed weighting, then darkened by
a power law with an exponent drawn per image. Mask-classifier crops can also
be emitted as negatives, because a mask that looks bright in a visual image
reads cold (dark) in a thermal one.

All intensities are on a [0, 1] scale; exponentiation is scale-sensitive, so
8-bit inputs must be divided by 255 first (``from_uint8`` does this).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_COEFFICIENTS = (0.229, 0.587, 0.114)
BT601_COEFFICIENTS = (0.299, 0.587, 0.114)
COEFFICIENT_SETS = {"default": DEFAULT_COEFFICIENTS, "bt601": BT601_COEFFICIENTS}


def _unit_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.size and (np.nanmin(arr) < 0.0 or np.nanmax(arr) > 1.0 or not np.all(np.isfinite(arr))):
        raise ValueError("intensities must be finite and within [0, 1]")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RgbImage:
    """Channels-last (H, W, 3) array of intensities in [0, 1]."""

    pixels: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = _unit_array(self.pixels)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected an (H, W, 3) array, got {arr.shape}")
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_uint8(cls, raster: np.ndarray) -> "RgbImage":
        return cls(np.asarray(raster, dtype=np.float64) / 255.0)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class GrayImage:
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = _unit_array(self.pixels)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D array, got {arr.shape}")
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def to_uint8(self) -> np.ndarray:
        return np.floor(self.pixels * 255.0 + 0.5).astype(np.uint8)


@dataclass(frozen=True)
class AugmentConfig:
    gray_coefficients: tuple[float, float, float] = DEFAULT_COEFFICIENTS
    gamma_range: tuple[float, float] = (0.3, 0.9)
    seed: int = 0
    emit_negatives: bool = True

    def __post_init__(self) -> None:
        lo, hi = self.gamma_range
        if not (0.0 < lo <= hi):
            raise ValueError(f"gamma_range must satisfy 0 < lo <= hi, got {self.gamma_range}")
        if len(self.gray_coefficients) != 3 or min(self.gray_coefficients) < 0.0:
            raise ValueError("gray_coefficients must be three non-negative weights")


def rgb_to_gray(img: RgbImage, coeffs=DEFAULT_COEFFICIENTS) -> GrayImage:
    c_r, c_g, c_b = coeffs
    p = img.pixels
    gray = c_r * p[..., 0] + c_g * p[..., 1] + c_b * p[..., 2]
    return GrayImage(np.clip(gray, 0.0, 1.0))


def gamma_correct(img: GrayImage, g: float) -> GrayImage:
    """Return ``img ** (1 / g)``; ``g < 1`` darkens, ``g == 1`` is the identity."""
    if not g > 0.0:
        raise ValueError(f"gamma must be positive, got {g}")
    if g == 1.0:
        return GrayImage(img.pixels)
    return GrayImage(np.power(img.pixels, 1.0 / g))


def negate(img: GrayImage) -> GrayImage:
    return GrayImage(1.0 - img.pixels)


def sample_gamma(cfg: AugmentConfig, rng: np.random.Generator) -> float:
    """Draw one exponent: ``lo + (hi - lo) * u`` with ``u = rng.random()`` in [0, 1)."""
    lo, hi = cfg.gamma_range
    return lo + (hi - lo) * float(rng.random())


def augment_image(img: RgbImage, cfg: AugmentConfig, rng: np.random.Generator) -> GrayImage:
    """Gray conversion followed by a per-image random gamma.

    ``rng`` is consumed exactly once per call, so a sequence of images
    processed in a fixed order reproduces bit-for-bit from the same seed.
    """
    gray = rgb_to_gray(img, cfg.gray_coefficients)
    return gamma_correct(gray, sample_gamma(cfg, rng))
