"""Radiometric frame model and temperature-constrained normalization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

DEFAULT_WIDTH = 320
DEFAULT_HEIGHT = 240


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ThermalFrame:
    """A calibrated temperature matrix (degrees Celsius, row-major) plus metadata.

    ``lux`` is evaluation metadata only; no processing step reads it.
    """

    frame_id: int
    temps: np.ndarray = field(repr=False)
    timestamp: int = 0
    lux: Optional[float] = None

    def __post_init__(self) -> None:
        temps = _frozen_array(self.temps)
        if temps.ndim != 2 or temps.shape[0] == 0 or temps.shape[1] == 0:
            raise ValueError(f"temps must be a non-empty 2-D matrix, got shape {temps.shape}")
        if not np.all(np.isfinite(temps)):
            bad = int(np.count_nonzero(~np.isfinite(temps)))
            raise ValueError(f"frame {self.frame_id}: {bad} non-finite temperature value(s)")
        object.__setattr__(self, "temps", temps)

    @property
    def height(self) -> int:
        return self.temps.shape[0]

    @property
    def width(self) -> int:
        return self.temps.shape[1]

    @classmethod
    def from_flat(cls, frame_id: int, width: int, height: int, values, **meta) -> "ThermalFrame":
        flat = np.asarray(values, dtype=np.float64).ravel()
        if width <= 0 or height <= 0:
            raise ValueError("width and height must be positive")
        if flat.size != width * height:
            raise ValueError(f"expected {width * height} temperatures for {width}x{height}, got {flat.size}")
        return cls(frame_id, flat.reshape(height, width), **meta)


@dataclass(frozen=True)
class NormalizedImage:
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        pixels = _frozen_array(self.pixels)
        if pixels.ndim != 2:
            raise ValueError("pixels must be 2-D")
        if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
            raise ValueError("normalized pixels must lie in [0, 1]")
        object.__setattr__(self, "pixels", pixels)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


class NormalizationMode(str, Enum):
    BAND_CLAMP = "band_clamp"
    LITERAL = "literal"


@dataclass(frozen=True)
class NormalizationConfig:
    lower_clamp: float = 20.0
    upper_clamp: float = 45.0
    mode: NormalizationMode = NormalizationMode.BAND_CLAMP

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", NormalizationMode(self.mode))
        if not (math.isfinite(self.lower_clamp) and math.isfinite(self.upper_clamp)):
            raise ValueError("clamps must be finite")
        if self.lower_clamp >= self.upper_clamp:
            raise ValueError(f"lower_clamp ({self.lower_clamp}) must be < upper_clamp ({self.upper_clamp})")


def normalize_frame(frame: ThermalFrame, cfg: NormalizationConfig = NormalizationConfig()) -> NormalizedImage:
    """Map temperatures to [0, 1] using a band bounded by the scene extrema and the clamps.

    The band is ``L = max(min(T), lower_clamp)`` to ``U = min(max(T), upper_clamp)``,
    so a very hot or very cold object in the scene cannot stretch the range
    and flatten the faces. ``band_clamp`` maps ``[L, U]`` affinely onto ``[0, 1]``;
    ``literal`` evaluates ``(T - L) / U`` as written and clips the result.
    A degenerate band (``U <= L``) yields 0.5 everywhere.
    """
    temps = frame.temps
    lo = max(float(temps.min()), cfg.lower_clamp)
    hi = min(float(temps.max()), cfg.upper_clamp)
    if cfg.mode is NormalizationMode.BAND_CLAMP:
        if hi <= lo:
            return NormalizedImage(np.full(temps.shape, 0.5))
        out = (np.clip(temps, lo, hi) - lo) / (hi - lo)
    else:
        if hi <= 0.0:
            return NormalizedImage(np.full(temps.shape, 0.5))
        out = np.clip((temps - lo) / hi, 0.0, 1.0)
    return NormalizedImage(out)


def naive_minmax(frame: ThermalFrame) -> NormalizedImage:
    """Plain full-range min-max scaling; the baseline that loses facial contrast."""
    temps = frame.temps
    lo, hi = float(temps.min()), float(temps.max())
    if hi <= lo:
        return NormalizedImage(np.full(temps.shape, 0.5))
    return NormalizedImage((temps - lo) / (hi - lo))


def frame_stats(frame: ThermalFrame) -> dict[str, float]:
    temps = frame.temps
    return {"min": float(temps.min()), "max": float(temps.max()), "mean": float(temps.mean())}


def to_byte_image(img: NormalizedImage) -> np.ndarray:
    """Quantize to uint8 with round-half-up (0.5 -> 128)."""
    return np.floor(img.pixels * 255.0 + 0.5).astype(np.uint8)
