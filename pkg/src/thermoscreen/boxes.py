"""Axis-aligned pixel boxes shared by detection, screening and evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True, order=True)
class BoundingBox:
    """Half-open pixel box ``[x_min, x_max) x [y_min, y_max)``."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite: {coords}")
        if self.x_max <= self.x_min:
            raise ValueError(f"x_max ≤ x_min in box {coords}")
        if self.y_max <= self.y_min:
            raise ValueError(f"y_max ≤ y_min in box {coords}")
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError(f"negative coordinate in box {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def fits(self, width: int, height: int) -> bool:
        return self.x_max <= width and self.y_max <= height

    def pixel_slices(self, width: Optional[int] = None, height: Optional[int] = None) -> tuple[slice, slice]:
        """Row/column slices covering every pixel whose centre lies inside the box.

        Integer boxes map exactly; fractional boxes from external models are
        snapped outward (floor of the minimum, ceil of the maximum).
        """
        x0, y0 = int(math.floor(self.x_min)), int(math.floor(self.y_min))
        x1, y1 = int(math.ceil(self.x_max)), int(math.ceil(self.y_max))
        if width is not None:
            x1 = min(x1, width)
        if height is not None:
            y1 = min(y1, height)
        return slice(y0, y1), slice(x0, x1)


def union_box(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    return BoundingBox(min(a.x_min, b.x_min), min(a.y_min, b.y_min), max(a.x_max, b.x_max), max(a.y_max, b.y_max))


def box_gap(a: BoundingBox, b: BoundingBox) -> float:
    """Chebyshev distance between two half-open boxes; 0 when they touch or overlap."""
    dx = max(a.x_min - b.x_max, b.x_min - a.x_max, 0)
    dy = max(a.y_min - b.y_max, b.y_min - a.y_max, 0)
    return max(dx, dy)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def face_bands(bbox: BoundingBox, upper_fraction: float, lower_fraction: float) -> tuple[tuple[int, int], tuple[int, int]]:
    """Row ranges ``(start, stop)`` of the top and bottom bands of an integer-snapped box.

    Band heights are ``round(fraction * box_height)`` (half-up). Either band
    may come out empty for very short boxes; callers decide what to do.
    """
    rows, _ = bbox.pixel_slices()
    h = rows.stop - rows.start
    n_upper = _round_half_up(upper_fraction * h)
    n_lower = _round_half_up(lower_fraction * h)
    return (rows.start, rows.start + n_upper), (rows.stop - n_lower, rows.stop)
