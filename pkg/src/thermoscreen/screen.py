"""Per-person fever and mask verdicts from a frame and its face detections."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Mapping, Optional, Sequence

from .boxes import BoundingBox, face_bands
from .detect import Detection
from .radiometric import ThermalFrame


class ScreeningError(ValueError):
    pass


@dataclass(frozen=True)
class ScreeningConfig:
    fever_threshold: float = 37.5
    mask_delta_threshold: float = 2.0
    upper_face_fraction: float = 0.40
    lower_face_fraction: float = 0.45

    def __post_init__(self) -> None:
        if not (math.isfinite(self.fever_threshold) and math.isfinite(self.mask_delta_threshold)):
            raise ValueError("thresholds must be finite")
        for name in ("upper_face_fraction", "lower_face_fraction"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.upper_face_fraction + self.lower_face_fraction > 1.0:
            raise ValueError("upper_face_fraction + lower_face_fraction must not exceed 1")


@dataclass(frozen=True)
class PersonScreeningResult:
    """Verdict for one detection. When ``error`` is set the measurements are None."""

    frame_id: int
    bbox: BoundingBox
    max_temp: Optional[float]
    fever: Optional[bool]
    mask: Optional[bool]
    mask_score: Optional[float]
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["bbox"] = list(self.bbox.as_tuple())
        if rec["error"] is None:
            del rec["error"]
        return rec

    @classmethod
    def from_record(cls, rec: Mapping) -> "PersonScreeningResult":
        return cls(
            frame_id=int(rec["frame_id"]),
            bbox=BoundingBox(*rec["bbox"]),
            max_temp=rec.get("max_temp"),
            fever=rec.get("fever"),
            mask=rec.get("mask"),
            mask_score=rec.get("mask_score"),
            error=rec.get("error"),
        )


def _check_inside(frame: ThermalFrame, bbox: BoundingBox) -> None:
    if not bbox.fits(frame.width, frame.height):
        raise ScreeningError(
            f"bbox {bbox.as_tuple()} lies outside the {frame.width}x{frame.height} frame"
        )


def max_face_temperature(frame: ThermalFrame, bbox: BoundingBox) -> float:
    _check_inside(frame, bbox)
    return float(frame.temps[bbox.pixel_slices(frame.width, frame.height)].max())


def classify_fever(max_temp: float, cfg: ScreeningConfig = ScreeningConfig()) -> bool:
    # strictly greater: exactly 37.5 is not a fever
    return max_temp > cfg.fever_threshold


def classify_mask_heuristic(
    frame: ThermalFrame, bbox: BoundingBox, cfg: ScreeningConfig = ScreeningConfig()
) -> tuple[bool, float]:
    """A worn mask blocks infrared, so the lower face reads cooler than the upper face.

    Returns ``(mask, score)`` where ``score`` is the mean temperature of the top
    band minus that of the bottom band, in °C.
    """
    _check_inside(frame, bbox)
    rows, cols = bbox.pixel_slices(frame.width, frame.height)
    (u0, u1), (l0, l1) = face_bands(bbox, cfg.upper_face_fraction, cfg.lower_face_fraction)
    if u1 <= u0 or l1 <= l0 or cols.stop <= cols.start:
        raise ScreeningError(f"bbox {bbox.as_tuple()} too small for upper/lower face regions")
    upper = frame.temps[u0:u1, cols]
    lower = frame.temps[l0:l1, cols]
    score = float(upper.mean() - lower.mean())
    return score > cfg.mask_delta_threshold, score


MaskOverrides = Mapping[tuple[int, tuple], bool]


def mask_overrides(records: Sequence[tuple[int, BoundingBox, bool]]) -> dict[tuple[int, tuple], bool]:
    """Index external mask verdicts by (frame_id, bbox tuple)."""
    return {(fid, box.as_tuple()): mask for fid, box, mask in records}


def screen_person(
    frame: ThermalFrame, bbox: BoundingBox, cfg: ScreeningConfig = ScreeningConfig(),
    external_mask: Optional[bool] = None,
) -> PersonScreeningResult:
    try:
        max_temp = max_face_temperature(frame, bbox)
        if external_mask is None:
            mask, score = classify_mask_heuristic(frame, bbox, cfg)
        else:
            mask, score = external_mask, None
    except ScreeningError as exc:
        return PersonScreeningResult(frame.frame_id, bbox, None, None, None, None, error=str(exc))
    return PersonScreeningResult(frame.frame_id, bbox, max_temp, classify_fever(max_temp, cfg), mask, score)


def screen_frame(
    frame: ThermalFrame,
    detections: Sequence[Detection],
    cfg: ScreeningConfig = ScreeningConfig(),
    external_masks: Optional[MaskOverrides] = None,
) -> list[PersonScreeningResult]:
    """One result per detection, in input order. Bad boxes become error records."""
    results = []
    for det in detections:
        if det.frame_id != frame.frame_id:
            raise ValueError(f"detection for frame {det.frame_id} passed with frame {frame.frame_id}")
        ext = None
        if external_masks is not None:
            ext = external_masks.get((frame.frame_id, det.bbox.as_tuple()))
        results.append(screen_person(frame, det.bbox, cfg, ext))
    return results


def format_results(results: Sequence[PersonScreeningResult]) -> str:
    return "".join(json.dumps(r.to_record(), separators=(",", ":")) + "\n" for r in results)


def parse_results(lines) -> list[PersonScreeningResult]:
    return [PersonScreeningResult.from_record(json.loads(s)) for s in lines if s.strip()]

