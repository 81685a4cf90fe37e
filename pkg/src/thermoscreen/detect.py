"""Face detection on thermal frames.

Two routes produce :class:`Detection` values:

* a physics baseline: faces are warm blobs, so threshold the body-temperature
  band, label 8-connected components and keep face-shaped ones;
* an adapter for externally trained detectors speaking a newline-delimited
  JSON wire format (one object per line with ``frame_id``, ``bbox`` and
  ``confidence``), read from a file or from a subprocess's stdout.
"""

from __future__ import annotations

import json
import logging
import math
import subprocess
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .boxes import BoundingBox, box_gap, union_box
from .radiometric import ThermalFrame

logger = logging.getLogger(__name__)

REFERENCE_AREA = 900.0
_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


class WireFormatError(ValueError):
    """A record in a detector/classifier stream could not be parsed."""

    def __init__(self, line_no: int, field_name: str, message: str):
        super().__init__(f"line {line_no}: field '{field_name}': {message}")
        self.line_no = line_no
        self.field_name = field_name


@dataclass(frozen=True)
class Detection:
    frame_id: int
    bbox: BoundingBox
    confidence: float
    image_name: Optional[str] = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence out of range: {self.confidence}")

    def to_record(self) -> dict:
        rec = {"frame_id": self.frame_id, "bbox": list(self.bbox.as_tuple()), "confidence": self.confidence}
        if self.image_name is not None:
            rec["image_name"] = self.image_name
        return rec


@dataclass(frozen=True)
class BaselineDetectorConfig:
    body_band: tuple[float, float] = (30.0, 40.0)
    min_area: int = 64
    aspect_ratio_band: tuple[float, float] = (0.4, 1.6)
    merge_gap: int = 2

    def __post_init__(self) -> None:
        if self.body_band[0] > self.body_band[1]:
            raise ValueError(f"empty body_band {self.body_band}")
        if self.aspect_ratio_band[0] > self.aspect_ratio_band[1] or self.aspect_ratio_band[0] <= 0:
            raise ValueError(f"invalid aspect_ratio_band {self.aspect_ratio_band}")
        if self.min_area <= 0:
            raise ValueError("min_area must be positive")
        if self.merge_gap < 0:
            raise ValueError("merge_gap must be non-negative")


@dataclass(frozen=True)
class Region:
    bbox: BoundingBox
    area: int


def threshold_body_band(frame: ThermalFrame, band: tuple[float, float]) -> np.ndarray:
    lo, hi = band
    return (frame.temps >= lo) & (frame.temps <= hi)


def connected_components(mask: np.ndarray) -> list[Region]:
    """8-connected foreground regions, ordered by (y_min, x_min)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2 or mask.size == 0:
        raise ValueError("mask must be a non-empty 2-D array")
    labels, count = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    if count == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    regions = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        ys, xs = sl
        regions.append(Region(BoundingBox(xs.start, ys.start, xs.stop, ys.stop), int(areas[idx])))
    regions.sort(key=lambda r: (r.bbox.y_min, r.bbox.x_min))
    return regions


def _merge_close(regions: list[Region], gap: int) -> list[Region]:
    merged = list(regions)
    changed = True
    while changed:
        changed = False
        for i in range(len(merged)):
            for j in range(i + 1, len(merged)):
                if box_gap(merged[i].bbox, merged[j].bbox) < gap:
                    a, b = merged[i], merged.pop(j)
                    merged[i] = Region(union_box(a.bbox, b.bbox), a.area + b.area)
                    changed = True
                    break
            if changed:
                break
    return merged


def detect_faces_baseline(frame: ThermalFrame, cfg: BaselineDetectorConfig = BaselineDetectorConfig()) -> list[Detection]:
    mask = threshold_body_band(frame, cfg.body_band)
    lo_ar, hi_ar = cfg.aspect_ratio_band
    kept = [
        r for r in connected_components(mask)
        if r.area >= cfg.min_area and lo_ar <= r.bbox.width / r.bbox.height <= hi_ar
    ]
    kept = _merge_close(kept, cfg.merge_gap)
    dets = [Detection(frame.frame_id, r.bbox, min(1.0, r.area / REFERENCE_AREA)) for r in kept]
    dets.sort(key=lambda d: (-d.confidence, d.bbox.y_min, d.bbox.x_min))
    return dets


def _parse_bbox(value, line_no: int) -> BoundingBox:
    if not isinstance(value, list) or len(value) != 4:
        raise WireFormatError(line_no, "bbox", "expected an array of four numbers")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise WireFormatError(line_no, "bbox", "coordinates must be numbers")
    try:
        return BoundingBox(*value)
    except ValueError as exc:
        raise WireFormatError(line_no, "bbox", str(exc)) from None


def _parse_record(line: str, line_no: int) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise WireFormatError(line_no, "<record>", f"invalid JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise WireFormatError(line_no, "<record>", "expected a JSON object")
    fid = rec.get("frame_id")
    if not isinstance(fid, int) or isinstance(fid, bool):
        raise WireFormatError(line_no, "frame_id", "missing or not an integer")
    return rec


def _iter_lines(stream: Iterable[str]):
    for line_no, raw in enumerate(stream, start=1):
        line = raw.strip()
        if line:
            yield line_no, line


def parse_external_detections(stream: Iterable[str]) -> list[Detection]:
    """Parse a detector stream; unknown fields are ignored except ``image_name``."""
    out = []
    for line_no, line in _iter_lines(stream):
        rec = _parse_record(line, line_no)
        bbox = _parse_bbox(rec.get("bbox"), line_no)
        conf = rec.get("confidence")
        if not isinstance(conf, (int, float)) or isinstance(conf, bool) or not math.isfinite(conf):
            raise WireFormatError(line_no, "confidence", "missing or not a number")
        if not 0.0 <= conf <= 1.0:
            raise WireFormatError(line_no, "confidence", "confidence out of range")
        name = rec.get("image_name")
        out.append(Detection(rec["frame_id"], bbox, float(conf), name if isinstance(name, str) else None))
    return out


def parse_external_masks(stream: Iterable[str]) -> list[tuple[int, BoundingBox, bool]]:
    """Parse a mask-classifier stream: ``{"frame_id":…,"bbox":[…],"mask":0|1}`` per line."""
    out = []
    for line_no, line in _iter_lines(stream):
        rec = _parse_record(line, line_no)
        bbox = _parse_bbox(rec.get("bbox"), line_no)
        mask = rec.get("mask")
        if isinstance(mask, bool):
            mask = int(mask)
        if mask not in (0, 1):
            raise WireFormatError(line_no, "mask", "expected 0 or 1")
        out.append((rec["frame_id"], bbox, bool(mask)))
    return out


def format_detections(dets: Sequence[Detection]) -> str:
    return "".join(json.dumps(d.to_record(), separators=(",", ":")) + "\n" for d in dets)


class ExternalDetector:
    """Runs ``command + [frame_path]`` and reads detections from its stdout."""

    def __init__(self, command: Sequence[str], timeout: float = 30.0):
        if not command:
            raise ValueError("external detector command is empty")
        self.command = list(command)
        self.timeout = timeout

    def __call__(self, frame: ThermalFrame, frame_path: Optional[str] = None) -> list[Detection]:
        if frame_path is None:
            raise ValueError("external detector needs the frame's file path")
        proc = subprocess.run(
            self.command + [str(frame_path)], capture_output=True, text=True, timeout=self.timeout, check=False,
        )
        if proc.returncode != 0:
            raise RuntimeError(f"external detector exited {proc.returncode}: {proc.stderr.strip()[:200]}")
        dets = parse_external_detections(proc.stdout.splitlines())
        for d in dets:
            if not d.bbox.fits(frame.width, frame.height):
                raise ValueError(f"external detection {d.bbox.as_tuple()} exceeds frame bounds")
        return [d if d.frame_id == frame.frame_id else Detection(frame.frame_id, d.bbox, d.confidence, d.image_name)
                for d in dets]
