"""End-to-end screening over a stream of frames.

Each frame goes normalize -> detect -> screen and yields one
:class:`ScreeningEvent`. Frames are independent, so they are processed on a
thread pool; a bounded in-order window restores frame order before events
are emitted, and a single writer appends them to the event log.
"""

from __future__ import annotations

import json
import logging
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional, Sequence, Union

from .detect import BaselineDetectorConfig, Detection, ExternalDetector, detect_faces_baseline
from .radiometric import NormalizationConfig, ThermalFrame, normalize_frame
from .screen import PersonScreeningResult, ScreeningConfig, screen_frame

logger = logging.getLogger(__name__)

SUMMARY_HEADER = "frames,alerts,mean_latency_ms,max_latency_ms,fps"


@dataclass(frozen=True)
class PipelineConfig:
    normalization: NormalizationConfig = NormalizationConfig()
    detector: BaselineDetectorConfig = BaselineDetectorConfig()
    detector_command: Optional[tuple[str, ...]] = None
    screening: ScreeningConfig = ScreeningConfig()
    target_fps: float = 9.0
    workers: int = 4
    include_latency: bool = False
    events_out: Optional[str] = None
    summary_out: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.target_fps > 0:
            raise ValueError("target_fps must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class ScreeningEvent:
    frame_id: int
    timestamp: int
    persons: tuple[PersonScreeningResult, ...] = ()
    error: Optional[str] = None
    processing_latency: Optional[float] = None  # ms

    @property
    def alert(self) -> bool:
        return any(p.ok and (p.fever or not p.mask) for p in self.persons)

    def to_record(self, include_latency: bool = True) -> dict:
        rec = {
            "frame_id": self.frame_id,
            "timestamp": self.timestamp,
            "alert": self.alert,
            "persons": [p.to_record() for p in self.persons],
        }
        if self.error is not None:
            rec["error"] = self.error
        if include_latency and self.processing_latency is not None:
            rec["latency_ms"] = self.processing_latency
        return rec

    def to_line(self, include_latency: bool = True) -> str:
        return json.dumps(self.to_record(include_latency), separators=(",", ":"))

    @classmethod
    def from_line(cls, line: str) -> "ScreeningEvent":
        rec = json.loads(line)
        event = cls(
            frame_id=int(rec["frame_id"]),
            timestamp=int(rec["timestamp"]),
            persons=tuple(PersonScreeningResult.from_record(p) for p in rec.get("persons", [])),
            error=rec.get("error"),
            processing_latency=rec.get("latency_ms"),
        )
        if event.alert != rec["alert"]:
            raise ValueError(f"frame {event.frame_id}: alert flag disagrees with person results")
        return event


@dataclass
class StreamSummary:
    frames: int = 0
    alerts: int = 0
    errors: int = 0
    mean_latency_ms: float = 0.0
    max_latency_ms: float = 0.0
    fps: float = 0.0

    def csv(self) -> str:
        return (f"{SUMMARY_HEADER}\n{self.frames},{self.alerts},{self.mean_latency_ms:.3f},"
                f"{self.max_latency_ms:.3f},{self.fps:.3f}\n")


@dataclass(frozen=True)
class FrameSource:
    """A lazily loaded frame; loading happens on the worker so I/O errors stay per-frame."""

    frame_id: int
    timestamp: int
    loader: Callable[[], ThermalFrame]
    path: Optional[str] = None


StreamItem = Union[ThermalFrame, FrameSource]


def sources_from_dataset(items) -> list[FrameSource]:
    """Wrap :class:`thermoscreen.data.DatasetItem` values as stream sources."""
    return [FrameSource(it.frame_id, it.timestamp or 0, it.load, str(it.path)) for it in items]


class Screener:
    """The per-frame work unit: normalize, detect, screen."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.external = ExternalDetector(cfg.detector_command) if cfg.detector_command else None

    def detect(self, frame: ThermalFrame, path: Optional[str]) -> list[Detection]:
        if self.external is not None:
            return self.external(frame, path)
        return detect_faces_baseline(frame, self.cfg.detector)

    def __call__(self, item: StreamItem) -> ScreeningEvent:
        if isinstance(item, ThermalFrame):
            frame, path, fid, ts = item, None, item.frame_id, item.timestamp
        else:
            fid, ts, path = item.frame_id, item.timestamp, item.path
            frame = None
        try:
            if frame is None:
                frame = item.loader()
            normalize_frame(frame, self.cfg.normalization)
            dets = self.detect(frame, path)
            persons = screen_frame(frame, dets, self.cfg.screening)
        except Exception as exc:  # a bad frame must not stop the stream
            logger.warning("frame %s failed: %s", fid, exc)
            return ScreeningEvent(fid, ts, error=f"{type(exc).__name__}: {exc}")
        return ScreeningEvent(fid, ts, tuple(persons))


def _ordered_events(items: Iterable[StreamItem], work: Callable[[StreamItem], ScreeningEvent],
                    workers: int) -> Iterator[ScreeningEvent]:
    """Run ``work`` concurrently with a bounded window, yielding results in input order.

    Latency is measured from submission (ingestion) to the moment the event
    is released in order.
    """
    window: deque = deque()
    last_id: Optional[int] = None

    def release():
        t0, fut = window.popleft()
        event = fut.result()
        latency = (time.perf_counter() - t0) * 1000.0
        return ScreeningEvent(event.frame_id, event.timestamp, event.persons, event.error, latency)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for item in items:
            fid = item.frame_id
            t0 = time.perf_counter()
            if last_id is not None and fid <= last_id:
                fut = pool.submit(lambda f=fid, ts=item.timestamp, prev=last_id: ScreeningEvent(
                    f, ts, error=f"frame_id {f} does not follow {prev}"))
            else:
                fut = pool.submit(work, item)
                last_id = fid
            window.append((t0, fut))
            while len(window) > 2 * workers:
                yield release()
        while window:
            yield release()


def run_stream(items: Iterable[StreamItem], cfg: PipelineConfig = PipelineConfig(),
               sink: Optional[Callable[[ScreeningEvent], None]] = None) -> tuple[list[ScreeningEvent], StreamSummary]:
    """Screen every frame and return the ordered events and a summary.

    ``sink`` (if given) receives each event as soon as it is released in order.
    """
    screener = Screener(cfg)
    events: list[ScreeningEvent] = []
    start = time.perf_counter()
    for event in _ordered_events(items, screener, cfg.workers):
        events.append(event)
        if sink is not None:
            sink(event)
    elapsed = time.perf_counter() - start
    summary = StreamSummary(frames=len(events))
    if events:
        lat = [e.processing_latency or 0.0 for e in events]
        summary.alerts = sum(e.alert for e in events)
        summary.errors = sum(e.error is not None for e in events)
        summary.mean_latency_ms = sum(lat) / len(lat)
        summary.max_latency_ms = max(lat)
        summary.fps = len(events) / elapsed if elapsed > 0 else float("inf")
    if summary.frames and summary.fps < cfg.target_fps:
        logger.warning("achieved %.2f fps, below the %.2f fps target", summary.fps, cfg.target_fps)
    return events, summary


def write_event_log(events: Sequence[ScreeningEvent], path, include_latency: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(e.to_line(include_latency) + "\n")


def read_event_log(path) -> list[ScreeningEvent]:
    with open(path, encoding="utf-8") as fh:
        return [ScreeningEvent.from_line(line) for line in fh if line.strip()]
