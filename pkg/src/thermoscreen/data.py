"""Dataset I/O and the deterministic synthetic thermal-scene generator.

Dataset directory layout::

    <dir>/
      ground_truth.txt      # or "ground truth.txt"
      manifest.txt          # image_name lux timestamp
      frame_000000.png      # 8-bit raster (20..45 °C mapped onto 0..255)
      frame_000000.temps    # lossless radiometric sidecar

Ground truth lines are ``image_name x_min y_min x_max y_max mask`` with
corner-pair boxes; ``#`` starts a comment line.

A ``.temps`` sidecar is two little-endian uint32 (width, height) followed by
``width * height`` little-endian float32 temperatures, row-major.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image

from .boxes import BoundingBox, face_bands
from .radiometric import DEFAULT_HEIGHT, DEFAULT_WIDTH, ThermalFrame

logger = logging.getLogger(__name__)

GT_FILENAMES = ("ground_truth.txt", "ground truth.txt")
MANIFEST_NAME = "manifest.txt"
ORACLE_NAME = "oracle.jsonl"
SIDECAR_SUFFIX = ".temps"
RASTER_BAND = (20.0, 45.0)
DEFAULT_MASK_FRACTION = 0.45
FRAME_PERIOD_MS = 111  # 9 Hz capture
BASE_TIMESTAMP_MS = 1_600_000_000_000
_HEADER = struct.Struct("<II")


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class GroundTruthRecord:
    image_name: str
    x_min: int
    y_min: int
    x_max: int
    y_max: int
    mask: int

    def __post_init__(self) -> None:
        if not self.image_name or any(c.isspace() for c in self.image_name):
            raise ValueError(f"invalid image name {self.image_name!r}")
        BoundingBox(self.x_min, self.y_min, self.x_max, self.y_max)
        if self.mask not in (0, 1):
            raise ValueError(f"mask must be 0 or 1, got {self.mask}")

    @property
    def bbox(self) -> BoundingBox:
        return BoundingBox(self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class Annotation:
    image_name: str
    bbox: BoundingBox
    mask: bool
    lux: Optional[float] = None
    timestamp: Optional[int] = None
    peak_temp: Optional[float] = None  # known only for synthetic scenes


@dataclass(frozen=True)
class ManifestEntry:
    image_name: str
    lux: Optional[float]
    timestamp: Optional[int]


# ---------------------------------------------------------------------------
# ground truth


def parse_ground_truth(lines: Iterable[str]) -> list[GroundTruthRecord]:
    records = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 6:
            raise DataFormatError(f"line {line_no}: expected 6 fields, got {len(parts)}")
        try:
            x0, y0, x1, y1, mask = (int(p) for p in parts[1:])
        except ValueError:
            raise DataFormatError(f"line {line_no}: box and mask fields must be integers") from None
        try:
            records.append(GroundTruthRecord(parts[0], x0, y0, x1, y1, mask))
        except ValueError as exc:
            raise DataFormatError(f"line {line_no}: {exc}") from None
    return records


def format_ground_truth(records: Sequence[GroundTruthRecord]) -> str:
    ordered = sorted(records, key=lambda r: (r.image_name, r.y_min, r.x_min, r.x_max, r.y_max, r.mask))
    return "".join(f"{r.image_name} {r.x_min} {r.y_min} {r.x_max} {r.y_max} {r.mask}\n" for r in ordered)


def write_ground_truth(records: Sequence[GroundTruthRecord], path) -> None:
    Path(path).write_text(format_ground_truth(records), encoding="utf-8")


def read_ground_truth(path) -> list[GroundTruthRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_ground_truth(fh)


def find_ground_truth(directory) -> Path:
    directory = Path(directory)
    for name in GT_FILENAMES:
        if (directory / name).is_file():
            return directory / name
    raise FileNotFoundError(f"no ground truth file ({' or '.join(GT_FILENAMES)}) in {directory}")


# ---------------------------------------------------------------------------
# manifest


def parse_manifest(lines: Iterable[str]) -> list[ManifestEntry]:
    entries = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DataFormatError(f"manifest line {line_no}: expected 'image_name lux timestamp'")
        name, lux_s, ts_s = parts
        try:
            lux = None if lux_s in ("-", "na") else float(lux_s)
            ts = None if ts_s in ("-", "na") else int(ts_s)
        except ValueError:
            raise DataFormatError(f"manifest line {line_no}: bad lux or timestamp") from None
        if lux is not None and (lux < 0 or not math.isfinite(lux)):
            raise DataFormatError(f"manifest line {line_no}: lux must be >= 0")
        entries.append(ManifestEntry(name, lux, ts))
    return entries


def format_manifest(entries: Sequence[ManifestEntry]) -> str:
    def _fmt(v):
        return "-" if v is None else (f"{v:g}" if isinstance(v, float) else str(v))

    return "".join(f"{e.image_name} {_fmt(e.lux)} {_fmt(e.timestamp)}\n" for e in entries)


def read_manifest(path) -> list[ManifestEntry]:
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh)


def annotations_from_records(
    records: Sequence[GroundTruthRecord], manifest: Sequence[ManifestEntry] = ()
) -> list[Annotation]:
    meta = {e.image_name: e for e in manifest}
    out = []
    for r in records:
        e = meta.get(r.image_name)
        out.append(Annotation(r.image_name, r.bbox, bool(r.mask), e.lux if e else None, e.timestamp if e else None))
    return out


# ---------------------------------------------------------------------------
# radiometric rasters


def write_sidecar(frame: ThermalFrame, path) -> None:
    payload = _HEADER.pack(frame.width, frame.height) + frame.temps.astype("<f4").tobytes(order="C")
    Path(path).write_bytes(payload)


def read_sidecar(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise DataFormatError(f"{path}: truncated header")
    width, height = _HEADER.unpack_from(blob)
    expected = _HEADER.size + 4 * width * height
    if width == 0 or height == 0 or len(blob) != expected:
        raise DataFormatError(f"{path}: sidecar length {len(blob)} does not match {width}x{height} header")
    return np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(height, width).astype(np.float64)


def temps_to_raster(temps: np.ndarray, band=RASTER_BAND) -> np.ndarray:
    lo, hi = band
    scaled = (np.clip(temps, lo, hi) - lo) / (hi - lo)
    return np.floor(scaled * 255.0 + 0.5).astype(np.uint8)


def raster_to_temps(raster: np.ndarray, band=RASTER_BAND) -> np.ndarray:
    lo, hi = band
    return lo + (np.asarray(raster, dtype=np.float64) / 255.0) * (hi - lo)


def _sidecar_for(path: Path) -> Path:
    return path if path.suffix == SIDECAR_SUFFIX else path.with_suffix(SIDECAR_SUFFIX)


def load_thermal_frame(
    image_path, frame_id: int = 0, timestamp: int = 0, lux: Optional[float] = None, band=RASTER_BAND
) -> ThermalFrame:
    """Load a frame, preferring the lossless sidecar over the 8-bit raster."""
    path = Path(image_path)
    sidecar = _sidecar_for(path)
    has_raster = path.suffix != SIDECAR_SUFFIX and path.is_file()
    if sidecar.is_file():
        temps = read_sidecar(sidecar)
        if has_raster:
            with Image.open(path) as im:
                if im.size != (temps.shape[1], temps.shape[0]):
                    raise DataFormatError(
                        f"{path}: raster is {im.size[0]}x{im.size[1]} but sidecar is {temps.shape[1]}x{temps.shape[0]}"
                    )
    elif has_raster:
        with Image.open(path) as im:
            temps = raster_to_temps(np.asarray(im.convert("L")), band)
    else:
        raise FileNotFoundError(f"no raster or {SIDECAR_SUFFIX} sidecar for {path}")
    return ThermalFrame(frame_id, temps, timestamp=timestamp, lux=lux)


def save_thermal_frame(frame: ThermalFrame, image_path) -> None:
    path = Path(image_path)
    Image.fromarray(temps_to_raster(frame.temps), mode="L").save(path, format="PNG")
    write_sidecar(frame, _sidecar_for(path))


@dataclass(frozen=True)
class DatasetItem:
    frame_id: int
    image_name: str
    path: Path
    lux: Optional[float]
    timestamp: Optional[int]

    def load(self) -> ThermalFrame:
        return load_thermal_frame(self.path, self.frame_id, self.timestamp or 0, self.lux)


def list_dataset(directory) -> list[DatasetItem]:
    """Frames of a dataset directory; frame ids follow manifest line order.

    Without a manifest, images named in the ground truth (sorted) are used.
    """
    directory = Path(directory)
    if (directory / MANIFEST_NAME).is_file():
        entries = read_manifest(directory / MANIFEST_NAME)
    else:
        names = sorted({r.image_name for r in read_ground_truth(find_ground_truth(directory))})
        entries = [ManifestEntry(n, None, None) for n in names]
    return [DatasetItem(i, e.image_name, directory / e.image_name, e.lux, e.timestamp) for i, e in enumerate(entries)]


# ---------------------------------------------------------------------------
# synthetic scenes


@dataclass(frozen=True)
class FaceSpec:
    """A Gaussian warm bump whose half-maximum ellipse has semi-axes ``radii``.

    The ground-truth box is ``[cx - rx, cx + rx + 1) x [cy - ry, cy + ry + 1)``.
    """

    center: tuple[int, int]
    radii: tuple[int, int]
    peak_temp: float
    masked: bool = False
    mask_offset: float = -6.0

    def __post_init__(self) -> None:
        if min(self.radii) <= 0:
            raise ValueError("face radii must be positive")
        if not math.isfinite(self.peak_temp):
            raise ValueError("peak_temp must be finite")

    @property
    def bbox(self) -> BoundingBox:
        (cx, cy), (rx, ry) = self.center, self.radii
        return BoundingBox(cx - rx, cy - ry, cx + rx + 1, cy + ry + 1)


@dataclass(frozen=True)
class SyntheticSceneConfig:
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    ambient_temp: float = 22.0
    faces: tuple[FaceSpec, ...] = ()
    noise_sigma: float = 0.1
    seed: int = 0
    frame_id: int = 0
    timestamp: int = 0
    lux: Optional[float] = None
    image_name: str = "synthetic"
    mask_fraction: float = DEFAULT_MASK_FRACTION

    def __post_init__(self) -> None:
        object.__setattr__(self, "faces", tuple(self.faces))
        if self.width <= 0 or self.height <= 0:
            raise ValueError("scene dimensions must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        for i, face in enumerate(self.faces):
            if not face.bbox.fits(self.width, self.height):
                raise ValueError(f"face {i} box {face.bbox.as_tuple()} exceeds the {self.width}x{self.height} frame")
            for j in range(i):
                if _boxes_overlap(face.bbox, self.faces[j].bbox):
                    raise ValueError(f"faces {j} and {i} overlap")


def _boxes_overlap(a: BoundingBox, b: BoundingBox) -> bool:
    return a.x_min < b.x_max and b.x_min < a.x_max and a.y_min < b.y_max and b.y_min < a.y_max


_HALF_MAX_SIGMAS = math.sqrt(2.0 * math.log(2.0))


def generate_synthetic_frame(cfg: SyntheticSceneConfig) -> tuple[ThermalFrame, list[Annotation]]:
    temps = np.full((cfg.height, cfg.width), cfg.ambient_temp, dtype=np.float64)
    ys = np.arange(cfg.height, dtype=np.float64)[:, None]
    xs = np.arange(cfg.width, dtype=np.float64)[None, :]
    for face in cfg.faces:
        (cx, cy), (rx, ry) = face.center, face.radii
        sx, sy = rx / _HALF_MAX_SIGMAS, ry / _HALF_MAX_SIGMAS
        gx = np.exp(-0.5 * ((xs - cx) / sx) ** 2)
        gy = np.exp(-0.5 * ((ys - cy) / sy) ** 2)
        temps += (face.peak_temp - cfg.ambient_temp) * (gy * gx)
    for face in cfg.faces:
        if face.masked:
            _, (r0, r1) = face_bands(face.bbox, 0.0, cfg.mask_fraction)
            box = face.bbox
            temps[r0:r1, int(box.x_min):int(box.x_max)] += face.mask_offset
    if cfg.noise_sigma > 0:
        temps += np.random.default_rng(cfg.seed).normal(0.0, cfg.noise_sigma, temps.shape)
    frame = ThermalFrame(cfg.frame_id, temps, timestamp=cfg.timestamp, lux=cfg.lux)
    anns = [
        Annotation(cfg.image_name, f.bbox, f.masked, cfg.lux, cfg.timestamp, f.peak_temp) for f in cfg.faces
    ]
    return frame, anns


# Per-face (P(febrile), P(masked)) for generated datasets.
SCENARIOS = {
    "mixed": (0.5, 0.5),
    "all-febrile": (1.0, 0.5),
    "all-afebrile": (0.0, 0.5),
    "all-masked": (0.5, 1.0),
    "all-unmasked": (0.5, 0.0),
    "compliant": (0.0, 1.0),
}
FEBRILE_PEAK_RANGE = (38.0, 39.5)
AFEBRILE_PEAK_RANGE = (36.5, 37.0)
LUX_BUCKET_RANGES = ((0.0, 25.0), (25.0, 75.0), (75.0, 150.0), (150.0, 400.0))
_PLACEMENT_GAP = 20
_BORDER = 2


def random_faces(
    rng: np.random.Generator,
    n_faces: int,
    p_febrile: float,
    p_masked: float,
    width: int = DEFAULT_WIDTH,
    height: int = DEFAULT_HEIGHT,
    max_attempts: int = 500,
) -> tuple[FaceSpec, ...]:
    """Place non-overlapping faces with at least ``_PLACEMENT_GAP`` px between boxes."""
    faces: list[FaceSpec] = []
    for _ in range(n_faces):
        for _attempt in range(max_attempts):
            rx = int(rng.integers(10, 17))
            ry = int(math.floor(rx * 1.25 + 0.5))
            cx = int(rng.integers(rx + _BORDER, width - rx - 1 - _BORDER))
            cy = int(rng.integers(ry + _BORDER, height - ry - 1 - _BORDER))
            febrile = bool(rng.random() < p_febrile)
            masked = bool(rng.random() < p_masked)
            lo, hi = FEBRILE_PEAK_RANGE if febrile else AFEBRILE_PEAK_RANGE
            peak = round(float(rng.uniform(lo, hi)), 2)
            cand = FaceSpec((cx, cy), (rx, ry), peak, masked)
            padded = BoundingBox(
                max(0, cand.bbox.x_min - _PLACEMENT_GAP), max(0, cand.bbox.y_min - _PLACEMENT_GAP),
                cand.bbox.x_max + _PLACEMENT_GAP, cand.bbox.y_max + _PLACEMENT_GAP,
            )
            if not any(_boxes_overlap(padded, f.bbox) for f in faces):
                faces.append(cand)
                break
        else:
            raise RuntimeError(f"could not place {n_faces} faces in a {width}x{height} frame")
    return tuple(faces)


def synthetic_dataset_configs(n: int, scenario: str = "mixed", seed: int = 0, noise_sigma: float = 0.1):
    if n <= 0:
        raise ValueError("n must be positive")
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {sorted(SCENARIOS)}")
    p_febrile, p_masked = SCENARIOS[scenario]
    children = np.random.SeedSequence(seed).spawn(n)
    configs = []
    for i, child in enumerate(children):
        layout_seed, noise_seed = child.generate_state(2, dtype=np.uint64)
        rng = np.random.default_rng(int(layout_seed))
        n_faces = int(rng.integers(1, 6))
        faces = random_faces(rng, n_faces, p_febrile, p_masked)
        lo, hi = LUX_BUCKET_RANGES[i % len(LUX_BUCKET_RANGES)]
        lux = math.floor(float(rng.uniform(lo, hi)) * 10.0) / 10.0
        configs.append(SyntheticSceneConfig(
            faces=faces, noise_sigma=noise_sigma, seed=int(noise_seed), frame_id=i,
            timestamp=BASE_TIMESTAMP_MS + i * FRAME_PERIOD_MS, lux=lux, image_name=f"frame_{i:06d}.png",
        ))
    return configs


def generate_synthetic_dataset(out_dir, n: int, scenario: str = "mixed", seed: int = 0,
                               noise_sigma: float = 0.1) -> Path:
    """Write ``n`` frames, ground truth, manifest and a per-face oracle file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, manifest, oracle_lines = [], [], []
    for cfg in synthetic_dataset_configs(n, scenario, seed, noise_sigma):
        frame, anns = generate_synthetic_frame(cfg)
        save_thermal_frame(frame, out / cfg.image_name)
        manifest.append(ManifestEntry(cfg.image_name, cfg.lux, cfg.timestamp))
        for face, ann in zip(cfg.faces, anns):
            b = face.bbox
            records.append(GroundTruthRecord(cfg.image_name, int(b.x_min), int(b.y_min), int(b.x_max), int(b.y_max),
                                             int(face.masked)))
            oracle_lines.append(json.dumps({
                "image_name": cfg.image_name, "frame_id": cfg.frame_id, "bbox": list(ann.bbox.as_tuple()),
                "peak_temp": face.peak_temp, "masked": face.masked,
            }, separators=(",", ":")))
    write_ground_truth(records, out / GT_FILENAMES[0])
    (out / MANIFEST_NAME).write_text(format_manifest(manifest), encoding="utf-8")
    (out / ORACLE_NAME).write_text("".join(line + "\n" for line in oracle_lines), encoding="utf-8")
    logger.info("wrote %d synthetic frames to %s", n, out)
    return out


def walkthrough_stream(n_frames: int = 90, seed: int = 0, present=range(10, 21), peak_temp: float = 38.5,
                       masked: bool = True, noise_sigma: float = 0.1) -> list[ThermalFrame]:
    """One person crossing the scene left to right while ``frame_id in present``.

    Frames outside ``present`` are empty ambient scenes. Frame ids are
    0..n_frames-1 and timestamps advance at the 9 Hz capture period.
    """
    present = set(present)
    span = max(present) - min(present) if present else 0
    children = np.random.SeedSequence(seed).spawn(n_frames)
    frames = []
    for i, child in enumerate(children):
        faces: tuple[FaceSpec, ...] = ()
        if i in present:
            t = (i - min(present)) / span if span else 0.5
            cx = int(40 + t * (DEFAULT_WIDTH - 80))
            faces = (FaceSpec((cx, 110), (14, 18), peak_temp, masked),)
        cfg = SyntheticSceneConfig(faces=faces, noise_sigma=noise_sigma, seed=int(child.generate_state(1)[0]),
                                   frame_id=i, timestamp=BASE_TIMESTAMP_MS + i * FRAME_PERIOD_MS)
        frames.append(generate_synthetic_frame(cfg)[0])
    return frames
