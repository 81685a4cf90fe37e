"""Detection and screening metrics: IOU, greedy matching, AP, meanIOU,
precision/recall, lux-bucket stratification and the timestamp split.

Single-class (face) throughout, so MAP equals AP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Hashable, Iterable, Mapping, Optional, Sequence, TypeVar

from .boxes import BoundingBox
from .detect import Detection

T = TypeVar("T")
UNBUCKETED = "unbucketed"


class LuxBucket(Enum):
    B0_25 = (0.0, 25.0)
    B25_75 = (25.0, 75.0)
    B75_150 = (75.0, 150.0)
    B150_plus = (150.0, math.inf)

    @property
    def label(self) -> str:
        lo, hi = self.value
        return f">{lo:g} lux" if math.isinf(hi) else f"{lo:g}-{hi:g} lux"

    @classmethod
    def for_lux(cls, lux: float) -> "LuxBucket":
        if not lux >= 0:
            raise ValueError(f"lux must be >= 0, got {lux}")
        for bucket in cls:
            lo, hi = bucket.value
            if lo <= lux < hi:
                return bucket
        raise ValueError(f"lux {lux} is not bucketable")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class Match:
    det_index: int
    gt_index: int
    iou: float


@dataclass(frozen=True)
class MatchResult:
    matches: tuple[Match, ...]
    unmatched_dets: tuple[int, ...]
    unmatched_gts: tuple[int, ...]

    @property
    def tp(self) -> int:
        return len(self.matches)

    @property
    def fp(self) -> int:
        return len(self.unmatched_dets)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gts)


def confidence_order(dets: Sequence[Detection]) -> list[int]:
    """Indices by descending confidence; equal confidences keep input order."""
    return sorted(range(len(dets)), key=lambda i: -dets[i].confidence)


def match_detections(dets: Sequence[Detection], gts: Sequence[BoundingBox], iou_threshold: float = 0.5) -> MatchResult:
    """Greedy one-to-one matching for a single image.

    Detections are visited by descending confidence; each takes the still
    unmatched ground truth with the highest IOU at or above the threshold
    (ties go to the lower ground-truth index).
    """
    taken = [False] * len(gts)
    matches, unmatched_dets = [], []
    for di in confidence_order(dets):
        best_gi, best_iou = -1, -1.0
        for gi, gt in enumerate(gts):
            if taken[gi]:
                continue
            v = iou(dets[di].bbox, gt)
            if v >= iou_threshold and v > best_iou:
                best_gi, best_iou = gi, v
        if best_gi >= 0:
            taken[best_gi] = True
            matches.append(Match(di, best_gi, best_iou))
        else:
            unmatched_dets.append(di)
    unmatched_gts = tuple(gi for gi, t in enumerate(taken) if not t)
    return MatchResult(tuple(matches), tuple(sorted(unmatched_dets)), unmatched_gts)


def _grouped(dets, gts) -> tuple[dict, dict]:
    if isinstance(dets, Mapping) != isinstance(gts, Mapping):
        raise TypeError("pass detections and ground truths either both per image (mappings) or both flat")
    if isinstance(dets, Mapping):
        return dict(dets), dict(gts)
    return {0: list(dets)}, {0: list(gts)}


def _image_order(keys: Iterable[Hashable]) -> list:
    return sorted(set(keys), key=lambda k: (type(k).__name__, k))


def ranked_outcomes(dets, gts, iou_threshold: float = 0.5) -> tuple[list[tuple[float, bool]], int]:
    """(confidence, is_tp) for every detection in global rank order, plus the ground-truth count."""
    dets_by, gts_by = _grouped(dets, gts)
    ranked = []
    n_gt = 0
    for img_rank, key in enumerate(_image_order(list(dets_by) + list(gts_by))):
        d = dets_by.get(key, [])
        g = gts_by.get(key, [])
        n_gt += len(g)
        res = match_detections(d, g, iou_threshold)
        tp_set = {m.det_index for m in res.matches}
        for local_rank, di in enumerate(confidence_order(d)):
            ranked.append((-d[di].confidence, img_rank, local_rank, di in tp_set))
    ranked.sort()
    return [(-neg_conf, is_tp) for neg_conf, _, _, is_tp in ranked], n_gt


def pr_curve(dets, gts, iou_threshold: float = 0.5) -> tuple[list[float], list[float]]:
    """Cumulative (precision, recall) after each ranked detection."""
    outcomes, n_gt = ranked_outcomes(dets, gts, iou_threshold)
    precision, recall = [], []
    tp = 0
    for k, (_, is_tp) in enumerate(outcomes, start=1):
        tp += is_tp
        precision.append(tp / k)
        recall.append(tp / n_gt if n_gt else 0.0)
    return precision, recall


def average_precision(dets, gts, iou_threshold: float = 0.5, method: str = "all_points") -> float:
    """Area under the interpolated precision-recall curve.

    ``dets``/``gts`` are either flat sequences for one image or mappings from
    an image key to per-image sequences. ``method`` is ``"all_points"`` (exact
    area under the monotone precision envelope) or ``"11_point"``.
    Returns 0.0 when there is no ground truth.
    """
    precision, recall = pr_curve(dets, gts, iou_threshold)
    if not recall or recall[-1] == 0.0:
        return 0.0
    if method == "11_point":
        total = 0.0
        for t in (i / 10 for i in range(11)):
            total += max((p for p, r in zip(precision, recall) if r >= t), default=0.0)
        return total / 11.0
    if method != "all_points":
        raise ValueError(f"unknown AP method {method!r}")
    envelope = list(precision)
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    ap, prev_r = 0.0, 0.0
    for p, r in zip(envelope, recall):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return ap


def mean_iou(matches: Iterable[Match]) -> float:
    vals = [m.iou for m in matches]
    return sum(vals) / len(vals) if vals else 0.0


def safe_ratio(num: float, den: float) -> tuple[float, bool]:
    """``(num / den, True)``, or ``(0.0, False)`` when the denominator is zero."""
    return (num / den, True) if den else (0.0, False)


def precision_recall(tp: int, fp: int, fn: int) -> tuple[float, float]:
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    return safe_ratio(tp, tp + fp)[0], safe_ratio(tp, tp + fn)[0]


def bucket_by_lux(items: Iterable[T], lux_of: Callable[[T], Optional[float]] = lambda it: it.lux) -> dict:
    """Group items into the four lux buckets plus ``"unbucketed"`` for missing lux.

    Every bucket key is present in the result, even when empty.
    """
    groups: dict = {b: [] for b in LuxBucket}
    groups[UNBUCKETED] = []
    for item in items:
        lux = lux_of(item)
        groups[UNBUCKETED if lux is None else LuxBucket.for_lux(lux)].append(item)
    return groups


def split_by_timestamp(items: Sequence[T], timestamp_of: Callable[[T], Optional[int]] = lambda it: it.timestamp,
                       name_of: Callable[[T], str] = lambda it: getattr(it, "image_name", "")):
    """Chronological 70/20/10 split: floor(0.7n) train, floor(0.2n) val, the rest test."""
    missing = [name_of(it) or repr(it) for it in items if timestamp_of(it) is None]
    if missing:
        raise ValueError(f"{len(missing)} item(s) lack a timestamp, e.g. {missing[0]}")
    ordered = sorted(items, key=lambda it: (timestamp_of(it), name_of(it)))
    n = len(ordered)
    n_train = (7 * n) // 10
    n_val = (2 * n) // 10
    return ordered[:n_train], ordered[n_train:n_train + n_val], ordered[n_train + n_val:]


# ---------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    mean_iou: float
    map: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    n_images: int
    iou_threshold: float
    undefined: list[str] = field(default_factory=list)
    mask_accuracy: Optional[float] = None
    mask_precision: Optional[float] = None
    mask_recall: Optional[float] = None
    n_mask_scored: int = 0
    buckets: dict[str, "EvalReport"] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "buckets"}
        if self.buckets:
            out["buckets"] = {name: rep.to_dict() for name, rep in self.buckets.items()}
        return out


def _mask_scores(mask_pairs: Sequence[tuple[bool, bool]], undefined: list[str]) -> dict:
    """Mask metrics over (predicted, actual) pairs with 'mask worn' as the positive class."""
    if not mask_pairs:
        undefined.extend(["mask_accuracy", "mask_precision", "mask_recall"])
        return {"mask_accuracy": 0.0, "mask_precision": 0.0, "mask_recall": 0.0, "n_mask_scored": 0}
    tp = sum(p and a for p, a in mask_pairs)
    fp = sum(p and not a for p, a in mask_pairs)
    fn = sum(a and not p for p, a in mask_pairs)
    correct = sum(p == a for p, a in mask_pairs)
    prec, ok_p = safe_ratio(tp, tp + fp)
    rec, ok_r = safe_ratio(tp, tp + fn)
    if not ok_p:
        undefined.append("mask_precision")
    if not ok_r:
        undefined.append("mask_recall")
    return {"mask_accuracy": correct / len(mask_pairs), "mask_precision": prec, "mask_recall": rec,
            "n_mask_scored": len(mask_pairs)}


def evaluate_images(
    dets_by_image: Mapping[Hashable, Sequence[Detection]],
    gts_by_image: Mapping[Hashable, Sequence[BoundingBox]],
    iou_threshold: float = 0.5,
    gt_masks: Optional[Mapping[Hashable, Sequence[bool]]] = None,
    predicted_masks: Optional[Mapping[Hashable, Sequence[tuple[BoundingBox, Optional[bool]]]]] = None,
    images: Optional[Iterable[Hashable]] = None,
    ap_method: str = "all_points",
) -> EvalReport:
    """Aggregate detection metrics (and optional mask metrics) over a set of images.

    Mask predictions are paired with ground truth by the same greedy IOU
    matching used for detections; unmatched people are not mask-scored.
    """
    keys = _image_order(images if images is not None else list(dets_by_image) + list(gts_by_image))
    dets = {k: list(dets_by_image.get(k, [])) for k in keys}
    gts = {k: list(gts_by_image.get(k, [])) for k in keys}
    tp = fp = fn = 0
    all_matches: list[Match] = []
    mask_pairs: list[tuple[bool, bool]] = []
    for k in keys:
        res = match_detections(dets[k], gts[k], iou_threshold)
        tp, fp, fn = tp + res.tp, fp + res.fp, fn + res.fn
        all_matches.extend(res.matches)
        if predicted_masks is not None and gt_masks is not None:
            preds = [(b, m) for b, m in predicted_masks.get(k, []) if m is not None]
            pseudo = [Detection(0, b, 1.0) for b, _ in preds]
            mres = match_detections(pseudo, gts[k], iou_threshold)
            actual = gt_masks.get(k, [])
            mask_pairs.extend((bool(preds[m.det_index][1]), bool(actual[m.gt_index])) for m in mres.matches)
    undefined: list[str] = []
    prec, ok_p = safe_ratio(tp, tp + fp)
    rec, ok_r = safe_ratio(tp, tp + fn)
    if not ok_p:
        undefined.append("precision")
    if not ok_r:
        undefined.append("recall")
    if tp + fn == 0:
        undefined.append("map")
    if not all_matches:
        undefined.append("mean_iou")
    report = EvalReport(
        mean_iou=mean_iou(all_matches),
        map=average_precision(dets, gts, iou_threshold, ap_method),
        precision=prec, recall=rec, tp=tp, fp=fp, fn=fn, n_images=len(keys),
        iou_threshold=iou_threshold, undefined=undefined,
    )
    if predicted_masks is not None and gt_masks is not None:
        for name, value in _mask_scores(mask_pairs, report.undefined).items():
            setattr(report, name, value)
    return report


def evaluate_by_lux(
    dets_by_image, gts_by_image, image_lux: Mapping[Hashable, Optional[float]], iou_threshold: float = 0.5,
    gt_masks=None, predicted_masks=None, ap_method: str = "all_points",
) -> EvalReport:
    """Overall report with one sub-report per lux bucket (always all four rows)."""
    keys = _image_order(list(dets_by_image) + list(gts_by_image) + list(image_lux))
    overall = evaluate_images(dets_by_image, gts_by_image, iou_threshold, gt_masks, predicted_masks, keys, ap_method)
    groups = bucket_by_lux(keys, lambda k: image_lux.get(k))
    for bucket, members in groups.items():
        if bucket == UNBUCKETED and not members:
            continue
        name = bucket if bucket == UNBUCKETED else bucket.name
        overall.buckets[name] = evaluate_images(
            dets_by_image, gts_by_image, iou_threshold, gt_masks, predicted_masks, members, ap_method,
        )
    return overall
