"""Video instance segmentation metric.

Per category, predictions from all videos are ranked by confidence and
greedily matched to ground-truth instances of the same video and category by
spatio-temporal mask IoU.  AP is the interpolated area under the resulting
precision/recall curve, averaged over a ladder of IoU thresholds; mAP
averages AP over categories, and separately over base and novel categories.
Categories without ground truth have undefined AP and are left out of every
mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .classifier import Vocabulary
from .exceptions import ValidationError
from .mask_ops import intersection_area, mask_area

AP_METHODS = ("interp", "trapezoid")


def default_iou_thresholds() -> tuple:
    return tuple(round(0.5 + 0.05 * k, 2) for k in range(10))


@dataclass
class GtInstance:
    video_id: str
    category_id: int
    masks: list  # per frame, RleMask or None

    def __post_init__(self):
        if not any(m is not None and mask_area(m) > 0 for m in self.masks):
            raise ValidationError(
                f"ground truth in video {self.video_id!r} (category {self.category_id}) has no pixels"
            )


@dataclass
class Prediction:
    video_id: str
    category_id: int
    confidence: float
    masks: list
    track_id: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= float(self.confidence) <= 1.0:
            raise ValidationError(f"confidence {self.confidence!r} outside [0, 1]")
        self.confidence = float(self.confidence)


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple = field(default_factory=default_iou_thresholds)
    recall_points: int = 101
    max_dets_per_video: int = 100
    ap_method: str = "interp"

    def __post_init__(self):
        th = tuple(float(t) for t in self.iou_thresholds)
        if not th or any(not 0.0 < t <= 1.0 for t in th):
            raise ValidationError("IoU thresholds must lie in (0, 1]")
        if any(b <= a for a, b in zip(th, th[1:])):
            raise ValidationError("IoU thresholds must be strictly increasing")
        object.__setattr__(self, "iou_thresholds", th)
        if int(self.recall_points) < 2:
            raise ValidationError("recall_points must be at least 2")
        if int(self.max_dets_per_video) < 1:
            raise ValidationError("max_dets_per_video must be positive")
        if self.ap_method not in AP_METHODS:
            raise ValidationError(f"ap_method must be one of {AP_METHODS}")


@dataclass
class EvalReport:
    per_category_ap: dict  # category id -> AP or None
    map: Optional[float]
    map_base: Optional[float]
    map_novel: Optional[float]
    counts: dict = field(default_factory=dict)
    names: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "mAP": self.map,
            "mAP_b": self.map_base,
            "mAP_n": self.map_novel,
            "per_category": {
                str(cid): {"name": self.names.get(cid, str(cid)), "ap": ap, **self.counts.get(cid, {})}
                for cid, ap in self.per_category_ap.items()
            },
        }

    def to_table(self) -> str:
        def fmt(x):
            return "     -" if x is None else f"{100 * x:6.2f}"

        rows = [("id", "category", "AP", "n_gt", "n_pred", "tp@lo")]
        for cid, ap in self.per_category_ap.items():
            c = self.counts.get(cid, {})
            rows.append((str(cid), self.names.get(cid, str(cid)), fmt(ap),
                         str(c.get("n_gt", 0)), str(c.get("n_pred", 0)), str(c.get("tp", 0))))
        widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
        lines = ["  ".join(v.rjust(w) if k != 1 else v.ljust(w) for k, (v, w) in enumerate(zip(r, widths)))
                 for r in rows]
        lines.append("")
        lines.append(f"mAP {fmt(self.map)}   mAP_b {fmt(self.map_base)}   mAP_n {fmt(self.map_novel)}")
        return "\n".join(lines)


def _frame_masks(masks, n_frames):
    masks = list(masks)
    return masks + [None] * (n_frames - len(masks))


def st_iou(pred_masks: Sequence, gt_masks: Sequence) -> float:
    """Summed per-frame intersection over summed per-frame union."""
    n = max(len(pred_masks), len(gt_masks))
    inter = union = 0
    for p, g in zip(_frame_masks(pred_masks, n), _frame_masks(gt_masks, n)):
        if p is None and g is None:
            continue
        if p is None:
            union += mask_area(g)
        elif g is None:
            union += mask_area(p)
        else:
            i = intersection_area(p, g)
            inter += i
            union += mask_area(p) + mask_area(g) - i
    return inter / union if union else 0.0


def match_category(preds: Sequence[Prediction], gts: Sequence[GtInstance], threshold: float,
                   ious: Optional[np.ndarray] = None) -> list[bool]:
    """Greedy matching; ``preds`` must already be ranked by confidence.

    ``ious[k, g]`` may be supplied to avoid recomputation; pairs from
    different videos must carry -1 there.
    """
    if ious is None:
        ious = iou_table(preds, gts)
    taken = np.zeros(len(gts), dtype=bool)
    flags = []
    for k in range(len(preds)):
        best, best_iou = -1, threshold
        for g in range(len(gts)):
            if taken[g] or ious[k, g] < 0:
                continue
            if ious[k, g] >= best_iou and (best < 0 or ious[k, g] > ious[k, best]):
                best, best_iou = g, ious[k, g]
        if best >= 0:
            taken[best] = True
        flags.append(best >= 0)
    return flags


def iou_table(preds, gts) -> np.ndarray:
    table = np.full((len(preds), len(gts)), -1.0)
    for k, p in enumerate(preds):
        for g, gt in enumerate(gts):
            if p.video_id == gt.video_id:
                table[k, g] = st_iou(p.masks, gt.masks)
    return table


def average_precision(flags: Sequence[bool], n_gt: int, recall_points: int = 101,
                      method: str = "interp") -> Optional[float]:
    """Area under the precision/recall curve of a ranked list of matches.

    ``interp`` averages, over ``recall_points`` evenly spaced recall levels
    in [0, 1], the best precision reached at any recall at or above that
    level (0 when the level is never reached).  Returns None when there is
    no ground truth.
    """
    if n_gt <= 0:
        return None
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0:
        return 0.0
    tp = np.cumsum(flags)
    precision = tp / np.arange(1, flags.size + 1)
    # running max from the right: best precision at this recall or beyond
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    if method == "trapezoid":
        recall = np.concatenate(([0.0], tp / n_gt))
        prec = np.concatenate(([envelope[0]], envelope))
        return float(np.trapezoid(prec, recall))
    levels = recall_points - 1
    total = 0.0
    for k in range(recall_points):
        # recall >= k / levels, compared in integers to avoid rounding
        reached = np.flatnonzero(tp * levels >= k * n_gt)
        if reached.size:
            total += envelope[reached[0]]
    return float(total / recall_points)


def _rank(preds):
    order = sorted(range(len(preds)), key=lambda k: -preds[k].confidence)
    return [preds[k] for k in order]


def _limit_per_video(preds, max_dets):
    by_video = {}
    for p in _rank(preds):
        by_video.setdefault(p.video_id, []).append(p)
    kept = []
    for v in by_video.values():
        kept.extend(v[:max_dets])
    return kept


def evaluate(preds: Sequence[Prediction], gts: Sequence[GtInstance], vocab: Vocabulary,
             cfg: EvalConfig = EvalConfig(), video_ids=None) -> EvalReport:
    """Score predictions against ground truth.

    ``video_ids`` is the set of videos in the ground truth; it defaults to
    the videos that carry at least one annotation.
    """
    known_videos = set(video_ids) if video_ids is not None else {g.video_id for g in gts}
    known_cats = set(vocab.ids)
    for g in gts:
        if g.category_id not in known_cats:
            raise ValidationError(f"ground truth uses unknown category id {g.category_id}")
        if g.video_id not in known_videos:
            raise ValidationError(f"ground truth uses unknown video id {g.video_id!r}")
    for p in preds:
        if p.category_id not in known_cats:
            raise ValidationError(f"prediction uses unknown category id {p.category_id}")
        if p.video_id not in known_videos:
            raise ValidationError(f"prediction uses unknown video id {p.video_id!r}")

    kept = _limit_per_video(preds, cfg.max_dets_per_video)
    per_category, counts = {}, {}
    for cid in vocab.ids:
        cat_preds = _rank([p for p in kept if p.category_id == cid])
        cat_gts = [g for g in gts if g.category_id == cid]
        ious = iou_table(cat_preds, cat_gts)
        aps, tp_lo = [], 0
        for k, thr in enumerate(cfg.iou_thresholds):
            flags = match_category(cat_preds, cat_gts, thr, ious)
            if k == 0:
                tp_lo = int(sum(flags))
            aps.append(average_precision(flags, len(cat_gts), cfg.recall_points, cfg.ap_method))
        per_category[cid] = None if not cat_gts else float(np.mean(aps))
        counts[cid] = {"n_gt": len(cat_gts), "n_pred": len(cat_preds), "tp": tp_lo,
                       "fp": len(cat_preds) - tp_lo}

    def mean_of(ids):
        vals = [per_category[c] for c in ids if per_category[c] is not None]
        return float(np.mean(vals)) if vals else None

    base = [c for c, b in zip(vocab.ids, vocab.is_base) if b]
    novel = [c for c, b in zip(vocab.ids, vocab.is_base) if not b]
    return EvalReport(
        per_category_ap=per_category,
        map=mean_of(vocab.ids),
        map_base=mean_of(base),
        map_novel=mean_of(novel),
        counts=counts,
        names=dict(zip(vocab.ids, vocab.names)),
    )
