"""On-disk formats.

Every file is a JSON object whose ``schema`` member is ``"memtrack/1"``.
Masks use the uncompressed RLE object ``{"size": [H, W], "counts": [...]}``
and ``null`` marks a frame without a mask.  Floats are written with Python's
shortest round-trip representation, so save/load/save is byte-stable.

Proposals (one file per video)::

    {"schema", "video_id", "height", "width", "n_queries", "embed_dim",
     "frames": [{"frame_index", "embeddings": [[...]], "object_scores": [...],
                 "masks": [rle, ...], "class_scores": [[...]] (optional)}]}

Ground truth::

    {"schema", "videos": [{"id", "height", "width", "length"}],
     "categories": [{"id", "name"}],
     "annotations": [{"video_id", "category_id", "segmentations": [rle|null, ...]}]}

Predictions::

    {"schema", "predictions": [{"video_id", "category_id", "score", "track_id",
                                "segmentations": [rle|null, ...]}]}

Vocabulary::

    {"schema", "prompt_template", "categories": [{"id", "name", "base", "embedding"}]}

Class head::

    {"schema", "activation": "relu"|"none", "layers": [{"weight": [[...]], "bias": [...]}]}
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .classifier import ClassHead, ClassifierConfig, Vocabulary
from .evaluator import EvalReport, GtInstance, Prediction
from .exceptions import FormatError, MemtrackError, ValidationError
from .mask_ops import RleMask
from .tracker import FrameProposals, Tracklet

SCHEMA = "memtrack/1"

log = logging.getLogger(__name__)

RUN_CONFIG_KEYS = {
    "alpha", "similarity", "gate", "mask_emit_threshold", "temperature", "temperature_mode",
    "classify", "confidence_with_object_score", "top_k", "export_threshold", "max_dets",
    "iou_thresholds", "recall_points", "ap_method", "jobs",
}

_KNOWN_KEYS = {
    "proposals": {"schema", "video_id", "height", "width", "n_queries", "embed_dim", "frames"},
    "ground_truth": {"schema", "videos", "categories", "annotations"},
    "predictions": {"schema", "predictions"},
    "vocabulary": {"schema", "prompt_template", "categories"},
    "class_head": {"schema", "activation", "layers"},
}


@dataclass
class VideoProposalFile:
    video_id: str
    height: int
    width: int
    frames: list = field(default_factory=list)

    @property
    def n_queries(self) -> int:
        return self.frames[0].n_queries if self.frames else 0

    @property
    def embed_dim(self) -> int:
        return self.frames[0].embed_dim if self.frames else 0


@dataclass
class VideoInfo:
    id: str
    height: int
    width: int
    length: int


@dataclass
class GroundTruthFile:
    videos: list
    categories: list  # (id, name)
    annotations: list  # GtInstance

    @property
    def video_ids(self) -> list:
        return [v.id for v in self.videos]


# -- helpers ---------------------------------------------------------------


def _dump(obj, path):
    text = json.dumps(obj, separators=(",", ":"), allow_nan=False) + "\n"
    Path(path).write_text(text)


def read_document(path, kind=None) -> dict:
    """Parse ``path`` and check the schema tag; unknown keys only warn."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be a JSON object")
    if doc.get("schema") != SCHEMA:
        raise FormatError(f"{path}: missing or wrong schema tag (expected {SCHEMA!r}, got {doc.get('schema')!r})")
    if kind in _KNOWN_KEYS:
        for key in sorted(set(doc) - _KNOWN_KEYS[kind]):
            log.warning("%s: ignoring unknown top-level key %r", path, key)
    return doc


def _require(obj, key, where):
    try:
        return obj[key]
    except (KeyError, TypeError):
        raise FormatError(f"{where}: missing field {key!r}") from None


def _mask(obj, where, shape=None):
    if obj is None:
        return None
    try:
        m = RleMask.from_json(obj)
    except MemtrackError as exc:
        raise type(exc)(f"{where}: {exc}") from None
    if shape is not None and m.shape != tuple(shape):
        raise ValidationError(f"{where}: mask is {m.shape[0]}x{m.shape[1]}, expected {shape[0]}x{shape[1]}")
    return m


def _mask_json(m):
    return None if m is None else m.to_json()


def _floats(a):
    return np.asarray(a, dtype=np.float64).tolist()


# -- proposals -------------------------------------------------------------


def load_proposals(path) -> VideoProposalFile:
    doc = read_document(path, "proposals")
    video_id = str(_require(doc, "video_id", path))
    h, w = int(_require(doc, "height", path)), int(_require(doc, "width", path))
    n_declared = doc.get("n_queries")
    d_declared = doc.get("embed_dim")
    raw_frames = _require(doc, "frames", path)
    if not isinstance(raw_frames, list) or not raw_frames:
        raise ValidationError(f"{path}: 'frames' must be a non-empty list")
    frames = []
    n = d = None
    for t, rf in enumerate(raw_frames):
        where = f"{path}: frame {t}"
        try:
            frame = FrameProposals(
                frame_index=_require(rf, "frame_index", where),
                embeddings=_require(rf, "embeddings", where),
                object_scores=_require(rf, "object_scores", where),
                masks=[_mask(m, f"{where}, mask {j}", (h, w))
                       for j, m in enumerate(_require(rf, "masks", where))],
                class_scores=rf.get("class_scores"),
            )
        except MemtrackError as exc:
            msg = str(exc)
            raise type(exc)(msg if msg.startswith(str(path)) else f"{where}: {msg}") from None
        if frame.frame_index != t:
            raise ValidationError(f"{where}: frame_index is {frame.frame_index}, expected {t}")
        if n is None:
            n, d = frame.n_queries, frame.embed_dim
            if n_declared is not None and n != int(n_declared):
                raise ValidationError(f"{where}: {n} queries, file declares n_queries={n_declared}")
            if d_declared is not None and d != int(d_declared):
                raise ValidationError(f"{where}: embedding dimension {d}, file declares embed_dim={d_declared}")
        elif frame.n_queries != n or frame.embed_dim != d:
            raise ValidationError(
                f"{where}: {frame.n_queries} queries of dimension {frame.embed_dim}, expected {n} of dimension {d}"
            )
        frames.append(frame)
    return VideoProposalFile(video_id, h, w, frames)


def save_proposals(video: VideoProposalFile, path):
    frames = []
    for f in video.frames:
        rec = {
            "frame_index": f.frame_index,
            "embeddings": _floats(f.embeddings),
            "object_scores": _floats(f.object_scores),
            "masks": [_mask_json(m) for m in f.masks],
        }
        if f.class_scores is not None:
            rec["class_scores"] = _floats(f.class_scores)
        frames.append(rec)
    _dump({
        "schema": SCHEMA,
        "video_id": video.video_id,
        "height": video.height,
        "width": video.width,
        "n_queries": video.n_queries,
        "embed_dim": video.embed_dim,
        "frames": frames,
    }, path)


# -- ground truth ----------------------------------------------------------


def load_ground_truth(path) -> GroundTruthFile:
    doc = read_document(path, "ground_truth")
    videos = []
    for k, v in enumerate(_require(doc, "videos", path)):
        where = f"{path}: video {k}"
        info = VideoInfo(str(_require(v, "id", where)), int(_require(v, "height", where)),
                         int(_require(v, "width", where)), int(_require(v, "length", where)))
        if info.height <= 0 or info.width <= 0 or info.length <= 0:
            raise ValidationError(f"{where}: dimensions and length must be positive")
        videos.append(info)
    by_id = {v.id: v for v in videos}
    if len(by_id) != len(videos):
        raise ValidationError(f"{path}: duplicate video ids")
    categories = []
    for k, c in enumerate(_require(doc, "categories", path)):
        where = f"{path}: category {k}"
        categories.append((int(_require(c, "id", where)), str(_require(c, "name", where))))
    cat_ids = {c for c, _ in categories}
    if len(cat_ids) != len(categories):
        raise ValidationError(f"{path}: duplicate category ids")
    annotations = []
    for k, a in enumerate(_require(doc, "annotations", path)):
        where = f"{path}: annotation {k}"
        vid = str(_require(a, "video_id", where))
        cid = int(_require(a, "category_id", where))
        if vid not in by_id:
            raise ValidationError(f"{where}: unknown video id {vid!r}")
        if cid not in cat_ids:
            raise ValidationError(f"{where}: unknown category id {cid}")
        info = by_id[vid]
        segs = _require(a, "segmentations", where)
        if len(segs) != info.length:
            raise ValidationError(f"{where}: {len(segs)} frames, video {vid!r} has {info.length}")
        masks = [_mask(m, f"{where}, frame {t}", (info.height, info.width)) for t, m in enumerate(segs)]
        try:
            annotations.append(GtInstance(vid, cid, masks))
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None
    return GroundTruthFile(videos, categories, annotations)


def save_ground_truth(gt: GroundTruthFile, path):
    _dump({
        "schema": SCHEMA,
        "videos": [{"id": v.id, "height": v.height, "width": v.width, "length": v.length} for v in gt.videos],
        "categories": [{"id": c, "name": n} for c, n in gt.categories],
        "annotations": [
            {"video_id": a.video_id, "category_id": a.category_id,
             "segmentations": [_mask_json(m) for m in a.masks]}
            for a in gt.annotations
        ],
    }, path)


# -- vocabulary and class head -----------------------------------------------


def load_vocabulary(path) -> Vocabulary:
    doc = read_document(path, "vocabulary")
    cats = _require(doc, "categories", path)
    if not isinstance(cats, list) or not cats:
        raise ValidationError(f"{path}: vocabulary needs at least one category")
    ids, names, base, emb = [], [], [], []
    for k, c in enumerate(cats):
        where = f"{path}: category {k}"
        ids.append(int(_require(c, "id", where)))
        names.append(str(_require(c, "name", where)))
        base.append(bool(_require(c, "base", where)))
        e = _require(c, "embedding", where)
        if emb and len(e) != len(emb[0]):
            raise ValidationError(f"{where}: embedding has dimension {len(e)}, expected {len(emb[0])}")
        emb.append(e)
    try:
        return Vocabulary(tuple(names), np.asarray(emb, dtype=np.float64), tuple(base), tuple(ids),
                          str(doc.get("prompt_template", "")))
    except MemtrackError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def save_vocabulary(vocab: Vocabulary, path):
    _dump({
        "schema": SCHEMA,
        "prompt_template": vocab.prompt_template,
        "categories": [
            {"id": i, "name": n, "base": b, "embedding": _floats(e)}
            for i, n, b, e in zip(vocab.ids, vocab.names, vocab.is_base, vocab.text_embeddings)
        ],
    }, path)


def load_class_head(path) -> ClassHead:
    doc = read_document(path, "class_head")
    layers = []
    for k, layer in enumerate(_require(doc, "layers", path)):
        where = f"{path}: layer {k}"
        layers.append((_require(layer, "weight", where), _require(layer, "bias", where)))
    try:
        return ClassHead(tuple(layers), activation=doc.get("activation", "relu"))
    except MemtrackError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def save_class_head(head: ClassHead, path):
    _dump({
        "schema": SCHEMA,
        "activation": head.activation,
        "layers": [{"weight": _floats(w), "bias": _floats(b)} for w, b in head.layers],
    }, path)


# -- predictions -------------------------------------------------------------


def predictions_from_tracklets(
    tracklets_by_video: Mapping[str, Sequence[Tracklet]],
    vocab: Vocabulary,
    top_k: int = 10,
    score_threshold: float = 0.0,
    cfg: ClassifierConfig = ClassifierConfig(),
) -> list[Prediction]:
    """One prediction per (tracklet, category) among each tracklet's top ``top_k``
    categories scoring above ``score_threshold``; deterministically ordered."""
    preds = []
    for video_id in sorted(tracklets_by_video):
        for t in sorted(tracklets_by_video[video_id], key=lambda t: t.track_id):
            if t.class_scores is None:
                raise ValidationError(f"tracklet {t.track_id} of video {video_id!r} is not classified")
            scores = np.asarray(t.class_scores, dtype=np.float64)
            if cfg.confidence_with_object_score:
                scores = scores * t.mean_object_score
            order = sorted(range(len(scores)), key=lambda j: (-scores[j], vocab.ids[j]))
            for j in order[:top_k]:
                if score_threshold <= 0.0 or scores[j] > score_threshold:
                    preds.append(Prediction(video_id, vocab.ids[j], float(scores[j]),
                                            t.masks, track_id=t.track_id))
    return preds


def save_predictions(preds: Sequence[Prediction], path):
    _dump({
        "schema": SCHEMA,
        "predictions": [
            {"video_id": p.video_id, "category_id": p.category_id, "score": p.confidence,
             "track_id": p.track_id, "segmentations": [_mask_json(m) for m in p.masks]}
            for p in preds
        ],
    }, path)


def write_predictions(tracklets_by_video, vocab, path, top_k=10, score_threshold=0.0,
                      cfg: ClassifierConfig = ClassifierConfig()) -> list[Prediction]:
    preds = predictions_from_tracklets(tracklets_by_video, vocab, top_k, score_threshold, cfg)
    save_predictions(preds, path)
    return preds


def load_predictions(path) -> list[Prediction]:
    doc = read_document(path, "predictions")
    preds = []
    for k, p in enumerate(_require(doc, "predictions", path)):
        where = f"{path}: prediction {k}"
        score = float(_require(p, "score", where))
        if not math.isfinite(score):
            raise ValidationError(f"{where}: score must be finite")
        try:
            preds.append(Prediction(
                str(_require(p, "video_id", where)),
                int(_require(p, "category_id", where)),
                score,
                [_mask(m, f"{where}, frame {t}") for t, m in enumerate(_require(p, "segmentations", where))],
                track_id=p.get("track_id"),
            ))
        except MemtrackError as exc:
            msg = str(exc)
            raise type(exc)(msg if msg.startswith(str(path)) else f"{where}: {msg}") from None
    return preds


# -- reports -----------------------------------------------------------------


def save_report(report: EvalReport, path):
    _dump({"schema": SCHEMA, **report.to_json()}, path)


# -- validation of arbitrary files -------------------------------------------

_LOADERS = {
    "proposals": load_proposals,
    "ground_truth": load_ground_truth,
    "predictions": load_predictions,
    "vocabulary": load_vocabulary,
    "class_head": load_class_head,
}


def detect_kind(doc: dict) -> str:
    if "frames" in doc:
        return "proposals"
    if "annotations" in doc:
        return "ground_truth"
    if "predictions" in doc:
        return "predictions"
    if "layers" in doc:
        return "class_head"
    if "categories" in doc:
        return "vocabulary"
    if "seed" in doc:
        return "fixture_spec"
    if set(doc) - {"schema"} <= RUN_CONFIG_KEYS:
        return "run_config"
    raise FormatError("cannot tell what kind of file this is")


def validate_file(path) -> str:
    """Fully load ``path`` with the matching loader; returns the detected kind."""
    doc = read_document(path)
    try:
        kind = detect_kind(doc)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if kind == "fixture_spec":
        from .synth import load_fixture_spec

        load_fixture_spec(path)
    elif kind != "run_config":
        _LOADERS[kind](path)
    return kind
