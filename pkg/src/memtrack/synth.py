"""Synthetic fixtures and brute-force oracles.

Fixtures are rectangles moving linearly over a small canvas.  Each object
owns a fixed unit-norm identity embedding; its proposal in a visible frame
is that identity plus Gaussian noise, with object score 0.95 and the exact
ground-truth box as mask.  Inside an occlusion window the proposal loses its
appearance (a fresh random unit embedding), drops to score 0.05 and carries
a small stale box at the last visible position.  Distractor proposals get a
fresh random unit embedding, score 0.1 and a small random box every frame.
A *gap distractor* is a look-alike of one object (fixed cosine similarity to
its identity, same box size, score 0.1) that appears at a given frame on top
of the object and stays until the end of the video.

The vocabulary's text embeddings are the identity embeddings (normalised
category means when objects share a category) and the class head is the
identity map, so a perfectly tracked object classifies perfectly.

All randomness comes from numpy's PCG64 bit generator seeded with the spec
seed; Gaussian draws are produced by the inverse normal CDF applied to
uniform draws.

The oracles at the bottom of the module deliberately share no code with the
assignment solver or the evaluator they check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit, ndtri

from .classifier import ClassHead, Vocabulary
from .dataio import (
    GroundTruthFile,
    VideoInfo,
    VideoProposalFile,
    read_document,
    save_class_head,
    save_ground_truth,
    save_proposals,
    save_vocabulary,
)
from .evaluator import EvalConfig, EvalReport, GtInstance
from .exceptions import OracleSizeError, SpecError
from .mask_ops import box_mask
from .tracker import FrameProposals

VISIBLE_SCORE = 0.95
OCCLUDED_SCORE = 0.05
DISTRACTOR_SCORE = 0.1


@dataclass(frozen=True)
class GapDistractor:
    object: int
    start: int
    similarity: float = 0.5


@dataclass(frozen=True)
class FixtureSpec:
    seed: int = 0
    n_objects: int = 3
    n_distractors: int = 0
    frame_count: int = 10
    dims: tuple = (32, 32)
    embed_dim: int = 64
    noise_sigma: float = 0.0
    occlusion_windows: tuple = ()  # per object: tuple of inclusive (start, end)
    categories: tuple = ()  # per object category index; default one category per object
    base_categories: Optional[tuple] = None  # default: first half of the categories
    n_videos: int = 1
    box_size: Optional[tuple] = None  # (h, w); default a quarter of the canvas
    max_speed: float = 1.5
    gap_distractors: tuple = ()
    per_frame_class_scores: bool = True

    def __post_init__(self):
        def fail(msg):
            raise SpecError(msg)

        if self.n_objects < 1:
            fail("n_objects must be at least 1")
        if self.n_distractors < 0 or self.frame_count < 1 or self.n_videos < 1 or self.embed_dim < 1:
            fail("counts must be positive (n_distractors non-negative)")
        h, w = (int(x) for x in self.dims)
        if h < 1 or w < 1:
            fail("canvas dimensions must be positive")
        object.__setattr__(self, "dims", (h, w))
        box = self.box_size or (max(1, h // 4), max(1, w // 4))
        box = tuple(int(x) for x in box)
        if box[0] < 1 or box[1] < 1 or box[0] > h or box[1] > w:
            fail(f"box of {box[0]}x{box[1]} does not fit the {h}x{w} canvas")
        object.__setattr__(self, "box_size", box)
        if self.noise_sigma < 0:
            fail("noise_sigma must be non-negative")
        windows = tuple(tuple((int(a), int(b)) for a, b in obj) for obj in self.occlusion_windows)
        if len(windows) > self.n_objects:
            fail("more occlusion window lists than objects")
        windows = windows + ((),) * (self.n_objects - len(windows))
        for i, obj in enumerate(windows):
            for a, b in obj:
                if a > b or a < 0:
                    fail(f"object {i}: bad occlusion window ({a}, {b})")
            hidden = {t for a, b in obj for t in range(a, b + 1)}
            if all(t in hidden for t in range(self.frame_count)):
                fail(f"object {i} is never visible")
        object.__setattr__(self, "occlusion_windows", windows)
        cats = tuple(int(c) for c in self.categories) or tuple(range(self.n_objects))
        if len(cats) != self.n_objects or min(cats) < 0:
            fail("categories must give one non-negative index per object")
        object.__setattr__(self, "categories", cats)
        n_cat = max(cats) + 1
        if set(cats) != set(range(n_cat)):
            fail("category indices must be contiguous from 0")
        base = self.base_categories
        if base is None:
            base = tuple(range((n_cat + 1) // 2))
        object.__setattr__(self, "base_categories", tuple(int(c) for c in base))
        gaps = tuple(g if isinstance(g, GapDistractor) else GapDistractor(**g) for g in self.gap_distractors)
        if len(gaps) > self.n_distractors:
            fail("each gap distractor needs a distractor proposal slot")
        for g in gaps:
            if not 0 <= g.object < self.n_objects or not 0 <= g.start < self.frame_count:
                fail(f"gap distractor {g} refers to a missing object or frame")
            if not -1.0 <= g.similarity <= 1.0:
                fail("gap distractor similarity must be a cosine in [-1, 1]")
        object.__setattr__(self, "gap_distractors", gaps)

    @property
    def n_queries(self) -> int:
        return self.n_objects + self.n_distractors

    @property
    def n_categories(self) -> int:
        return max(self.categories) + 1

    def hidden(self, obj: int, t: int) -> bool:
        return any(a <= t <= b for a, b in self.occlusion_windows[obj])


@dataclass
class Fixture:
    spec: FixtureSpec
    ground_truth: GroundTruthFile
    videos: list  # VideoProposalFile
    vocabulary: Vocabulary
    class_head: ClassHead
    # owners[video_id][t][j]: object index of proposal j, or -(k + 1) for distractor k
    owners: dict = field(default_factory=dict)


class _Draws:
    def __init__(self, seed):
        self.gen = np.random.Generator(np.random.PCG64(seed))

    def uniform(self, size=None):
        return self.gen.random(size)

    def normal(self, size):
        u = np.clip(self.gen.random(size), 2.0**-53, 1.0 - 2.0**-53)
        return ndtri(u)

    def unit(self, d):
        v = self.normal(d)
        return v / np.linalg.norm(v)

    def integer(self, low, high):
        """Uniform integer in [low, high]."""
        return low + min(int(self.uniform() * (high - low + 1)), high - low)

    def permutation(self, n):
        return np.argsort(self.uniform(n), kind="stable")


def _orthogonal_unit(draws, e):
    while True:
        u = draws.normal(e.size)
        u -= (u @ e) * e
        n = np.linalg.norm(u)
        if n > 1e-8:
            return u / n


def generate_fixture(spec: FixtureSpec) -> Fixture:
    draws = _Draws(spec.seed)
    h, w = spec.dims
    bh, bw = spec.box_size
    d = spec.embed_dim
    identities = np.stack([draws.unit(d) for _ in range(spec.n_objects)])

    text = np.zeros((spec.n_categories, d))
    for i, c in enumerate(spec.categories):
        text[c] += identities[i]
    text /= np.linalg.norm(text, axis=1, keepdims=True)
    base = set(spec.base_categories)
    vocab = Vocabulary(
        names=tuple(f"category_{c}" for c in range(spec.n_categories)),
        text_embeddings=text,
        is_base=tuple(c in base for c in range(spec.n_categories)),
        ids=tuple(range(spec.n_categories)),
        prompt_template="this is a photo of [X]",
    )
    lookalikes = []
    for g in spec.gap_distractors:
        e = identities[g.object]
        u = _orthogonal_unit(draws, e)
        lookalikes.append(g.similarity * e + math.sqrt(max(0.0, 1.0 - g.similarity**2)) * u)

    small = (max(1, bh // 4), max(1, bw // 4))
    videos, annotations, infos, owners = [], [], [], {}
    for v in range(spec.n_videos):
        video_id = f"video_{v}"
        starts = [(draws.integer(0, h - bh), draws.integer(0, w - bw)) for _ in range(spec.n_objects)]
        speeds = [tuple((2 * draws.uniform(2) - 1) * spec.max_speed) for _ in range(spec.n_objects)]

        def position(i, t):
            top = min(max(round(starts[i][0] + speeds[i][0] * t), 0), h - bh)
            left = min(max(round(starts[i][1] + speeds[i][1] * t), 0), w - bw)
            return top, left

        gt_masks = [[None] * spec.frame_count for _ in range(spec.n_objects)]
        last_seen = [position(i, 0) for i in range(spec.n_objects)]
        frames, video_owners = [], []
        for t in range(spec.frame_count):
            emb, scores, masks, owner = [], [], [], []
            for i in range(spec.n_objects):
                if spec.hidden(i, t):
                    emb.append(draws.unit(d))
                    scores.append(OCCLUDED_SCORE)
                    top, left = last_seen[i]
                    masks.append(box_mask(h, w, top, left, *small))
                else:
                    top, left = position(i, t)
                    last_seen[i] = (top, left)
                    m = box_mask(h, w, top, left, bh, bw)
                    gt_masks[i][t] = m
                    emb.append(identities[i] + spec.noise_sigma * draws.normal(d))
                    scores.append(VISIBLE_SCORE)
                    masks.append(m)
                owner.append(i)
            for k in range(spec.n_distractors):
                gap = spec.gap_distractors[k] if k < len(spec.gap_distractors) else None
                if gap is not None and t >= gap.start:
                    emb.append(lookalikes[k] + spec.noise_sigma * draws.normal(d))
                    top, left = position(gap.object, t)
                    masks.append(box_mask(h, w, top, left, bh, bw))
                else:
                    emb.append(draws.unit(d))
                    dh, dw = small
                    masks.append(box_mask(h, w, draws.integer(0, h - dh), draws.integer(0, w - dw), dh, dw))
                scores.append(DISTRACTOR_SCORE)
                owner.append(-(k + 1))
            order = draws.permutation(spec.n_queries)
            emb = np.asarray(emb)[order]
            class_scores = None
            if spec.per_frame_class_scores:
                cos = (emb / np.linalg.norm(emb, axis=1, keepdims=True)) @ text.T
                class_scores = expit(50.0 * cos)
            frames.append(FrameProposals(
                frame_index=t,
                embeddings=emb,
                object_scores=np.asarray(scores)[order],
                masks=[masks[j] for j in order],
                class_scores=class_scores,
            ))
            video_owners.append(np.asarray(owner)[order])
        videos.append(VideoProposalFile(video_id, h, w, frames))
        owners[video_id] = video_owners
        infos.append(VideoInfo(video_id, h, w, spec.frame_count))
        for i in range(spec.n_objects):
            annotations.append(GtInstance(video_id, spec.categories[i], gt_masks[i]))

    gt = GroundTruthFile(infos, list(zip(vocab.ids, vocab.names)), annotations)
    return Fixture(spec, gt, videos, vocab, ClassHead.identity(d), owners)


def write_fixture(fixture: Fixture, out_dir) -> dict:
    """Write a fixture with the standard file layout; returns the paths."""
    out = Path(out_dir)
    (out / "proposals").mkdir(parents=True, exist_ok=True)
    paths = {
        "ground_truth": out / "gt.json",
        "vocabulary": out / "vocab.json",
        "class_head": out / "head.json",
        "proposals": [],
    }
    save_ground_truth(fixture.ground_truth, paths["ground_truth"])
    save_vocabulary(fixture.vocabulary, paths["vocabulary"])
    save_class_head(fixture.class_head, paths["class_head"])
    for video in fixture.videos:
        p = out / "proposals" / f"{video.video_id}.json"
        save_proposals(video, p)
        paths["proposals"].append(p)
    return paths


def fixture_spec_from_dict(doc: dict) -> FixtureSpec:
    fields = {k: v for k, v in doc.items() if k != "schema"}
    known = set(FixtureSpec.__dataclass_fields__)
    unknown = set(fields) - known
    if unknown:
        raise SpecError(f"unknown fixture spec fields: {sorted(unknown)}")
    for key in ("dims", "box_size", "categories", "base_categories"):
        if fields.get(key) is not None:
            fields[key] = tuple(fields[key])
    if "occlusion_windows" in fields:
        fields["occlusion_windows"] = tuple(tuple(tuple(win) for win in obj) for obj in fields["occlusion_windows"])
    if "gap_distractors" in fields:
        fields["gap_distractors"] = tuple(GapDistractor(**g) for g in fields["gap_distractors"])
    try:
        return FixtureSpec(**fields)
    except TypeError as exc:
        raise SpecError(str(exc)) from None


def load_fixture_spec(path) -> FixtureSpec:
    return fixture_spec_from_dict(read_document(path))


# -- oracles -------------------------------------------------------------------


def brute_force_assignment(weights) -> tuple[float, list]:
    """Exhaustive maximum-weight assignment; returns (total, pairs)."""
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        return 0.0, []
    rows, cols = w.shape
    if min(rows, cols) > 8:
        raise OracleSizeError(f"brute force is limited to 8 assignments, got {min(rows, cols)}")
    best, best_pairs = -math.inf, []
    if rows <= cols:
        for perm in itertools.permutations(range(cols), rows):
            pairs = list(enumerate(perm))
            total = math.fsum(w[r, c] for r, c in pairs)
            if total > best:
                best, best_pairs = total, pairs
    else:
        for perm in itertools.permutations(range(rows), cols):
            pairs = sorted((r, c) for c, r in enumerate(perm))
            total = math.fsum(w[r, c] for r, c in pairs)
            if total > best:
                best, best_pairs = total, pairs
    return best, best_pairs


def _dense(mask, shape):
    if mask is None:
        return np.zeros(shape, dtype=bool)
    flat = np.zeros(mask.height * mask.width, dtype=bool)
    pos = 0
    for k, run in enumerate(mask.counts):
        if k % 2:
            flat[pos:pos + run] = True
        pos += run
    return flat.reshape(mask.width, mask.height).T


def dense_reference_eval(preds, gts, vocab: Vocabulary, cfg: EvalConfig = EvalConfig(),
                         max_pixels: int = 10**7) -> EvalReport:
    """Straight-line metric on fully decoded masks, for cross-checking."""
    if cfg.ap_method != "interp":
        raise OracleSizeError("the dense oracle only implements interpolated AP")
    shapes, lengths = {}, {}
    for item in list(gts) + list(preds):
        for m in item.masks:
            if m is not None:
                shapes[item.video_id] = (m.height, m.width)
        lengths[item.video_id] = max(lengths.get(item.video_id, 0), len(item.masks))
    dense = {}
    for vid, shape in shapes.items():
        if lengths[vid] * shape[0] * shape[1] > max_pixels:
            raise OracleSizeError(f"video {vid!r} exceeds {max_pixels} pixels")

    def volume(item):
        key = id(item)
        if key not in dense:
            shape = shapes[item.video_id]
            vol = np.zeros((lengths[item.video_id],) + shape, dtype=bool)
            for t, m in enumerate(item.masks):
                vol[t] = _dense(m, shape)
            dense[key] = vol
        return dense[key]

    # per video, keep the max_dets most confident predictions
    ranked = sorted(range(len(preds)), key=lambda k: -preds[k].confidence)
    per_video, kept = {}, []
    for k in ranked:
        vid = preds[k].video_id
        per_video[vid] = per_video.get(vid, 0) + 1
        if per_video[vid] <= cfg.max_dets_per_video:
            kept.append(preds[k])

    R = cfg.recall_points
    aps = {}
    for cid in vocab.ids:
        cp = [p for p in kept if p.category_id == cid]
        cg = [g for g in gts if g.category_id == cid]
        if not cg:
            aps[cid] = None
            continue
        iou = {}
        for a, p in enumerate(cp):
            for b, g in enumerate(cg):
                if p.video_id == g.video_id:
                    pv, gv = volume(p), volume(g)
                    u = np.logical_or(pv, gv).sum()
                    iou[a, b] = np.logical_and(pv, gv).sum() / u if u else 0.0
        per_threshold = []
        for thr in cfg.iou_thresholds:
            used = set()
            hits = []
            for a in range(len(cp)):
                options = [(iou[a, b], -b) for b in range(len(cg)) if (a, b) in iou and b not in used
                           and iou[a, b] >= thr]
                if options:
                    used.add(-max(options)[1])
                hits.append(bool(options))
            n_gt = len(cg)
            points = []
            tp = 0
            for rank, hit in enumerate(hits, start=1):
                tp += hit
                points.append((Fraction(tp, n_gt), Fraction(tp, rank)))
            total = Fraction(0)
            for k in range(R):
                level = Fraction(k, R - 1)
                reachable = [prec for rec, prec in points if rec >= level]
                if reachable:
                    total += max(reachable)
            per_threshold.append(total / R)
        aps[cid] = float(sum(per_threshold) / len(per_threshold))

    def mean(ids):
        vals = [aps[c] for c in ids if aps[c] is not None]
        return sum(vals) / len(vals) if vals else None

    return EvalReport(
        per_category_ap=aps,
        map=mean(vocab.ids),
        map_base=mean([c for c, b in zip(vocab.ids, vocab.is_base) if b]),
        map_novel=mean([c for c, b in zip(vocab.ids, vocab.is_base) if not b]),
        names=dict(zip(vocab.ids, vocab.names)),
    )
