"""Memory-induced tracking.

A fixed bank of memory queries, one per proposal slot, is seeded from the
first frame.  Each later frame's proposals are matched to the bank by
maximum-weight assignment on the query/memory similarity matrix, and every
slot then moves towards its matched embedding by a momentum step whose size
is the update ratio ``alpha`` times the matched proposal's object score::

    slot <- alpha * s * q + (1 - alpha * s) * slot

A low object score (occlusion, disappearance) therefore leaves the memory
nearly untouched, which is what lets a slot re-acquire its object later.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    check_choice,
    check_fraction,
    check_matrix,
    check_unit_interval,
    check_vector,
)
from .assignment import solve_assignment
from .exceptions import (
    DimensionError,
    EmptyVideoError,
    FormatError,
    InvalidAssociationError,
    InvariantError,
    ValidationError,
)
from .mask_ops import RleMask

SIMILARITIES = ("inner_product", "cosine")


@dataclass
class FrameProposals:
    frame_index: int
    embeddings: np.ndarray
    object_scores: np.ndarray
    masks: list
    class_scores: Optional[np.ndarray] = None

    def __post_init__(self):
        if int(self.frame_index) < 0:
            raise ValidationError(f"frame_index must be non-negative, got {self.frame_index}")
        self.frame_index = int(self.frame_index)
        self.embeddings = check_matrix(self.embeddings, "embeddings", allow_empty=True)
        self.object_scores = check_unit_interval(
            check_vector(self.object_scores, "object_scores"), "object_scores"
        )
        self.masks = list(self.masks)
        n = self.embeddings.shape[0]
        if len(self.object_scores) != n or len(self.masks) != n:
            raise DimensionError(
                f"frame {self.frame_index}: {n} embeddings, {len(self.object_scores)} "
                f"object scores and {len(self.masks)} masks"
            )
        for m in self.masks:
            if m is not None and not isinstance(m, RleMask):
                raise ValidationError(f"frame {self.frame_index}: masks must be RleMask or None")
        if self.class_scores is not None:
            cs = check_matrix(self.class_scores, "class_scores", allow_empty=True)
            if cs.shape[0] != n:
                raise DimensionError(
                    f"frame {self.frame_index}: class_scores has {cs.shape[0]} rows, expected {n}"
                )
            self.class_scores = check_unit_interval(cs, "class_scores")

    @property
    def n_queries(self) -> int:
        return self.embeddings.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.embeddings.shape[1]


@dataclass(frozen=True)
class MemoryBank:
    """Memory queries plus the per-frame association record.

    ``assignments[t][i]`` is the proposal index that slot ``i`` absorbed at
    frame ``t``.
    """

    slots: np.ndarray
    slot_last_score: np.ndarray
    assignments: tuple = ()

    @property
    def n_slots(self) -> int:
        return self.slots.shape[0]

    @property
    def n_frames(self) -> int:
        return len(self.assignments)

    @property
    def slot_history(self) -> list[list[tuple[int, int]]]:
        return [
            [(t, int(p[i])) for t, p in enumerate(self.assignments)]
            for i in range(self.n_slots)
        ]


@dataclass(frozen=True)
class TrackerConfig:
    alpha: float = 0.7
    similarity: str = "inner_product"
    gate_with_object_score: bool = True
    mask_emit_threshold: float = 0.0

    def __post_init__(self):
        check_fraction(self.alpha, "alpha")
        check_choice(self.similarity, "similarity", SIMILARITIES)
        check_fraction(self.mask_emit_threshold, "mask_emit_threshold")


@dataclass
class Tracklet:
    track_id: int
    per_frame: list = field(default_factory=list)  # (frame_index, RleMask | None, object_score)
    class_scores: Optional[np.ndarray] = None
    mean_object_score: float = 0.0
    proposals: list = field(default_factory=list)  # proposal index per frame

    @property
    def masks(self) -> list:
        return [m for _, m, _ in self.per_frame]


def init_memory(first: FrameProposals) -> MemoryBank:
    if first.frame_index != 0:
        raise FormatError(f"first frame must have frame_index 0, got {first.frame_index}")
    n = first.n_queries
    if n == 0:
        raise EmptyVideoError("first frame has no proposals")
    return MemoryBank(
        slots=first.embeddings.copy(),
        slot_last_score=first.object_scores.copy(),
        assignments=(np.arange(n),),
    )


def similarity_matrix(bank: MemoryBank, frame: FrameProposals, mode: str = "inner_product") -> np.ndarray:
    """Slot-by-proposal similarities; rows are memory slots."""
    check_choice(mode, "similarity", SIMILARITIES)
    if bank.slots.shape[1] != frame.embed_dim:
        raise DimensionError(
            f"memory dimension {bank.slots.shape[1]} != embedding dimension {frame.embed_dim}"
        )
    sim = bank.slots @ frame.embeddings.T
    if mode == "cosine":
        ns = np.linalg.norm(bank.slots, axis=1)
        ne = np.linalg.norm(frame.embeddings, axis=1)
        denom = np.outer(ns, ne)
        sim = np.divide(sim, denom, out=np.zeros_like(sim), where=denom > 0)
    return sim


def associate(bank: MemoryBank, frame: FrameProposals, cfg: TrackerConfig = TrackerConfig()) -> np.ndarray:
    """Permutation ``p`` with slot ``i`` taking proposal ``p[i]``."""
    if frame.frame_index < 1:
        raise FormatError("association starts at frame 1; frame 0 seeds the memory")
    if frame.n_queries != bank.n_slots:
        raise FormatError(
            f"frame {frame.frame_index} has {frame.n_queries} proposals, memory has {bank.n_slots} slots"
        )
    sim = similarity_matrix(bank, frame, cfg.similarity)
    perm = np.empty(bank.n_slots, dtype=np.int64)
    for slot, proposal in solve_assignment(sim):
        perm[slot] = proposal
    return perm


def _check_permutation(p, n) -> np.ndarray:
    p = np.asarray(p)
    if p.shape != (n,) or not np.issubdtype(p.dtype, np.integer):
        raise InvalidAssociationError(f"association must be {n} integer indices")
    if not np.array_equal(np.sort(p), np.arange(n)):
        raise InvalidAssociationError("association is not a bijection")
    return p.astype(np.int64)


def update_memory(
    bank: MemoryBank, frame: FrameProposals, p, cfg: TrackerConfig = TrackerConfig()
) -> MemoryBank:
    n = bank.n_slots
    p = _check_permutation(p, n)
    if frame.n_queries != n:
        raise FormatError(f"frame {frame.frame_index} has {frame.n_queries} proposals, expected {n}")
    matched = frame.embeddings[p]
    scores = frame.object_scores[p]
    rate = cfg.alpha * (scores if cfg.gate_with_object_score else np.ones(n))

    old = bank.slots
    new = old.copy()
    # rate 0 and rate 1 are assigned directly so those slots stay bit-exact
    full = rate == 1.0
    new[full] = matched[full]
    part = (rate > 0.0) & ~full
    if part.any():
        r = rate[part, None]
        blend = r * matched[part] + (1.0 - r) * old[part]
        # rounding must not push a coordinate outside the segment it lies on
        lo = np.minimum(old[part], matched[part])
        hi = np.maximum(old[part], matched[part])
        new[part] = np.clip(blend, lo, hi)

    return MemoryBank(
        slots=new,
        slot_last_score=scores.copy(),
        assignments=bank.assignments + (p,),
    )


def _validate_video(frames: Sequence[FrameProposals]):
    if len(frames) == 0:
        raise EmptyVideoError("video has no frames")
    n, d = frames[0].n_queries, frames[0].embed_dim
    for t, frame in enumerate(frames):
        if frame.frame_index != t:
            raise FormatError(f"frame indices must be contiguous from 0; position {t} has index {frame.frame_index}")
        if frame.n_queries != n or frame.embed_dim != d:
            raise FormatError(
                f"frame {t}: {frame.n_queries}x{frame.embed_dim} proposals, expected {n}x{d}"
            )


def build_tracklets(frames: Sequence[FrameProposals], bank: MemoryBank, cfg: TrackerConfig) -> list[Tracklet]:
    if bank.n_frames != len(frames):
        raise InvariantError(f"memory saw {bank.n_frames} frames, {len(frames)} given")
    tracklets = []
    for i in range(bank.n_slots):
        per_frame, proposals = [], []
        for frame, p in zip(frames, bank.assignments):
            j = int(p[i])
            proposals.append(j)
            score = float(frame.object_scores[j])
            mask = frame.masks[j] if score >= cfg.mask_emit_threshold else None
            per_frame.append((frame.frame_index, mask, score))
        mean = float(np.mean([s for _, _, s in per_frame]))
        tracklets.append(
            Tracklet(track_id=i, per_frame=per_frame, mean_object_score=mean, proposals=proposals)
        )
    return tracklets


def track_video(
    frames: Sequence[FrameProposals], cfg: TrackerConfig = TrackerConfig()
) -> tuple[list[Tracklet], MemoryBank]:
    frames = list(frames)
    _validate_video(frames)
    bank = init_memory(frames[0])
    for frame in frames[1:]:
        bank = update_memory(bank, frame, associate(bank, frame, cfg), cfg)
    return build_tracklets(frames, bank, cfg), bank


class MemoryTracker(BaseEstimator):
    """Estimator wrapper around :func:`track_video`.

    ``fit`` tracks a whole video; ``partial_fit`` consumes one frame at a
    time for streaming use.  After fitting, ``labels_[t, j]`` is the track id
    (memory slot) that proposal ``j`` of frame ``t`` was assigned to.

    Parameters
    ----------
    alpha : float, default=0.7
        Memory update ratio in [0, 1].  0 freezes the memory at frame 0;
        1 with gating off reduces to plain consecutive-frame matching.
    similarity : {"inner_product", "cosine"}, default="inner_product"
    gate_with_object_score : bool, default=True
        Scale each update by the matched proposal's object score.
    mask_emit_threshold : float, default=0.0
        Tracklet masks whose object score falls below this are emitted as absent.
    """

    def __init__(self, alpha=0.7, similarity="inner_product", gate_with_object_score=True,
                 mask_emit_threshold=0.0):
        self.alpha = alpha
        self.similarity = similarity
        self.gate_with_object_score = gate_with_object_score
        self.mask_emit_threshold = mask_emit_threshold

    def _config(self) -> TrackerConfig:
        return TrackerConfig(
            alpha=self.alpha,
            similarity=self.similarity,
            gate_with_object_score=bool(self.gate_with_object_score),
            mask_emit_threshold=self.mask_emit_threshold,
        )

    def fit(self, X, y=None):
        frames = list(getattr(X, "frames", X))
        _validate_video(frames)
        for attr in ("memory_", "frames_"):
            self.__dict__.pop(attr, None)
        for frame in frames:
            self.partial_fit(frame)
        return self

    def partial_fit(self, frame: FrameProposals, y=None):
        cfg = self._config()
        if not hasattr(self, "memory_"):
            self.memory_ = init_memory(frame)
            self.frames_ = [frame]
            self.n_queries_ = frame.n_queries
            self.embed_dim_ = frame.embed_dim
            return self
        expected = len(self.frames_)
        if frame.frame_index != expected:
            raise FormatError(f"expected frame_index {expected}, got {frame.frame_index}")
        if frame.n_queries != self.n_queries_ or frame.embed_dim != self.embed_dim_:
            raise FormatError(
                f"frame {frame.frame_index}: {frame.n_queries}x{frame.embed_dim} proposals, "
                f"expected {self.n_queries_}x{self.embed_dim_}"
            )
        self.memory_ = update_memory(self.memory_, frame, associate(self.memory_, frame, cfg), cfg)
        self.frames_.append(frame)
        return self

    @property
    def labels_(self) -> np.ndarray:
        check_is_fitted(self, "memory_")
        labels = np.empty((len(self.frames_), self.n_queries_), dtype=np.int64)
        for t, p in enumerate(self.memory_.assignments):
            labels[t, p] = np.arange(self.n_queries_)
        return labels

    @property
    def tracklets_(self) -> list[Tracklet]:
        check_is_fitted(self, "memory_")
        return build_tracklets(self.frames_, self.memory_, self._config())

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).labels_
