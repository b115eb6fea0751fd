"""Open-vocabulary classification of tracklets.

Memory queries go through a small MLP class head into the text-embedding
space and are scored against every category's text embedding with a
temperature-scaled cosine similarity squashed by a sigmoid.  ``multiply``
mode uses the temperature as a logit scale (``sigmoid(t * cos)``);
``divide`` mode uses ``sigmoid(cos / t)``.  Both rank categories identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_choice, check_matrix
from .exceptions import DimensionError, UnsupportedInputError, ValidationError, WeightsError
from .tracker import FrameProposals, MemoryBank, Tracklet

ACTIVATIONS = ("relu", "none")
TEMPERATURE_MODES = ("multiply", "divide")


@dataclass(frozen=True)
class ClassHead:
    layers: tuple  # of (weight out x in, bias out)
    activation: str = "relu"

    def __post_init__(self):
        check_choice(self.activation, "activation", ACTIVATIONS)
        if not self.layers:
            raise WeightsError("class head needs at least one layer")
        layers = []
        for k, (weight, bias) in enumerate(self.layers):
            weight = check_matrix(weight, f"layer {k} weight", error=WeightsError)
            bias = np.asarray(bias, dtype=np.float64)
            if bias.shape != (weight.shape[0],):
                raise WeightsError(
                    f"layer {k}: bias has shape {bias.shape}, expected ({weight.shape[0]},)"
                )
            if layers and layers[-1][0].shape[0] != weight.shape[1]:
                raise WeightsError(
                    f"layer {k} expects {weight.shape[1]} inputs but layer {k - 1} "
                    f"produces {layers[-1][0].shape[0]}"
                )
            layers.append((weight, bias))
        object.__setattr__(self, "layers", tuple(layers))

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @classmethod
    def identity(cls, dim: int) -> "ClassHead":
        return cls(((np.eye(dim), np.zeros(dim)),), activation="none")


@dataclass(frozen=True)
class Vocabulary:
    names: tuple
    text_embeddings: np.ndarray
    is_base: tuple
    ids: tuple = ()
    prompt_template: str = "this is a photo of [X]"

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        if not names:
            raise ValidationError("vocabulary needs at least one category")
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise ValidationError(f"duplicate category name {dup!r}")
        emb = check_matrix(self.text_embeddings, "text_embeddings")
        if emb.shape[0] != len(names):
            raise DimensionError(f"{emb.shape[0]} text embeddings for {len(names)} categories")
        if (np.linalg.norm(emb, axis=1) == 0).any():
            raise ValidationError("text embeddings must be non-zero")
        is_base = tuple(bool(b) for b in self.is_base)
        if len(is_base) != len(names):
            raise DimensionError("is_base must have one flag per category")
        ids = tuple(int(i) for i in self.ids) if self.ids else tuple(range(len(names)))
        if len(ids) != len(names) or len(set(ids)) != len(ids):
            raise ValidationError("category ids must be unique, one per category")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "text_embeddings", emb)
        object.__setattr__(self, "is_base", is_base)
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return len(self.names)

    @property
    def embed_dim(self) -> int:
        return self.text_embeddings.shape[1]

    def index_of(self, category_id) -> int:
        return self.ids.index(int(category_id))


@dataclass(frozen=True)
class ClassifierConfig:
    temperature: float = 50.0
    temperature_mode: str = "multiply"
    confidence_with_object_score: bool = False

    def __post_init__(self):
        if not float(self.temperature) > 0:
            raise ValidationError(f"temperature must be positive, got {self.temperature!r}")
        check_choice(self.temperature_mode, "temperature_mode", TEMPERATURE_MODES)


def class_head_forward(Q, head: ClassHead) -> np.ndarray:
    x = check_matrix(Q, "queries", allow_empty=True)
    if x.shape[1] != head.in_dim:
        raise WeightsError(f"queries have dimension {x.shape[1]}, class head expects {head.in_dim}")
    last = len(head.layers) - 1
    for k, (weight, bias) in enumerate(head.layers):
        x = x @ weight.T + bias
        if k < last and head.activation == "relu":
            x = np.maximum(x, 0.0)
    return x


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarities; zero-norm rows give 0."""
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = np.outer(na, nb)
    return np.divide(a @ b.T, denom, out=np.zeros((a.shape[0], b.shape[0])), where=denom > 0)


def classification_logits(e_cls, vocab: Vocabulary, cfg: ClassifierConfig = ClassifierConfig()) -> np.ndarray:
    """Pre-sigmoid scores.  Rank categories by these: in multiply mode the
    sigmoid rounds to exactly 1.0 once the logit passes about 37, which
    turns distinct categories into ties."""
    e_cls = check_matrix(e_cls, "class embeddings", allow_empty=True)
    if e_cls.shape[1] != vocab.embed_dim:
        raise DimensionError(
            f"class embeddings have dimension {e_cls.shape[1]}, text embeddings {vocab.embed_dim}"
        )
    cos = cosine_matrix(e_cls, vocab.text_embeddings)
    t = float(cfg.temperature)
    return cos * t if cfg.temperature_mode == "multiply" else cos / t


def classification_scores(e_cls, vocab: Vocabulary, cfg: ClassifierConfig = ClassifierConfig()) -> np.ndarray:
    return expit(classification_logits(e_cls, vocab, cfg))


def classify_tracks(
    bank: MemoryBank,
    tracklets: Sequence[Tracklet],
    head: ClassHead,
    vocab: Vocabulary,
    cfg: ClassifierConfig = ClassifierConfig(),
) -> list[Tracklet]:
    """Fill ``class_scores`` of each tracklet from its slot in the final memory."""
    if len(tracklets) != bank.n_slots:
        raise ValidationError(f"{len(tracklets)} tracklets for {bank.n_slots} memory slots")
    scores = classification_scores(class_head_forward(bank.slots, head), vocab, cfg)
    for t in tracklets:
        if not 0 <= t.track_id < bank.n_slots:
            raise ValidationError(f"track_id {t.track_id} has no memory slot")
        t.class_scores = scores[t.track_id]
    return list(tracklets)


def classify_average(frames: Sequence[FrameProposals], tracklets: Sequence[Tracklet]) -> list[Tracklet]:
    """Baseline: mean of the per-frame class scores along each tracklet."""
    by_index = {f.frame_index: f for f in frames}
    for f in frames:
        if f.class_scores is None:
            raise UnsupportedInputError(f"frame {f.frame_index} has no per-frame class scores")
    for t in tracklets:
        if len(t.proposals) != len(t.per_frame):
            raise UnsupportedInputError(f"tracklet {t.track_id} does not record its proposal indices")
        rows = [
            by_index[frame_index].class_scores[j]
            for (frame_index, _, _), j in zip(t.per_frame, t.proposals)
        ]
        t.class_scores = np.mean(rows, axis=0)
    return list(tracklets)


class OpenVocabularyClassifier(ClassifierMixin, BaseEstimator):
    """Scores query embeddings against a vocabulary of text embeddings.

    ``fit(text_embeddings, names)`` stores the vocabulary; ``predict_proba``
    returns independent per-category sigmoid scores (rows do not sum to 1)
    and ``predict`` the category with the largest ``decision_function``.
    """

    def __init__(self, head=None, temperature=50.0, temperature_mode="multiply"):
        self.head = head
        self.temperature = temperature
        self.temperature_mode = temperature_mode

    def fit(self, X, y=None, is_base=None):
        X = check_matrix(X, "text_embeddings")
        names = list(y) if y is not None else [str(i) for i in range(X.shape[0])]
        flags = list(is_base) if is_base is not None else [True] * len(names)
        self.vocabulary_ = Vocabulary(tuple(names), X, tuple(flags))
        self.classes_ = np.array(self.vocabulary_.names, dtype=object)
        self.config_ = ClassifierConfig(self.temperature, self.temperature_mode)
        if self.head is not None and self.head.out_dim != X.shape[1]:
            raise WeightsError(
                f"class head outputs {self.head.out_dim} dims, text embeddings have {X.shape[1]}"
            )
        return self

    def embed(self, Q) -> np.ndarray:
        return Q if self.head is None else class_head_forward(Q, self.head)

    def predict_proba(self, Q) -> np.ndarray:
        check_is_fitted(self, "vocabulary_")
        return classification_scores(self.embed(Q), self.vocabulary_, self.config_)

    def decision_function(self, Q) -> np.ndarray:
        check_is_fitted(self, "vocabulary_")
        return classification_logits(self.embed(Q), self.vocabulary_, self.config_)

    def predict(self, Q) -> np.ndarray:
        return self.classes_[np.argmax(self.decision_function(Q), axis=1)]
