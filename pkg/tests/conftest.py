from pathlib import Path

import numpy as np
import pytest

from memtrack.classifier import Vocabulary
from memtrack.evaluator import GtInstance, Prediction
from memtrack.mask_ops import RleMask, rle_encode
from memtrack.tracker import FrameProposals

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
DATA = Path(__file__).resolve().parent / "data"

_acceptance = []


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    notes = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    _acceptance.append((number, title, item.name, call.excinfo is None, notes))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, name, ok, notes in sorted(_acceptance):
        line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title} ({name})"
        terminalreporter.write_line(line + (f" [{notes}]" if notes else ""))


def frame(index, embeddings, scores=None, masks=None, class_scores=None, shape=(4, 4)):
    emb = np.asarray(embeddings, dtype=float)
    n = emb.shape[0]
    if scores is None:
        scores = np.ones(n)
    if masks is None:
        masks = [RleMask.empty(*shape) for _ in range(n)]
    return FrameProposals(index, emb, np.asarray(scores, dtype=float), masks, class_scores)


def box(shape, rows, cols):
    grid = np.zeros(shape, dtype=bool)
    grid[rows[0]:rows[1], cols[0]:cols[1]] = True
    return rle_encode(grid)


def random_case(rng, max_videos=5, max_frames=20, max_side=64, n_cat=3):
    """Random boxes and predictions; predictions often overlap ground truth."""
    vocab = Vocabulary(tuple(f"c{k}" for k in range(n_cat)), np.eye(n_cat),
                       tuple(k % 2 == 0 for k in range(n_cat)))
    gts, preds = [], []
    for v in range(int(rng.integers(1, max_videos + 1))):
        h, w = (int(x) for x in rng.integers(4, max_side + 1, size=2))
        t_len = int(rng.integers(1, max_frames + 1))

        def track():
            top, left = int(rng.integers(0, h)), int(rng.integers(0, w))
            bh, bw = int(rng.integers(1, h - top + 1)), int(rng.integers(1, w - left + 1))
            masks = []
            for _ in range(t_len):
                if rng.uniform() < 0.15:
                    masks.append(None)
                else:
                    dt, dl = (int(x) for x in rng.integers(-1, 2, size=2))
                    masks.append(box((h, w), (max(top + dt, 0), top + bh), (max(left + dl, 0), left + bw)))
            if all(m is None or m.area == 0 for m in masks):
                masks[0] = box((h, w), (top, top + bh), (left, left + bw))
            return masks

        for _ in range(int(rng.integers(0, 4))):
            gt_masks = track()
            cat = int(rng.integers(n_cat))
            gts.append(GtInstance(f"v{v}", cat, gt_masks))
            if rng.uniform() < 0.8:
                pred_masks = [m if rng.uniform() < 0.8 else None for m in gt_masks]
                preds.append(Prediction(f"v{v}", cat, round(float(rng.uniform()), 2), pred_masks))
        for _ in range(int(rng.integers(0, 4))):
            preds.append(Prediction(f"v{v}", int(rng.integers(n_cat)), round(float(rng.uniform()), 2), track()))
    return preds, gts, vocab, [f"v{v}" for v in range(max_videos)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
