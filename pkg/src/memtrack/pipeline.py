"""Track, classify and export a set of videos."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

from .classifier import ClassHead, ClassifierConfig, Vocabulary, classify_average, classify_tracks
from .dataio import VideoProposalFile, predictions_from_tracklets
from .evaluator import EvalConfig, EvalReport, evaluate
from .exceptions import ValidationError
from .tracker import TrackerConfig, track_video

CLASSIFY_MODES = ("memory", "average")


def track_and_classify(video: VideoProposalFile, vocab: Vocabulary, head: ClassHead,
                       tracker_cfg: TrackerConfig = TrackerConfig(),
                       classifier_cfg: ClassifierConfig = ClassifierConfig(),
                       classify: str = "memory"):
    tracklets, bank = track_video(video.frames, tracker_cfg)
    if classify == "memory":
        return classify_tracks(bank, tracklets, head, vocab, classifier_cfg)
    if classify == "average":
        return classify_average(video.frames, tracklets)
    raise ValidationError(f"classify must be one of {CLASSIFY_MODES}, got {classify!r}")


def track_videos(videos: Sequence[VideoProposalFile], vocab, head,
                 tracker_cfg=TrackerConfig(), classifier_cfg=ClassifierConfig(),
                 classify="memory", jobs: int = 1) -> dict:
    """Tracklets per video id.  Videos are independent, so they may run in parallel."""
    ids = [v.video_id for v in videos]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate video ids among proposal files")

    def one(video):
        return track_and_classify(video, vocab, head, tracker_cfg, classifier_cfg, classify)

    if jobs > 1 and len(videos) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, videos))
    else:
        results = [one(v) for v in videos]
    return dict(zip(ids, results))


def run_pipeline(videos, vocab, head, gt, tracker_cfg=TrackerConfig(),
                 classifier_cfg=ClassifierConfig(), eval_cfg=EvalConfig(),
                 classify="memory", top_k=10, jobs=1) -> tuple[list, EvalReport]:
    tracks = track_videos(videos, vocab, head, tracker_cfg, classifier_cfg, classify, jobs)
    preds = predictions_from_tracklets(tracks, vocab, top_k=top_k, cfg=classifier_cfg)
    report = evaluate(preds, gt.annotations, vocab, eval_cfg, video_ids=gt.video_ids)
    return preds, report
