"""Command-line entry point.

Every subcommand prints exactly one JSON summary line on stdout; diagnostics
go to stderr.  Exit codes: 0 success, 1 invalid input or usage, 2 I/O
error, 3 internal failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import dataio
from .bench import benchmark_tracking
from .classifier import ClassifierConfig
from .evaluator import EvalConfig, evaluate
from .exceptions import MemtrackError, ValidationError
from .pipeline import CLASSIFY_MODES, track_videos
from .synth import generate_fixture, load_fixture_spec, write_fixture
from .tracker import TrackerConfig

log = logging.getLogger("memtrack")

DEFAULTS = {
    "alpha": 0.7,
    "similarity": "inner",
    "gate": True,
    "mask_emit_threshold": 0.0,
    "temperature": 50.0,
    "temperature_mode": "multiply",
    "classify": "memory",
    "confidence_with_object_score": False,
    "top_k": 10,
    "export_threshold": 0.0,
    "max_dets": 100,
    "iou_thresholds": "0.50:0.05:0.95",
    "recall_points": 101,
    "ap_method": "interp",
    "jobs": None,
}
_SIMILARITY = {"inner": "inner_product", "inner_product": "inner_product", "cosine": "cosine"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def parse_thresholds(text) -> tuple:
    """``start:step:stop`` (inclusive) or a comma-separated list."""
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    text = str(text)
    try:
        if ":" in text:
            start, step, stop = (float(x) for x in text.split(":"))
            if step <= 0:
                raise ValueError("step must be positive")
            n = int(round((stop - start) / step)) + 1
            return tuple(round(start + k * step, 10) for k in range(n))
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise ValidationError(f"bad IoU thresholds {text!r}: {exc}") from None


def _add_tracking_flags(p):
    g = p.add_argument_group("tracking and classification")
    g.add_argument("--alpha", type=float, help="memory update ratio (default 0.7)")
    g.add_argument("--similarity", choices=["inner", "cosine"])
    g.add_argument("--no-gate", dest="gate", action="store_const", const=False,
                   help="ignore object scores in the memory update")
    g.add_argument("--mask-emit-threshold", type=float)
    g.add_argument("--temperature", type=float, help="default 50")
    g.add_argument("--temperature-mode", choices=["multiply", "divide"])
    g.add_argument("--classify", choices=list(CLASSIFY_MODES))
    g.add_argument("--confidence-with-object-score", action="store_const", const=True)
    g.add_argument("--top-k", type=int, help="categories exported per tracklet (default 10)")
    g.add_argument("--export-threshold", type=float)
    g.add_argument("--jobs", type=int, help="parallel videos (fallback: $MEMTRACK_JOBS)")


def _add_eval_flags(p):
    g = p.add_argument_group("evaluation")
    g.add_argument("--max-dets", type=int, help="predictions kept per video (default 100)")
    g.add_argument("--iou-thresholds", help="start:step:stop or comma list (default 0.50:0.05:0.95)")
    g.add_argument("--recall-points", type=int, help="default 101")
    g.add_argument("--ap-method", choices=["interp", "trapezoid"])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="memtrack", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON run configuration; flags override it")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-fixture", help="write a synthetic fixture from a spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("track", help="track and classify proposal files")
    p.add_argument("--proposals", nargs="+", required=True, help="proposal files or directories")
    p.add_argument("--vocab", required=True)
    p.add_argument("--head", required=True)
    p.add_argument("--out", required=True)
    _add_tracking_flags(p)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", help="write the full JSON report here")
    p.add_argument("--table", action="store_true", help="print a per-category table to stderr")
    _add_eval_flags(p)

    p = sub.add_parser("e2e", help="gen-fixture, track and evaluate in one go")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", help="working directory (default: a temporary one)")
    p.add_argument("--table", action="store_true")
    _add_tracking_flags(p)
    _add_eval_flags(p)

    p = sub.add_parser("validate", help="schema-check any memtrack file")
    p.add_argument("--file", required=True)

    p = sub.add_parser("bench", help="measure per-frame tracking overhead")
    p.add_argument("--n-queries", type=int, default=100)
    p.add_argument("--embed-dim", type=int, default=256)
    p.add_argument("--frames", type=int, default=50)
    return parser


def resolve_settings(args) -> dict:
    """Built-in defaults, then the config file, then explicit flags."""
    settings = dict(DEFAULTS)
    if args.config:
        doc = dataio.read_document(args.config)
        unknown = set(doc) - dataio.RUN_CONFIG_KEYS - {"schema"}
        if unknown:
            raise ValidationError(f"{args.config}: unknown settings {sorted(unknown)}")
        settings.update({k: v for k, v in doc.items() if k != "schema"})
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if settings["jobs"] is None:
        settings["jobs"] = int(os.environ.get("MEMTRACK_JOBS", "1") or 1)
    if settings["similarity"] not in _SIMILARITY:
        raise ValidationError(f"unknown similarity {settings['similarity']!r}")
    return settings


def _configs(s):
    tracker = TrackerConfig(
        alpha=float(s["alpha"]),
        similarity=_SIMILARITY[s["similarity"]],
        gate_with_object_score=bool(s["gate"]),
        mask_emit_threshold=float(s["mask_emit_threshold"]),
    )
    classifier = ClassifierConfig(
        temperature=float(s["temperature"]),
        temperature_mode=s["temperature_mode"],
        confidence_with_object_score=bool(s["confidence_with_object_score"]),
    )
    evaluation = EvalConfig(
        iou_thresholds=parse_thresholds(s["iou_thresholds"]),
        recall_points=int(s["recall_points"]),
        max_dets_per_video=int(s["max_dets"]),
        ap_method=s["ap_method"],
    )
    return tracker, classifier, evaluation


def _proposal_paths(items):
    paths = []
    for item in items:
        p = Path(item)
        paths.extend(sorted(p.glob("*.json")) if p.is_dir() else [p])
    if not paths:
        raise ValidationError("no proposal files found")
    return paths


def _track(proposal_paths, vocab_path, head_path, out, s):
    tracker_cfg, clf_cfg, _ = _configs(s)
    videos = [dataio.load_proposals(p) for p in proposal_paths]
    vocab = dataio.load_vocabulary(vocab_path)
    head = dataio.load_class_head(head_path)
    tracks = track_videos(videos, vocab, head, tracker_cfg, clf_cfg, s["classify"], int(s["jobs"]))
    preds = dataio.write_predictions(tracks, vocab, out, top_k=int(s["top_k"]),
                                     score_threshold=float(s["export_threshold"]), cfg=clf_cfg)
    return {"videos": len(videos), "tracklets": sum(len(t) for t in tracks.values()),
            "predictions": len(preds)}


def _evaluate(pred_path, gt_path, vocab_path, s, out=None, table=False):
    _, _, eval_cfg = _configs(s)
    gt = dataio.load_ground_truth(gt_path)
    vocab = dataio.load_vocabulary(vocab_path)
    preds = dataio.load_predictions(pred_path)
    report = evaluate(preds, gt.annotations, vocab, eval_cfg, video_ids=gt.video_ids)
    if out:
        dataio.save_report(report, out)
    if table:
        print(report.to_table(), file=sys.stderr)
    return {"mAP": report.map, "mAP_b": report.map_base, "mAP_n": report.map_novel}


def cmd_gen_fixture(args, s):
    fixture = generate_fixture(load_fixture_spec(args.spec))
    write_fixture(fixture, args.out)
    return {"out": args.out, "videos": len(fixture.videos),
            "annotations": len(fixture.ground_truth.annotations)}


def cmd_track(args, s):
    return {"out": args.out, **_track(_proposal_paths(args.proposals), args.vocab, args.head, args.out, s)}


def cmd_evaluate(args, s):
    summary = _evaluate(args.pred, args.gt, args.vocab, s, args.out, args.table)
    return {**({"out": args.out} if args.out else {}), **summary}


def cmd_e2e(args, s):
    def run(workdir):
        work = Path(workdir)
        paths = write_fixture(generate_fixture(load_fixture_spec(args.spec)), work)
        tracked = _track(paths["proposals"], paths["vocabulary"], paths["class_head"],
                         work / "predictions.json", s)
        summary = _evaluate(work / "predictions.json", paths["ground_truth"], paths["vocabulary"], s,
                            work / "report.json", args.table)
        return {**tracked, **summary}

    if args.out:
        return {"out": args.out, **run(args.out)}
    with tempfile.TemporaryDirectory(prefix="memtrack-") as tmp:
        return run(tmp)


def cmd_validate(args, s):
    return {"file": args.file, "kind": dataio.validate_file(args.file), "valid": True}


def cmd_bench(args, s):
    return benchmark_tracking(args.n_queries, args.embed_dim, args.frames)


COMMANDS = {
    "gen-fixture": cmd_gen_fixture,
    "track": cmd_track,
    "evaluate": cmd_evaluate,
    "e2e": cmd_e2e,
    "validate": cmd_validate,
    "bench": cmd_bench,
}


def _emit(summary):
    print(json.dumps(summary, sort_keys=True, default=_json_default), flush=True)


def _json_default(obj):
    if isinstance(obj, (np.integer, np.floating, np.bool_)):
        return obj.item()
    return str(obj)


def run(argv=None) -> int:
    command = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="memtrack: %(levelname)s: %(message)s", stream=sys.stderr)
        settings = resolve_settings(args)
        summary = COMMANDS[command](args, settings)
        _emit({"command": command, "status": "ok", **summary})
        return 0
    except MemtrackError as exc:
        code, message = exc.exit_code, str(exc)
    except OSError as exc:
        code, message = 2, f"{exc.filename or ''}: {exc.strerror or exc}".lstrip(": ")
    except Exception as exc:  # noqa: BLE001 - last-resort boundary of the tool
        code, message = 3, f"internal error: {exc!r}"
    print(f"memtrack: error: {message}", file=sys.stderr)
    _emit({"command": command, "status": "error", "exit_code": code, "error": message})
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
