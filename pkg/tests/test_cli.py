import json
import subprocess
import sys

import pytest

from memtrack.cli import parse_thresholds, run

from conftest import DATA, FIXTURES

GOLDEN = DATA / "golden"
GOLDEN_MAP = {"mAP": 0.9250825082508252, "mAP_b": 0.9334983498349835, "mAP_n": 0.9166666666666666}


def call(capsys, *argv):
    code = run([str(a) for a in argv])
    out, err = capsys.readouterr()
    lines = out.strip().splitlines()
    assert len(lines) == 1
    return code, json.loads(lines[0]), err


def test_e2e_noiseless(capsys, tmp_path):
    code, summary, _ = call(capsys, "e2e", "--spec", FIXTURES / "noiseless.json", "--out", tmp_path)
    assert code == 0 and summary["status"] == "ok"
    assert summary["mAP"] == 1.0 and summary["mAP_b"] == 1.0 and summary["mAP_n"] == 1.0
    assert (tmp_path / "predictions.json").exists() and (tmp_path / "report.json").exists()


def test_evaluate_golden(capsys, tmp_path):
    code, summary, _ = call(capsys, "evaluate", "--pred", GOLDEN / "golden_preds.json",
                            "--gt", GOLDEN / "golden_gt.json", "--vocab", GOLDEN / "v.json",
                            "--out", tmp_path / "r.json")
    assert code == 0
    for key, value in GOLDEN_MAP.items():
        assert abs(summary[key] - value) <= 1e-6
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["mAP"] == summary["mAP"]


def test_track_then_evaluate_matches_e2e(capsys, tmp_path):
    call(capsys, "gen-fixture", "--spec", FIXTURES / "seed42.json", "--out", tmp_path)
    code, tracked, _ = call(capsys, "track", "--proposals", tmp_path / "proposals", "--vocab",
                            tmp_path / "vocab.json", "--head", tmp_path / "head.json",
                            "--out", tmp_path / "p.json")
    assert code == 0 and tracked["videos"] == 3
    _, summary, _ = call(capsys, "evaluate", "--pred", tmp_path / "p.json", "--gt", tmp_path / "gt.json",
                         "--vocab", tmp_path / "vocab.json")
    _, e2e, _ = call(capsys, "e2e", "--spec", FIXTURES / "seed42.json")
    assert summary["mAP"] == e2e["mAP"] == GOLDEN_MAP["mAP"]
    assert (tmp_path / "p.json").read_bytes() == (GOLDEN / "golden_preds.json").read_bytes()


def test_summary_line_is_deterministic(capsys):
    first = call(capsys, "e2e", "--spec", FIXTURES / "seed42.json")[1]
    second = call(capsys, "e2e", "--spec", FIXTURES / "seed42.json", "--jobs", 3)[1]
    assert first == second


def test_validate_broken_proposals_names_frame(capsys, tmp_path):
    call(capsys, "gen-fixture", "--spec", FIXTURES / "noiseless.json", "--out", tmp_path)
    path = tmp_path / "proposals" / "video_0.json"
    doc = json.loads(path.read_text())
    doc["frames"][4]["object_scores"] = doc["frames"][4]["object_scores"][:-1]
    path.write_text(json.dumps(doc))
    code, summary, err = call(capsys, "validate", "--file", path)
    assert code == 1 and summary["status"] == "error"
    assert "frame 4" in err and "frame 4" in summary["error"]


def test_validate_good_file(capsys):
    code, summary, _ = call(capsys, "validate", "--file", GOLDEN / "golden_gt.json")
    assert code == 0 and summary["kind"] == "ground_truth"


def test_missing_file_exit_2(capsys, tmp_path):
    code, summary, err = call(capsys, "validate", "--file", tmp_path / "nope.json")
    assert code == 2 and "nope.json" in err


def test_usage_error_exit_1(capsys):
    code, summary, _ = call(capsys, "evaluate", "--pred", "x.json")
    assert code == 1 and summary["status"] == "error"


def test_config_precedence(capsys, tmp_path):
    base = ["evaluate", "--pred", GOLDEN / "golden_preds.json", "--gt", GOLDEN / "golden_gt.json",
            "--vocab", GOLDEN / "v.json"]
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"schema": "memtrack/1", "iou_thresholds": [0.99]}))
    strict = call(capsys, "--config", cfg, *base)[1]
    assert strict["mAP"] < GOLDEN_MAP["mAP"]
    override = call(capsys, "--config", cfg, *base, "--iou-thresholds", "0.50:0.05:0.95")[1]
    assert override["mAP"] == GOLDEN_MAP["mAP"]
    cfg.write_text(json.dumps({"schema": "memtrack/1", "bogus": 1}))
    assert call(capsys, "--config", cfg, *base)[0] == 1


def test_jobs_env_fallback(capsys, monkeypatch):
    monkeypatch.setenv("MEMTRACK_JOBS", "2")
    code, summary, _ = call(capsys, "e2e", "--spec", FIXTURES / "noiseless.json")
    assert code == 0 and summary["mAP"] == 1.0


@pytest.mark.parametrize("text, expected", [
    ("0.50:0.05:0.95", (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)),
    ("0.5,0.75", (0.5, 0.75)),
    ("0.5:0.25:1.0", (0.5, 0.75, 1.0)),
])
def test_parse_thresholds(text, expected):
    assert parse_thresholds(text) == expected


def test_console_script_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "memtrack.cli", "validate", "--file", str(tmp_path / "x")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stdout)["status"] == "error"
