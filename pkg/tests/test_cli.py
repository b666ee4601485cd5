import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from cadeval.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["eval-froc", "--help"])
    assert exc.value.code == 0
    assert "--fp-targets" in capsys.readouterr().out


def test_unknown_flag_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["eval-roc", "--bogus"])
    assert exc.value.code == 2


def test_single_class_scores_exit_one(tmp_path, capsys):
    p = tmp_path / "s.csv"
    p.write_text("breast_id,label,score\nP1-L,1,0.4\nP1-R,1,0.9\n")
    assert run("eval-roc", "--scores", p, "--out", tmp_path / "r") == 1
    assert "no negative" in capsys.readouterr().err


def test_bad_manifest_exit_one(tmp_path, capsys):
    p = tmp_path / "m.json"
    p.write_text("{}")
    assert run("eval-froc", "--manifest", p, "--out", tmp_path / "r") == 1
    assert "m.json" in capsys.readouterr().err


def test_pipeline(tmp_path, capsys):
    d = tmp_path / "data"
    assert run("synth", "--fixture", "published", "--out", d) == 0
    assert run("nms", "--detections", d / "detections.jsonl", "--out", d / "nms.jsonl") == 0
    assert run("aggregate", "--manifest", d / "manifest.json", "--detections", d / "nms.jsonl",
               "--no-nms", "--out", d / "breast.csv", "--image-scores", d / "image.csv") == 0
    assert run("eval-roc", "--scores", d / "breast.csv", "--bootstrap", 500, "--out", tmp_path / "roc") == 0
    assert run("eval-froc", "--manifest", d / "manifest.json", "--bootstrap", 500, "--out", tmp_path / "froc") == 0
    out = capsys.readouterr().out
    assert "sensitivity 0.9000 at <= 0.3 FP/image (threshold 0.5)" in out
    assert "sensitivity 1.0000 at <= 3 FP/image (threshold 0.1)" in out
    s = json.loads((tmp_path / "froc" / "froc_summary.json").read_text())
    assert s["config"]["nms_iou"] == 0.1 and s["replicates"] == 500
    assert (tmp_path / "roc" / "roc.svg").exists()


def test_bootstrap_disabled(tmp_path, capsys):
    d = tmp_path / "data"
    run("synth", "--n-images", 20, "--n-lesions", 5, "--out", d)
    assert run("eval-roc", "--manifest", d / "manifest.json", "--bootstrap", 0, "--out", tmp_path / "r") == 0
    s = json.loads((tmp_path / "r" / "roc_summary.json").read_text())
    assert s["lo"] is None and s["replicates"] == 0


def test_synth_spec_file(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_images": 10, "n_lesions": 3, "fp_scores": {"kind": "uniform", "a": 0.1, "b": 0.2}}))
    assert run("synth", "--spec", spec, "--out", tmp_path / "d") == 0
    spec.write_text(json.dumps({"n_images": 10, "wrong": 1}))
    assert run("synth", "--spec", spec, "--out", tmp_path / "e") == 1


def test_preprocess(tmp_path):
    a = np.full((300, 400), 2000, dtype=np.uint16)
    Image.fromarray(a).save(tmp_path / "m.png")
    assert run("preprocess", tmp_path / "m.png", "--out", tmp_path / "o", "--max-long", 210, "--max-short", 170) == 0
    side = json.loads((tmp_path / "o" / "m.json").read_text())
    assert (side["width_out"], side["height_out"]) == (210, 157)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "cadeval", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "cadeval" in r.stdout
