import json

import numpy as np
import pytest

from cadeval.dataset import load_dataset
from cadeval.errors import ConfigError
from cadeval.froc import froc_curve
from cadeval.roc import roc_curve
from cadeval.scoring import score_breasts
from cadeval.synth import ScoreDist, SynthSpec, binormal_cases, operating_point_fixture, synth_generate


def test_same_seed_same_bytes(tmp_path):
    spec = SynthSpec(n_images=30, n_lesions=10, fp_rate=2.0, seed=4)
    a = synth_generate(spec, tmp_path / "a")
    b = synth_generate(spec, tmp_path / "b")
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()
    c = synth_generate(SynthSpec(n_images=30, n_lesions=10, fp_rate=2.0, seed=5), tmp_path / "c")
    assert a["detections"].read_bytes() != c["detections"].read_bytes()


def test_perfect_detector_single_point(tmp_path):
    spec = SynthSpec(n_images=20, n_lesions=8, fp_rate=0.0, tp_scores=ScoreDist("constant", 1.0), seed=1)
    paths = synth_generate(spec, tmp_path)
    c = froc_curve(load_dataset(paths["manifest"]).froc_images())
    assert [(p.fp_per_image, p.sensitivity) for p in c.points] == [(0.0, 1.0)]


@pytest.mark.parametrize("seed", range(5))
def test_truth_matches_geometric_evaluation(tmp_path, seed):
    spec = SynthSpec(n_images=40, n_lesions=15, fp_rate=1.5, detect_prob=0.8, benign_lesions=5, seed=seed)
    paths = synth_generate(spec, tmp_path)
    truth = json.loads(paths["truth"].read_text())
    ds = load_dataset(paths["manifest"])
    assert ds.dropped_benign == truth["spec"]["benign_lesions"]
    c = froc_curve(ds.froc_images())
    got = [(p.threshold, p.n_false_positives, p.n_credited) for p in c.points]
    assert got == [(q["threshold"], q["n_false_positives"], q["n_credited"]) for q in truth["froc"]]
    rows = score_breasts(ds.breasts, ds.detections_by_model())
    assert roc_curve([(s, b.label) for b, s in rows]).auc == pytest.approx(truth["generator_auc"], abs=1e-12)


def test_published_fixture_truth(tmp_path):
    paths = operating_point_fixture(tmp_path)
    truth = json.loads(paths["truth"].read_text())
    assert truth["n_images"] == 100 and truth["n_lesions"] == 50
    at = {q["threshold"]: q for q in truth["froc"]}
    assert (at[0.5]["n_false_positives"], at[0.5]["n_credited"]) == (30, 45)
    assert (at[0.1]["n_false_positives"], at[0.1]["n_credited"]) == (300, 50)


def test_spec_validation():
    with pytest.raises(ConfigError):
        SynthSpec(detect_prob=1.5)
    with pytest.raises(ConfigError):
        ScoreDist("gamma", 1, 1)
    with pytest.raises(ConfigError):
        ScoreDist("uniform", 0.8, 0.2)


def test_from_dict():
    spec = SynthSpec.from_dict({"n_images": 5, "tp_scores": {"kind": "uniform", "a": 0.2, "b": 0.4}})
    assert spec.tp_scores == ScoreDist("uniform", 0.2, 0.4)


def test_binormal_generator_auc():
    cases, auc = binormal_cases(3000, 3000, 1.0, np.random.default_rng(0))
    assert auc == pytest.approx(0.7602499389065233, abs=1e-12)
    assert roc_curve(cases).auc == pytest.approx(auc, abs=0.015)
