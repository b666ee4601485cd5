import json

import pytest

from cadeval.errors import DatasetError, InputError
from cadeval.dataset import (
    load_dataset,
    read_breast_scores,
    read_detections,
    write_breast_scores,
    write_detections,
)
from cadeval.geometry import BoundingBox, Detection
from cadeval.scoring import BreastCase, score_breasts


def manifest(**overrides):
    data = {
        "format_version": 1,
        "images": [
            {"image_id": "a-cc", "breast_id": "P1-L", "view": "CC", "width": 100, "height": 100,
             "annotations": [{"lesion_id": "l1", "class": "malignant", "x_min": 10, "y_min": 10, "x_max": 30, "y_max": 30},
                             {"lesion_id": "b1", "class": "benign", "x_min": 60, "y_min": 60, "x_max": 70, "y_max": 70}]},
            {"image_id": "a-mlo", "breast_id": "P1-L", "view": "MLO", "width": 100, "height": 100},
            {"image_id": "b-cc", "breast_id": "P1-R", "view": "CC", "width": 100, "height": 100},
        ],
        "breasts": [
            {"breast_id": "P1-L", "image_ids": ["a-cc", "a-mlo"], "label": 1},
            {"breast_id": "P1-R", "image_ids": ["b-cc"], "label": 0},
        ],
    }
    data.update(overrides)
    return data


def write(tmp_path, data, dets=None):
    if dets is not None:
        (tmp_path / "dets.jsonl").write_text("".join(json.dumps(r) + "\n" for r in dets))
        data.setdefault("detections", [{"path": "dets.jsonl", "model_id": "m"}])
    p = tmp_path / "manifest.json"
    p.write_text(json.dumps(data))
    return p


def rec(image_id, score, box=(12, 12, 18, 18), cls="malignant", **kw):
    return {"image_id": image_id, **dict(zip(("x_min", "y_min", "x_max", "y_max"), box)), "score": score, "class": cls, **kw}


class TestLoad:
    def test_basic(self, tmp_path):
        ds = load_dataset(write(tmp_path, manifest(), [rec("a-cc", 0.9), rec("b-cc", 0.2)]))
        assert ds.n_lesions == 1 and ds.dropped_benign == 1
        assert [b.breast_id for b in ds.breasts] == ["P1-L", "P1-R"]
        assert ds.models == ["m"]
        scores = dict((b.breast_id, s) for b, s in score_breasts(ds.breasts, ds.detections_by_model()))
        assert scores == {"P1-L": 0.45, "P1-R": 0.2}

    def test_no_detections_scores_zero(self, tmp_path):
        ds = load_dataset(write(tmp_path, manifest(), []))
        assert all(s == 0.0 for _, s in score_breasts(ds.breasts, ds.detections_by_model()))

    def test_unknown_image_in_detections_names_row(self, tmp_path):
        with pytest.raises(DatasetError, match=r"dets\.jsonl:2.*'ghost'"):
            load_dataset(write(tmp_path, manifest(), [rec("a-cc", 0.9), rec("ghost", 0.5)]))

    def test_malignant_lesion_needs_positive_label(self, tmp_path):
        data = manifest()
        data["breasts"][0]["label"] = 0
        with pytest.raises(DatasetError, match=r"breasts\[0\]"):
            load_dataset(write(tmp_path, data))

    def test_duplicate_lesion_id(self, tmp_path):
        data = manifest()
        data["images"][1]["annotations"] = [
            {"lesion_id": "l1", "class": "malignant", "x_min": 0, "y_min": 0, "x_max": 5, "y_max": 5}
        ]
        with pytest.raises(DatasetError, match="duplicate lesion_id 'l1'"):
            load_dataset(write(tmp_path, data))

    def test_schema_error_is_located(self, tmp_path):
        data = manifest()
        data["images"][2]["width"] = 0
        with pytest.raises(DatasetError, match=r"images\[2\]\.width"):
            load_dataset(write(tmp_path, data))

    def test_degenerate_box(self, tmp_path):
        data = manifest()
        data["images"][0]["annotations"][0]["x_max"] = 10
        with pytest.raises(DatasetError, match=r"annotations\[0\]"):
            load_dataset(write(tmp_path, data))

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "manifest.json"
        p.write_text('{"format_version": 1,\n "images": [}')
        with pytest.raises(DatasetError, match="manifest.json:2"):
            load_dataset(p)

    def test_malformed_detection_line(self, tmp_path):
        p = write(tmp_path, manifest(), [rec("a-cc", 0.9)])
        with open(tmp_path / "dets.jsonl", "a") as fh:
            fh.write("{oops\n")
        with pytest.raises(DatasetError, match=r"dets\.jsonl:2"):
            load_dataset(p)

    def test_score_out_of_range(self, tmp_path):
        with pytest.raises(DatasetError, match="dets.jsonl:1"):
            load_dataset(write(tmp_path, manifest(), [rec("a-cc", 1.5)]))

    def test_dangling_breast(self, tmp_path):
        data = manifest()
        data["images"][2]["breast_id"] = "P9-R"
        with pytest.raises(DatasetError, match="unknown breast_id"):
            load_dataset(write(tmp_path, data))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(tmp_path / "nope.json")

    def test_model_mismatch(self, tmp_path):
        with pytest.raises(DatasetError, match="disagrees"):
            load_dataset(write(tmp_path, manifest(), [rec("a-cc", 0.9, model_id="other")]))


class TestExclusions:
    def test_image_exclusion_drops_detections(self, tmp_path):
        data = manifest(exclusions={"image_ids": ["b-cc"]})
        ds = load_dataset(write(tmp_path, data, [rec("a-cc", 0.9), rec("b-cc", 0.2)]))
        assert "b-cc" not in ds.images
        assert [b.breast_id for b in ds.breasts] == ["P1-L"]
        assert ds.dropped_detections == 1 and ds.excluded_images == 1

    def test_breast_exclusion(self, tmp_path):
        data = manifest(exclusions={"breast_ids": ["P1-L"]})
        ds = load_dataset(write(tmp_path, data, []))
        assert set(ds.images) == {"b-cc"} and ds.n_lesions == 0

    def test_unknown_exclusion(self, tmp_path):
        with pytest.raises(DatasetError, match="does not exist"):
            load_dataset(write(tmp_path, manifest(exclusions={"image_ids": ["zz"]})))


class TestFrocImages:
    def test_several_models_need_choice(self, tmp_path):
        data = manifest(detections=[{"path": "dets.jsonl"}])
        ds = load_dataset(write(tmp_path, data, [rec("a-cc", 0.9, model_id="m1"), rec("a-cc", 0.8, model_id="m2")]))
        assert ds.models == ["m1", "m2"]
        with pytest.raises(InputError):
            ds.froc_images()
        images = ds.froc_images("m2")
        assert [d.score for im in images for d in im.detections] == [0.8]

    def test_nms_applied(self, tmp_path):
        ds = load_dataset(write(tmp_path, manifest(), [rec("a-cc", 0.9), rec("a-cc", 0.5)]))
        assert len(ds.froc_images()[0].detections) == 1
        assert len(ds.froc_images(nms_cfg=None)[0].detections) == 2


class TestRoundTrips:
    def test_detections(self, tmp_path):
        dets = [
            Detection(BoundingBox(0.1, 0.2, 10.3, 7.7), 0.123456789, "malignant", "x", "m"),
            Detection(BoundingBox(1, 2, 3, 4), 1.0, "benign", "y", "m"),
        ]
        write_detections(dets, tmp_path / "d.jsonl")
        assert read_detections(tmp_path / "d.jsonl") == dets

    def test_version_header(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"format_version": 2}\n')
        with pytest.raises(DatasetError, match="format_version"):
            read_detections(p)

    def test_breast_scores(self, tmp_path):
        rows = [(BreastCase("P1-L", ("a",), 1), 0.1 + 0.2), (BreastCase("P1-R", ("b",), 0), 0.0)]
        write_breast_scores(rows, tmp_path / "s.csv")
        assert read_breast_scores(tmp_path / "s.csv") == [("P1-L", 0.1 + 0.2, 1), ("P1-R", 0.0, 0)]

    def test_bad_score_row(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("breast_id,label,score\nP1-L,1,abc\n")
        with pytest.raises(DatasetError, match="s.csv:2"):
            read_breast_scores(p)
