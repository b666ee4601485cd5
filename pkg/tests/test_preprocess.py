import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from cadeval.errors import ConfigError, DegenerateInputError, InputError
from cadeval.geometry import BoundingBox, center_in_box, transform_boxes
from cadeval.preprocess import (
    OdCalibration,
    PixelImage,
    ResizeConfig,
    WindowConfig,
    isotropic_resize,
    load_image,
    mode_excluding_background,
    od_map,
    preprocess_file,
    resize_scale,
    resized_shape,
    window_rescale,
)


def img(values, bit_depth=16):
    return PixelImage(np.asarray(values, dtype=np.uint16), bit_depth)


def exact_window(p, lo, hi):
    """floor(255 * (clip(p) - lo) / (hi - lo) + 1/2) in rational arithmetic."""
    c = min(max(p, lo), hi)
    return int(Fraction(255 * (c - lo), hi - lo) + Fraction(1, 2))


class TestPixelImage:
    def test_rejects_out_of_range(self):
        with pytest.raises(InputError):
            PixelImage(np.array([[4096]], dtype=np.uint16), 12)

    def test_rejects_float(self):
        with pytest.raises(InputError):
            PixelImage(np.zeros((2, 2)), 8)


class TestMode:
    def test_constant(self):
        assert mode_excluding_background(img(np.full((4, 5), 1234))) == 1234

    def test_tie_goes_to_smallest(self):
        values = [1000] * 5 + [3000] * 9 + [2000] * 9
        assert mode_excluding_background(img([values])) == 2000

    def test_background_excluded(self):
        a = np.zeros((10, 10), dtype=np.uint16)
        a[3, 4] = 700
        assert mode_excluding_background(img(a)) == 700

    def test_all_background(self):
        with pytest.raises(DegenerateInputError):
            mode_excluding_background(img(np.full((3, 3), 50)), WindowConfig(background_threshold=50))

    @given(st.lists(st.integers(1, 40), min_size=1, max_size=60))
    def test_against_histogram_enumeration(self, values):
        counts = {v: values.count(v) for v in set(values)}
        best = max(counts.values())
        assert mode_excluding_background(img([values])) == min(v for v, c in counts.items() if c == best)


class TestWindow:
    def test_clip_endpoints(self):
        a = np.array([[2000] * 10 + [1500, 1000, 0 + 1, 2800, 3500, 65535]], dtype=np.uint16)
        out, info = window_rescale(img(a))
        assert info == {"intensity_mode": 2000, "window": [1500, 2800]}
        assert out.bit_depth == 8
        assert out.pixels[0, 10:].tolist() == [0, 0, 0, 255, 255, 255]

    def test_mode_maps_to_98(self):
        out, _ = window_rescale(img([[2000, 2000, 10]]))
        assert out.pixels[0, 0] == 98 == exact_window(2000, 1500, 2800)

    def test_every_level_matches_rational_arithmetic(self):
        levels = np.arange(1400, 2900, dtype=np.uint16)
        a = np.concatenate([np.full(2000, 2000, dtype=np.uint16), levels])[None, :]
        out, _ = window_rescale(img(a))
        got = out.pixels[0, 2000:].tolist()
        assert got == [exact_window(int(p), 1500, 2800) for p in levels]

    def test_negative_offsets_rejected(self):
        with pytest.raises(ConfigError):
            WindowConfig(lower_offset=-1)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50)
    def test_monotone(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.integers(0, 4096, size=(16, 16)).astype(np.uint16)
        out, _ = window_rescale(img(a, 12))
        order = np.argsort(a.ravel(), kind="stable")
        assert np.all(np.diff(out.pixels.ravel()[order].astype(int)) >= 0)


class TestOdMap:
    CAL = OdCalibration(slope=-1.0, intercept=4.0, od_min=0.0, od_max=4.0)

    def test_identity_span(self):
        # od runs from 4 (g=1) down to 0 (g=10^4) across this gray range
        g = np.array([[1, 10, 100, 1000, 10000]], dtype=np.uint16)
        out = od_map(img(g), self.CAL).pixels.ravel().tolist()
        assert out[0] == 255 and out[-1] == 0
        inverted = od_map(img(g), OdCalibration(-1.0, 4.0, 0.0, 4.0, invert=True)).pixels.ravel().tolist()
        assert inverted == [255 - v for v in out]

    def test_zero_treated_as_one(self):
        out = od_map(img([[0, 1]]), self.CAL).pixels
        assert out[0, 0] == out[0, 1]

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        a = img(rng.integers(0, 65536, size=(32, 32)))
        cal = OdCalibration(slope=-0.8, intercept=3.9, od_min=0.1, od_max=3.5)
        scaled = OdCalibration(slope=-1.6, intercept=7.8, od_min=0.2, od_max=7.0)
        np.testing.assert_array_equal(od_map(a, cal).pixels, od_map(a, scaled).pixels)

    def test_flat_slope_rejected(self):
        with pytest.raises(ConfigError):
            OdCalibration(slope=0.0, intercept=1.0, od_min=0.0, od_max=1.0)

    def test_empty_range_rejected(self):
        with pytest.raises(ConfigError):
            OdCalibration(slope=1.0, intercept=1.0, od_min=2.0, od_max=2.0)

    @given(st.integers(0, 2**32 - 1), st.sampled_from([-1.3, -0.5, 0.7]))
    @settings(max_examples=50)
    def test_monotone(self, seed, slope):
        rng = np.random.default_rng(seed)
        a = rng.integers(0, 65536, size=(16, 16)).astype(np.uint16)
        out = od_map(img(a), OdCalibration(slope, 2.0, 0.0, 4.0)).pixels.ravel().astype(int)
        order = np.argsort(a.ravel(), kind="stable")
        steps = np.diff(out[order])
        assert np.all(steps >= 0) if slope > 0 else np.all(steps <= 0)


class TestResize:
    @pytest.mark.parametrize(
        "w,h,expected,s",
        [
            (4000, 3000, (2100, 1575), Fraction(21, 40)),
            (1000, 800, (1000, 800), Fraction(1)),
            (3000, 3400, (1700, 1926), Fraction(17, 30)),
            (3328, 4084, (1700, 2086), Fraction(1700, 3328)),
        ],
    )
    def test_examples(self, w, h, expected, s):
        ow, oh, got_s = resized_shape(w, h)
        assert (ow, oh) == expected
        if s is not None:
            assert got_s == s

    def test_tighter_constraint_binds(self):
        s = resize_scale(3000, 3400)
        assert s == min(Fraction(2100, 3400), Fraction(1700, 3000))
        assert s == Fraction(1700, 3000)

    @given(st.integers(1, 9000), st.integers(1, 9000))
    @settings(max_examples=500)
    def test_limits_hold(self, w, h):
        ow, oh, s = resized_shape(w, h)
        assert max(ow, oh) <= 2100 and min(ow, oh) <= 1700
        assert ow <= w and oh <= h
        assert abs(ow - w * s) < 1 and abs(oh - h * s) < 1

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            ResizeConfig(1000, 2000)

    def test_pixels_area_average(self):
        a = np.array([[0, 100, 200, 200], [100, 200, 0, 0]], dtype=np.uint16)
        out, s = isotropic_resize(img(a, 8), ResizeConfig(2, 1))
        assert s == 0.5
        assert out.pixels.tolist() == [[100, 100]]

    def test_no_upscale_returns_same_image(self):
        a = img(np.ones((10, 20)))
        out, s = isotropic_resize(a)
        assert out is a and s == 1.0

    def test_box_round_trip(self):
        w, h, s = resized_shape(4000, 3000)
        b = BoundingBox(1234.0, 567.0, 2345.5, 1789.25)
        (small,) = transform_boxes([b], float(s))
        (back,) = transform_boxes([small], 1 / float(s))
        for x, y in zip(back.as_tuple(), b.as_tuple()):
            assert abs(x - y) <= 1

    @given(st.floats(0.05, 1.0))
    @settings(max_examples=200)
    def test_center_matching_survives_joint_scaling(self, s):
        d, g = BoundingBox(10, 10, 30, 50), BoundingBox(0, 0, 20, 40)
        (ds, gs) = transform_boxes([d, g], s)
        assert center_in_box(ds, gs) == center_in_box(d, g)


class TestFiles:
    def test_window_pipeline_writes_png_and_sidecar(self, tmp_path):
        rng = np.random.default_rng(1)
        a = np.full((3000, 4000), 2000, dtype=np.uint16)
        a[:, :500] = 0
        a[1000:1100] = rng.integers(0, 4096, size=(100, 4000))
        src = tmp_path / "case.png"
        Image.fromarray(a).save(src)
        meta = preprocess_file(src, tmp_path / "out", bit_depth=12)
        png = np.asarray(Image.open(tmp_path / "out" / "case.png"))
        assert png.shape == (1575, 2100) and png.dtype == np.uint8
        side = json.loads((tmp_path / "out" / "case.json").read_text())
        assert side["intensity_mode"] == 2000 and side["window"] == [1500, 2800]
        assert side["width_out"] == 2100 and side["scale"] == 0.525
        assert side["kernel"] == "pil-box-area-average"
        assert meta.height_out == 1575

    def test_od_requires_calibration(self, tmp_path):
        src = tmp_path / "x.png"
        Image.fromarray(np.ones((4, 4), dtype=np.uint16)).save(src)
        with pytest.raises(ConfigError):
            preprocess_file(src, tmp_path, method="od")

    def test_pgm_round_trip(self, tmp_path):
        a = np.arange(12, dtype=np.uint8).reshape(3, 4) + 1
        Image.fromarray(a).save(tmp_path / "x.pgm")
        loaded = load_image(tmp_path / "x.pgm")
        assert loaded.bit_depth == 8
        np.testing.assert_array_equal(loaded.pixels, a)

    def test_rejects_color(self, tmp_path):
        Image.new("RGB", (2, 2)).save(tmp_path / "c.png")
        with pytest.raises(InputError):
            load_image(tmp_path / "c.png")

    def test_calibration_from_json(self, tmp_path):
        p = tmp_path / "cal.json"
        p.write_text(json.dumps({"slope": -1, "intercept": 4, "od_min": 0, "od_max": 4, "name": "scanner-a"}))
        assert OdCalibration.from_json(p).name == "scanner-a"
        p.write_text(json.dumps({"slope": -1, "bogus": 1}))
        with pytest.raises(ConfigError):
            OdCalibration.from_json(p)
