import numpy as np
import pytest
from PIL import Image

from detector_adapter.perturb import (
    NO_SCALE,
    apply_perturbation,
    map_box_to_original,
)


def gray(size=64, level=100):
    return Image.new("RGB", (size, size), (level, level, level))


class TestBrightness:
    def test_scales_pixel_values(self):
        out, scale = apply_perturbation(gray(level=100), "brightness", 1.1)
        assert scale == NO_SCALE
        assert out.size == (64, 64)
        mean = np.asarray(out, dtype=np.float64).mean()
        assert mean == pytest.approx(110, abs=1)

    def test_darkens_below_one(self):
        out, _ = apply_perturbation(gray(level=100), "brightness", 0.9)
        assert np.asarray(out).mean() == pytest.approx(90, abs=1)


class TestBlur:
    def test_spreads_a_point(self):
        img = Image.new("RGB", (33, 33), (0, 0, 0))
        img.putpixel((16, 16), (255, 255, 255))
        out, scale = apply_perturbation(img, "blur", 1.0)
        assert scale == NO_SCALE
        assert out.size == (33, 33)
        arr = np.asarray(out, dtype=np.float64)[..., 0]
        assert arr[16, 16] < 255
        assert arr[16, 17] > 0


class TestResize:
    def test_realized_scale_reported(self):
        out, scale = apply_perturbation(gray(size=512), "resize", 0.9)
        assert out.size == (461, 461)  # round(512 * 0.9)
        assert scale == (461 / 512, 461 / 512)

    def test_upscale(self):
        out, scale = apply_perturbation(gray(size=64), "resize", 1.5)
        assert out.size == (96, 96)
        assert scale == (1.5, 1.5)

    def test_never_collapses_to_zero(self):
        out, scale = apply_perturbation(gray(size=3), "resize", 0.1)
        assert out.size == (1, 1)
        assert scale == (1 / 3, 1 / 3)

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError, match="positive"):
            apply_perturbation(gray(), "resize", 0.0)
        with pytest.raises(ValueError, match="positive"):
            apply_perturbation(gray(), "resize", -1.0)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="unknown perturbation"):
        apply_perturbation(gray(), "sharpen", 1.0)


class TestBoxMapping:
    def test_divides_by_per_axis_scale(self):
        box = map_box_to_original([45.0, 90.0, 90.0, 180.0], (0.5, 0.75))
        assert box == [90.0, 120.0, 180.0, 240.0]

    def test_round_trip_within_half_pixel(self):
        # known original box, pushed into the resized frame and back
        original = [100.0, 120.0, 220.0, 260.0]
        _, scale = apply_perturbation(gray(size=512), "resize", 0.9)
        sx, sy = scale
        resized_frame = [original[0] * sx, original[1] * sy,
                         original[2] * sx, original[3] * sy]
        back = map_box_to_original(resized_frame, scale)
        assert max(abs(b - o) for b, o in zip(back, original)) < 0.5
