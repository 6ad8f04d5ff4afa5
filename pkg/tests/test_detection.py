import pytest

from spatialeval.detection import (
    BoundingBox,
    Detection,
    DetectionSet,
    PerturbationSpec,
    detection_set_from_json,
    detection_set_to_json,
    ingest_detections,
    iou,
    perturbation_tag,
    standard_perturbations,
)
from spatialeval.errors import ProtocolError


def box(x1, y1, x2, y2):
    return BoundingBox(x1, y1, x2, y2)


class TestBoundingBox:
    def test_properties(self):
        b = box(10, 20, 50, 100)
        assert b.center_x == 30
        assert b.center_y == 60
        assert b.area == 40 * 80
        assert b.as_list() == [10, 20, 50, 100]

    @pytest.mark.parametrize("coords", [(10, 10, 10, 50), (10, 10, 50, 10),
                                        (50, 10, 10, 50)])
    def test_degenerate_rejected(self, coords):
        with pytest.raises(ValueError):
            box(*coords)


def test_detection_score_bounds():
    Detection("cat", 0.0, box(0, 0, 1, 1))
    Detection("cat", 1.0, box(0, 0, 1, 1))
    with pytest.raises(ValueError):
        Detection("cat", 1.01, box(0, 0, 1, 1))
    with pytest.raises(ValueError):
        Detection("cat", -0.1, box(0, 0, 1, 1))


class TestIou:
    def test_disjoint(self):
        assert iou(box(0, 0, 10, 10), box(20, 20, 30, 30)) == 0.0

    def test_identical(self):
        assert iou(box(5, 5, 15, 25), box(5, 5, 15, 25)) == 1.0

    def test_half_overlap(self):
        # 10x10 boxes sharing a 5x10 strip: 50 / (100+100-50)
        assert iou(box(0, 0, 10, 10), box(5, 0, 15, 10)) == pytest.approx(1 / 3)

    def test_symmetric(self):
        a, b = box(0, 0, 10, 10), box(3, 4, 20, 9)
        assert iou(a, b) == iou(b, a)

    def test_touching_edges_is_zero(self):
        assert iou(box(0, 0, 10, 10), box(10, 0, 20, 10)) == 0.0


def test_perturbation_tags_round_trip():
    for spec in standard_perturbations():
        assert PerturbationSpec.from_tag(spec.tag()) == spec
    assert standard_perturbations()[0].tag() == "brightness(1.1)"
    assert perturbation_tag(None) == "none"
    with pytest.raises(ValueError):
        PerturbationSpec("sharpen", 1.0)
    with pytest.raises(ValueError):
        PerturbationSpec.from_tag("blur")


def test_standard_perturbation_set():
    tags = [p.tag() for p in standard_perturbations()]
    assert tags == ["brightness(1.1)", "brightness(0.9)", "blur(1.0)",
                    "resize(0.9)"]


class TestIngest:
    def raw(self, **overrides):
        entry = {"label": "cat", "score": 0.9, "box": [10, 10, 50, 50]}
        entry.update(overrides)
        return entry

    def test_plain(self):
        ds = ingest_detections([self.raw()], 100, 100, 0.1, "d", None)
        assert len(ds.detections) == 1
        assert ds.warnings == ()

    def test_clamps_and_warns(self):
        ds = ingest_detections([self.raw(box=[-5, 10, 50, 120])],
                               100, 100, 0.1, "d", None)
        assert ds.detections[0].box.as_list() == [0, 10, 50, 100]
        assert len(ds.warnings) == 1

    def test_drops_box_collapsed_by_clamping(self):
        ds = ingest_detections([self.raw(box=[120, 10, 150, 50])],
                               100, 100, 0.1, "d", None)
        assert ds.detections == ()
        assert any("degenerate" in w for w in ds.warnings)

    def test_score_below_declared_floor_is_protocol_error(self):
        with pytest.raises(ProtocolError):
            ingest_detections([self.raw(score=0.05)], 100, 100, 0.1, "d", None)

    def test_score_at_floor_accepted(self):
        ds = ingest_detections([self.raw(score=0.1)], 100, 100, 0.1, "d", None)
        assert len(ds.detections) == 1


def test_detection_set_json_round_trip():
    spec = standard_perturbations()[2]
    ds = DetectionSet(
        detector_id="d", backend_score_floor=0.25, width=640, height=480,
        perturbation=spec,
        detections=(Detection("cat", 0.5, box(1, 2, 3, 4)),
                    Detection("dog", 0.75, box(10, 20, 30, 40))),
    )
    data = detection_set_to_json(ds)
    back = detection_set_from_json(data, spec.tag())
    assert back == ds


def test_detection_set_requires_positive_dims():
    with pytest.raises(ValueError):
        DetectionSet(detector_id="d", backend_score_floor=0, width=0,
                     height=10, perturbation=None, detections=())
