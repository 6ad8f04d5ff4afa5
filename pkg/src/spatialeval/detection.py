"""Detection-side domain types and bounding-box geometry.

Coordinates are absolute pixels, origin top-left, y growing downward.
Boxes arriving from a backend are clamped to the image rectangle on
ingestion; clamping and dropped-degenerate events are kept as warnings so
they can surface in run provenance.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box: {self.as_list()}")

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def center_x(self) -> float:
        return (self.x1 + self.x2) / 2.0

    @property
    def center_y(self) -> float:
        return (self.y1 + self.y2) / 2.0

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class Detection:
    label: str
    score: float
    box: BoundingBox

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score out of range: {self.score}")


# The standard perturbation set used for stability probing.
PERTURBATION_KINDS = ("brightness", "blur", "resize")


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ValueError(f"unknown perturbation kind: {self.kind}")

    def tag(self) -> str:
        return f"{self.kind}({self.param})"

    def as_wire(self) -> dict:
        return {"kind": self.kind, "param": self.param}

    @classmethod
    def from_tag(cls, tag: str) -> "PerturbationSpec":
        kind, _, rest = tag.partition("(")
        if not rest.endswith(")"):
            raise ValueError(f"bad perturbation tag: {tag}")
        return cls(kind=kind, param=float(rest[:-1]))


def standard_perturbations() -> tuple[PerturbationSpec, ...]:
    return (
        PerturbationSpec("brightness", 1.1),
        PerturbationSpec("brightness", 0.9),
        PerturbationSpec("blur", 1.0),
        PerturbationSpec("resize", 0.9),
    )


BASE_TAG = "none"


def perturbation_tag(spec: PerturbationSpec | None) -> str:
    return BASE_TAG if spec is None else spec.tag()


@dataclass(frozen=True)
class DetectionSet:
    """All detections one backend reported for one (possibly perturbed) image."""

    detector_id: str
    backend_score_floor: float
    width: float
    height: float
    perturbation: PerturbationSpec | None
    detections: tuple[Detection, ...]
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")

    def tag(self) -> str:
        return perturbation_tag(self.perturbation)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0 when interiors are disjoint."""
    if a.area <= 0 or b.area <= 0:
        raise ValueError("iou undefined for zero-area boxes")
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


def ingest_detections(
    raw: list[dict],
    width: float,
    height: float,
    backend_score_floor: float,
    detector_id: str,
    perturbation: PerturbationSpec | None,
) -> DetectionSet:
    """Build a DetectionSet from raw response entries.

    Out-of-range coordinates are clamped to [0, W] x [0, H] with a warning;
    boxes that collapse to zero size after clamping are dropped. A score
    below the backend's declared floor violates the protocol contract.
    """
    from .errors import ProtocolError

    detections: list[Detection] = []
    warnings: list[str] = []
    for i, entry in enumerate(raw):
        label = entry["label"]
        score = float(entry["score"])
        if score < backend_score_floor:
            raise ProtocolError(
                f"detection {i} ({label!r}) score {score} below declared "
                f"floor {backend_score_floor}",
                detector_id=detector_id,
            )
        x1, y1, x2, y2 = (float(v) for v in entry["box"])
        cx1 = min(max(x1, 0.0), width)
        cy1 = min(max(y1, 0.0), height)
        cx2 = min(max(x2, 0.0), width)
        cy2 = min(max(y2, 0.0), height)
        if (cx1, cy1, cx2, cy2) != (x1, y1, x2, y2):
            warnings.append(
                f"clamped box for {label!r}: "
                f"[{x1},{y1},{x2},{y2}] -> [{cx1},{cy1},{cx2},{cy2}]"
            )
        if not (cx1 < cx2 and cy1 < cy2):
            warnings.append(f"dropped degenerate box for {label!r} after clamping")
            continue
        detections.append(Detection(label, score, BoundingBox(cx1, cy1, cx2, cy2)))
    return DetectionSet(
        detector_id=detector_id,
        backend_score_floor=backend_score_floor,
        width=width,
        height=height,
        perturbation=perturbation,
        detections=tuple(detections),
        warnings=tuple(warnings),
    )


def detection_set_to_json(ds: DetectionSet) -> dict:
    """Cache serialization (perturbation identity lives in the cache key)."""
    return {
        "detector_id": ds.detector_id,
        "score_floor": ds.backend_score_floor,
        "width": ds.width,
        "height": ds.height,
        "detections": [
            {"label": d.label, "score": d.score, "box": d.box.as_list()}
            for d in ds.detections
        ],
    }


def detection_set_from_json(data: dict, tag: str) -> DetectionSet:
    spec = None if tag == BASE_TAG else PerturbationSpec.from_tag(tag)
    return DetectionSet(
        detector_id=data["detector_id"],
        backend_score_floor=float(data["score_floor"]),
        width=float(data["width"]),
        height=float(data["height"]),
        perturbation=spec,
        detections=tuple(
            Detection(d["label"], float(d["score"]),
                      BoundingBox(*[float(v) for v in d["box"]]))
            for d in data["detections"]
        ),
    )
