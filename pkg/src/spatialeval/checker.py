"""Abstaining spatial-relation checker with decomposed confidence.

The pipeline for one sample: select one instance per queried object,
gate horizontal relations on box overlap, decide the relation from the
signed normalized center delta, test the decision's stability under
image perturbations, then assemble a weighted geometric-mean confidence
from detection, geometry, stability, and cross-detector agreement.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field

import yaml

from .detection import BASE_TAG, Detection, DetectionSet, PerturbationSpec, \
    iou, standard_perturbations
from .errors import ValidationError
from .prompts import AXIS_GROUP, RELATIONS

PASS = "PASS"
FAIL = "FAIL"
UNDECIDABLE = "UNDECIDABLE"

REASONS = ("missing", "ambiguous", "high_overlap", "near_boundary", "unstable")

SECONDARY_FAILURE = "BACKEND_FAILURE"

# Comparison conventions, baked into the config digest so any future
# flip of strict vs inclusive shows up as a different configuration.
_RULE_NOTES = {
    "rule_near_boundary": "abs_delta_lte_margin",
    "rule_high_overlap": "iou_gt_threshold",
    "rule_unstable": "stability_lt_threshold",
}


@dataclass(frozen=True)
class CheckerConfig:
    """Operating point of the checker.

    All thresholds are plain floats; the geometry margin and slope are in
    normalized (width/height-relative) units.
    """

    t_det: float = 0.2
    min_area_fraction: float = 0.005
    ambiguity_delta: float = 0.1
    max_overlap_iou: float = 0.5
    margin: float = 0.1
    consistency_threshold: float = 0.5
    geom_slope: float = 0.15
    weight_det: float = 0.4
    weight_geom: float = 0.3
    weight_stab: float = 0.2
    weight_agree: float = 0.1
    epsilon: float = 1e-6
    perturbations: tuple[PerturbationSpec, ...] = field(
        default_factory=standard_perturbations)

    def __post_init__(self):
        unit = [("t_det", self.t_det),
                ("min_area_fraction", self.min_area_fraction),
                ("max_overlap_iou", self.max_overlap_iou),
                ("consistency_threshold", self.consistency_threshold)]
        for name, value in unit:
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must be in [0,1], got {value}")
        nonneg = [("ambiguity_delta", self.ambiguity_delta),
                  ("margin", self.margin), ("geom_slope", self.geom_slope),
                  ("weight_det", self.weight_det),
                  ("weight_geom", self.weight_geom),
                  ("weight_stab", self.weight_stab),
                  ("weight_agree", self.weight_agree)]
        for name, value in nonneg:
            if value < 0.0:
                raise ValidationError(f"{name} must be >= 0, got {value}")
        if self.epsilon <= 0.0:
            raise ValidationError("epsilon must be > 0")
        total = (self.weight_det + self.weight_geom + self.weight_stab
                 + self.weight_agree)
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"weights must sum to 1, got {total!r}")

    @property
    def weights(self) -> tuple[float, float, float, float]:
        return (self.weight_det, self.weight_geom, self.weight_stab,
                self.weight_agree)

    def with_params(self, **changes) -> "CheckerConfig":
        """Variant config for grid search (e.g. margin=0.05, t_det=0.3)."""
        return dataclasses.replace(self, **changes)

    def as_flat_dict(self) -> dict:
        out = {f.name: getattr(self, f.name)
               for f in dataclasses.fields(self) if f.name != "perturbations"}
        out["perturbations"] = [p.tag() for p in self.perturbations]
        out.update(_RULE_NOTES)
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.as_flat_dict(), sort_keys=True,
                              default_flow_style=False)

    def digest(self) -> str:
        return hashlib.sha256(self.to_yaml().encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "CheckerConfig":
        kwargs = dict(data)
        for key in _RULE_NOTES:
            kwargs.pop(key, None)
        tags = kwargs.pop("perturbations", None)
        if tags is not None:
            kwargs["perturbations"] = tuple(
                PerturbationSpec.from_tag(t) for t in tags)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(kwargs) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "CheckerConfig":
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: expected a mapping")
        return cls.from_dict(data)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_yaml())


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------

SELECTED = "selected"
MISSING = "missing"
AMBIGUOUS = "ambiguous"


@dataclass(frozen=True)
class Selection:
    status: str
    detection: Detection | None = None
    survivors: int = 0


def select_instance(det_set: DetectionSet, label: str,
                    config: CheckerConfig) -> Selection:
    """Pick the single instance a query label refers to, or abstain.

    Survivors must match the label (case-insensitive), clear the effective
    score cutoff max(t_det, backend floor), and cover at least
    min_area_fraction of the image. No survivor reads as a missing object;
    a top-two score gap under ambiguity_delta reads as an ambiguous
    referent.
    """
    cutoff = max(config.t_det, det_set.backend_score_floor)
    min_area = config.min_area_fraction * det_set.width * det_set.height
    wanted = label.lower()
    survivors = [d for d in det_set.detections
                 if d.label.lower() == wanted and d.score >= cutoff
                 and d.box.area >= min_area]
    if not survivors:
        return Selection(MISSING, survivors=0)
    ranked = sorted(survivors, key=lambda d: -d.score)
    if len(ranked) > 1 and (ranked[0].score - ranked[1].score) < config.ambiguity_delta:
        return Selection(AMBIGUOUS, survivors=len(survivors))
    return Selection(SELECTED, detection=ranked[0], survivors=len(survivors))


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def relation_delta(box_a, box_b, relation: str, width: float,
                   height: float) -> float:
    """Signed normalized center offset along the relation's axis.

    Horizontal relations use (cx_A - cx_B)/W; vertical use (cy_A - cy_B)/H.
    The y axis grows downward, so "above" expects a negative value.
    """
    if width <= 0 or height <= 0:
        raise ValidationError(f"bad image size {width}x{height}")
    if AXIS_GROUP[relation] == "horizontal":
        return (box_a.center_x - box_b.center_x) / width
    return (box_a.center_y - box_b.center_y) / height


NEAR_BOUNDARY = "near_boundary"

# Relations satisfied by a negative delta (A strictly before B along the
# axis): left_of on x, above on y (y grows downward).
_NEGATIVE_RELATIONS = frozenset({"left_of", "above"})


def decide_geometry(delta: float, relation: str, margin: float) -> str:
    """PASS/FAIL outside the margin band, near_boundary inside it."""
    if abs(delta) <= margin:
        return NEAR_BOUNDARY
    if relation in _NEGATIVE_RELATIONS:
        return PASS if delta < -margin else FAIL
    return PASS if delta > margin else FAIL


def overlap_gate(box_a, box_b, relation: str, max_overlap_iou: float) -> bool:
    """True when the sample must abstain for heavy overlap.

    Only horizontal relations are gated: center ordering on x is what
    heavy overlap corrupts, while stacked objects overlap naturally.
    """
    if AXIS_GROUP[relation] != "horizontal":
        return False
    return iou(box_a, box_b) > max_overlap_iou


# ---------------------------------------------------------------------------
# Stability and confidence
# ---------------------------------------------------------------------------

def stability_score(base_verdict: str, perturbed_verdicts: list[str]) -> float:
    """Fraction of perturbation re-runs agreeing with the base verdict.

    Abstentions count as disagreement. No perturbations means nothing
    contradicts the base run, so the score is 1.
    """
    if not perturbed_verdicts:
        return 1.0
    agree = sum(1 for v in perturbed_verdicts if v == base_verdict)
    return agree / len(perturbed_verdicts)


def detection_confidence(score_a: float, score_b: float) -> float:
    return math.sqrt(score_a * score_b)


def geometry_confidence(delta: float, margin: float, slope: float) -> float:
    """clip((|d| - m) / slope, 0, 1); ramps from the margin edge up."""
    if slope <= 0:
        return 1.0 if abs(delta) > margin else 0.0
    return min(1.0, max(0.0, (abs(delta) - margin) / slope))


def combine_confidence(det: float, geom: float, stab: float, agree: float,
                       config: CheckerConfig) -> float:
    """Weighted geometric mean of the four components, clipped to [0,1]."""
    comps = (det, geom, stab, agree)
    eps = config.epsilon
    log_sum = sum(w * math.log(c + eps)
                  for w, c in zip(config.weights, comps))
    return min(1.0, max(0.0, math.exp(log_sum)))


@dataclass(frozen=True)
class ConfidenceBreakdown:
    det: float
    geom: float
    stab: float
    agree: float
    overall: float

    @classmethod
    def zero(cls) -> "ConfidenceBreakdown":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# Whole-sample check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleRef:
    sample_id: str
    prompt_id: str
    method: str
    seed: int
    image: str


@dataclass(frozen=True)
class DetectionBundle:
    """Everything detector-side for one sample, keyed by perturbation tag.

    `secondary` is None when the secondary backend failed; the failure
    message lives in `secondary_error`. check_bundle is a pure function of
    this value plus the config, which is what lets calibration re-run the
    checker from cached detections without touching images or backends.
    """

    sample: SampleRef
    object_a: str
    object_b: str
    relation: str
    primary: dict[str, DetectionSet]
    secondary: DetectionSet | None = None
    secondary_error: str | None = None

    def base(self) -> DetectionSet:
        return self.primary[BASE_TAG]


@dataclass(frozen=True)
class CheckOutcome:
    sample: SampleRef
    relation: str
    verdict: str
    reason: str | None
    delta: float | None
    box_a: Detection | None
    box_b: Detection | None
    confidence: ConfidenceBreakdown
    perturbation_verdicts: dict[str, str]
    secondary_verdict: str | None
    config_digest: str

    def as_dict(self) -> dict:
        def det_json(d: Detection | None):
            if d is None:
                return None
            return {"label": d.label, "score": d.score,
                    "box": [d.box.x1, d.box.y1, d.box.x2, d.box.y2]}

        return {
            "sample_id": self.sample.sample_id,
            "prompt_id": self.sample.prompt_id,
            "method": self.sample.method,
            "seed": self.sample.seed,
            "image": self.sample.image,
            "relation": self.relation,
            "verdict": self.verdict,
            "reason": self.reason,
            "delta": self.delta,
            "conf_det": self.confidence.det,
            "conf_geom": self.confidence.geom,
            "conf_stab": self.confidence.stab,
            "conf_agree": self.confidence.agree,
            "confidence": self.confidence.overall,
            "boxes": {"a": det_json(self.box_a), "b": det_json(self.box_b)},
            "perturbation_verdicts": self.perturbation_verdicts,
            "secondary_verdict": self.secondary_verdict,
            "config_digest": self.config_digest,
        }


def _round6(value: float) -> float:
    return round(value, 6)


def _geometry_only_verdict(det_set: DetectionSet, object_a: str,
                           object_b: str, relation: str,
                           config: CheckerConfig) -> str:
    """Selection + geometry, no overlap gate: the perturbation re-run rule."""
    sel_a = select_instance(det_set, object_a, config)
    if sel_a.status != SELECTED:
        return f"{UNDECIDABLE}:{sel_a.status}"
    sel_b = select_instance(det_set, object_b, config)
    if sel_b.status != SELECTED:
        return f"{UNDECIDABLE}:{sel_b.status}"
    delta = relation_delta(sel_a.detection.box, sel_b.detection.box,
                           relation, det_set.width, det_set.height)
    geo = decide_geometry(delta, relation, config.margin)
    if geo == NEAR_BOUNDARY:
        return f"{UNDECIDABLE}:{NEAR_BOUNDARY}"
    return geo


def _secondary_verdict(bundle: DetectionBundle,
                       config: CheckerConfig) -> str | None:
    """Independent verdict from the secondary detector on the base image.

    Runs the full abstaining pipeline minus perturbations. Returns None
    when no secondary detections were collected at all.
    """
    if bundle.secondary is None:
        return SECONDARY_FAILURE if bundle.secondary_error is not None else None
    det_set = bundle.secondary
    sel_a = select_instance(det_set, bundle.object_a, config)
    if sel_a.status != SELECTED:
        return UNDECIDABLE
    sel_b = select_instance(det_set, bundle.object_b, config)
    if sel_b.status != SELECTED:
        return UNDECIDABLE
    if overlap_gate(sel_a.detection.box, sel_b.detection.box,
                    bundle.relation, config.max_overlap_iou):
        return UNDECIDABLE
    delta = relation_delta(sel_a.detection.box, sel_b.detection.box,
                           bundle.relation, det_set.width, det_set.height)
    geo = decide_geometry(delta, bundle.relation, config.margin)
    return UNDECIDABLE if geo == NEAR_BOUNDARY else geo


def _agreement(secondary_verdict: str | None, base_verdict: str) -> float:
    if secondary_verdict in (PASS, FAIL):
        return 1.0 if secondary_verdict == base_verdict else 0.0
    return 0.5


def check_bundle(bundle: DetectionBundle,
                 config: CheckerConfig) -> CheckOutcome:
    """Run the whole checker over pre-fetched detections for one sample.

    Abstention reasons are exclusive and assigned by the first gate hit:
    missing/ambiguous from selection (object A checked before B), then
    high_overlap, then near_boundary, then unstable.
    """
    digest = config.digest()
    base = bundle.base()
    secondary_verdict = _secondary_verdict(bundle, config)

    def outcome(verdict, reason, delta, sel_a, sel_b, conf, pverdicts):
        return CheckOutcome(
            sample=bundle.sample,
            relation=bundle.relation,
            verdict=verdict,
            reason=reason,
            delta=None if delta is None else _round6(delta),
            box_a=sel_a,
            box_b=sel_b,
            confidence=conf,
            perturbation_verdicts=pverdicts,
            secondary_verdict=secondary_verdict,
            config_digest=digest,
        )

    sel_a = select_instance(base, bundle.object_a, config)
    if sel_a.status != SELECTED:
        return outcome(UNDECIDABLE, sel_a.status, None, None, None,
                       ConfidenceBreakdown.zero(), {})
    sel_b = select_instance(base, bundle.object_b, config)
    if sel_b.status != SELECTED:
        return outcome(UNDECIDABLE, sel_b.status, None, sel_a.detection, None,
                       ConfidenceBreakdown.zero(), {})

    box_a, box_b = sel_a.detection, sel_b.detection
    det_conf = detection_confidence(box_a.score, box_b.score)
    delta = relation_delta(box_a.box, box_b.box, bundle.relation,
                           base.width, base.height)
    geom_conf = geometry_confidence(delta, config.margin, config.geom_slope)

    def breakdown(stab, agree):
        overall = combine_confidence(det_conf, geom_conf, stab, agree, config)
        return ConfidenceBreakdown(_round6(det_conf), _round6(geom_conf),
                                   _round6(stab), _round6(agree),
                                   _round6(overall))

    if overlap_gate(box_a.box, box_b.box, bundle.relation,
                    config.max_overlap_iou):
        # Perturbation and agreement passes are skipped; both components
        # enter the confidence as the neutral 0.5.
        return outcome(UNDECIDABLE, "high_overlap", delta, box_a, box_b,
                       breakdown(0.5, 0.5), {})

    geo = decide_geometry(delta, bundle.relation, config.margin)
    if geo == NEAR_BOUNDARY:
        return outcome(UNDECIDABLE, NEAR_BOUNDARY, delta, box_a, box_b,
                       breakdown(0.5, 0.5), {})

    pverdicts: dict[str, str] = {}
    for spec in config.perturbations:
        tag = spec.tag()
        pset = bundle.primary.get(tag)
        if pset is None:
            pverdicts[tag] = f"{UNDECIDABLE}:{MISSING}"
        else:
            pverdicts[tag] = _geometry_only_verdict(
                pset, bundle.object_a, bundle.object_b, bundle.relation,
                config)
    stab = stability_score(geo, list(pverdicts.values()))
    agree = _agreement(secondary_verdict, geo)

    if stab < config.consistency_threshold:
        return outcome(UNDECIDABLE, "unstable", delta, box_a, box_b,
                       breakdown(stab, agree), pverdicts)

    return outcome(geo, None, delta, box_a, box_b, breakdown(stab, agree),
                   pverdicts)
