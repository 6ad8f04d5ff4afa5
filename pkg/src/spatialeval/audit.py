"""Human-audit tooling: stratified sampling, risk-coverage analysis against
human labels, and the calibration grid search over (margin, t_det, tau).

The grid search never touches images or backends; it re-runs the checker
over detection bundles cached at evaluation time.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .checker import (
    FAIL,
    PASS,
    UNDECIDABLE,
    CheckerConfig,
    DetectionBundle,
    check_bundle,
)
from .errors import IntegrityError, ValidationError
from .metrics import OutcomeRow, exact, frac_json as _frac_json

HUMAN_VERDICTS = (PASS, FAIL, UNDECIDABLE)

DEFAULT_BIN_EDGES = (0.3, 0.7)
BIN_SPLIT_MIN = 3  # split a stratum by confidence only above this size

DEFAULT_GRID = {
    "margin": [0.03, 0.05, 0.07, 0.10],
    "t_det": [0.2, 0.3, 0.4],
    "tau": [0.3, 0.5, 0.7],
}


# ---------------------------------------------------------------------------
# Stratified sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditSample:
    sample_id: str
    method: str
    relation: str
    verdict: str
    conf_bin: str
    confidence: Fraction
    image: str
    prompt_text: str


def confidence_bin(conf: Fraction, edges=DEFAULT_BIN_EDGES) -> str:
    lo = Fraction(0)
    for edge in edges:
        hi = exact(edge)
        if conf < hi:
            return f"[{float(lo)},{float(hi)})"
        lo = hi
    return f"[{float(lo)},1.0]"


def stratified_sample(rows: list[OutcomeRow], prompt_texts: dict[str, str],
                      n: int, seed: int,
                      edges=DEFAULT_BIN_EDGES) -> list[AuditSample]:
    """Draw n audit samples covering every (method, relation, verdict)
    stratum, subdivided by confidence bin when a stratum has more than
    BIN_SPLIT_MIN members.

    Allocation is proportional to stratum size with a minimum of one per
    stratum; leftover seats go by largest fractional part. Same seed, same
    sample list.
    """
    if n > len(rows):
        raise ValidationError(f"cannot draw {n} samples from {len(rows)} outcomes")
    coarse: dict[tuple, list[OutcomeRow]] = {}
    for row in rows:
        coarse.setdefault((row.method, row.relation, row.verdict), []).append(row)

    strata: dict[tuple, list[OutcomeRow]] = {}
    for key, members in coarse.items():
        if len(members) > BIN_SPLIT_MIN:
            for row in members:
                bin_label = confidence_bin(row.confidence, edges)
                strata.setdefault(key + (bin_label,), []).append(row)
        else:
            strata.setdefault(key + ("all",), []).extend(members)

    if n < len(strata):
        raise ValidationError(
            f"n={n} cannot cover {len(strata)} non-empty strata "
            f"(short by {len(strata) - n})")

    total = len(rows)
    keys = sorted(strata)
    quota = {k: Fraction(n * len(strata[k]), total) for k in keys}
    alloc = {k: min(len(strata[k]), max(1, int(quota[k]))) for k in keys}

    def frac_part(k):
        return quota[k] - int(quota[k])

    deficit = n - sum(alloc.values())
    if deficit > 0:
        order = sorted(keys, key=lambda k: (-frac_part(k), -len(strata[k]), k))
        while deficit:
            progressed = False
            for k in order:
                if deficit == 0:
                    break
                if alloc[k] < len(strata[k]):
                    alloc[k] += 1
                    deficit -= 1
                    progressed = True
            if not progressed:
                raise ValidationError("allocation failed: all strata exhausted")
    elif deficit < 0:
        order = sorted(keys, key=lambda k: (frac_part(k), len(strata[k]), k))
        while deficit:
            progressed = False
            for k in order:
                if deficit == 0:
                    break
                if alloc[k] > 1:
                    alloc[k] -= 1
                    deficit += 1
                    progressed = True
            if not progressed:
                raise ValidationError(
                    "allocation failed: cannot shrink to requested n")

    rng = random.Random(seed)
    chosen: list[AuditSample] = []
    for key in keys:
        members = sorted(strata[key], key=lambda r: r.sample_id)
        for row in rng.sample(members, alloc[key]):
            chosen.append(AuditSample(
                sample_id=row.sample_id,
                method=row.method,
                relation=row.relation,
                verdict=row.verdict,
                conf_bin=key[3],
                confidence=row.confidence,
                image=row.image,
                prompt_text=prompt_texts.get(row.prompt_id, ""),
            ))
    rng.shuffle(chosen)
    return chosen


SAMPLE_CSV_FIELDS = ("sample_id", "method", "relation", "verdict", "conf_bin",
                     "confidence", "image", "prompt_text")


def write_sample_csv(samples: list[AuditSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SAMPLE_CSV_FIELDS)
        for s in samples:
            writer.writerow([s.sample_id, s.method, s.relation, s.verdict,
                             s.conf_bin, str(float(s.confidence)), s.image,
                             s.prompt_text])


def read_sample_csv(path: str | Path) -> list[AuditSample]:
    samples = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(SAMPLE_CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing columns {sorted(missing)}")
        for rec in reader:
            samples.append(AuditSample(
                sample_id=rec["sample_id"],
                method=rec["method"],
                relation=rec["relation"],
                verdict=rec["verdict"],
                conf_bin=rec["conf_bin"],
                confidence=exact(rec["confidence"]),
                image=rec["image"],
                prompt_text=rec["prompt_text"],
            ))
    return samples


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditLabel:
    sample_id: str
    verdict: str
    annotator: str = ""
    timestamp: str = ""

    def __post_init__(self):
        if self.verdict not in HUMAN_VERDICTS:
            raise ValidationError(f"bad human verdict {self.verdict!r}")


def load_labels(path: str | Path) -> dict[str, AuditLabel]:
    """Read labels from the JSON export (or its CSV twin) into a map."""
    path = Path(path)
    labels: dict[str, AuditLabel] = {}
    if path.suffix == ".csv":
        with open(path, encoding="utf-8", newline="") as fh:
            for rec in csv.DictReader(fh):
                label = AuditLabel(rec["sample_id"], rec["verdict"],
                                   rec.get("annotator", ""),
                                   rec.get("timestamp", ""))
                labels[label.sample_id] = label
        return labels
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    for rec in data.get("labels", []):
        label = AuditLabel(rec["sample_id"], rec["verdict"],
                           rec.get("annotator", ""), rec.get("timestamp", ""))
        labels[label.sample_id] = label
    return labels


def write_labels(labels: list[AuditLabel], path: str | Path,
                 trail: list[dict] | None = None) -> None:
    path = Path(path)
    records = [{"sample_id": l.sample_id, "verdict": l.verdict,
                "annotator": l.annotator, "timestamp": l.timestamp}
               for l in labels]
    payload = {"version": 1, "labels": records, "trail": trail or []}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    csv_path = path.with_suffix(".csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "verdict", "annotator", "timestamp"])
        for rec in records:
            writer.writerow([rec["sample_id"], rec["verdict"],
                             rec["annotator"], rec["timestamp"]])


# ---------------------------------------------------------------------------
# Risk-coverage analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScoredSample:
    """One audited sample: checker verdict + confidence vs human label."""

    sample_id: str
    verdict: str
    confidence: Fraction
    human: str


def join_labels(samples: list[AuditSample],
                labels: dict[str, AuditLabel]) -> list[ScoredSample]:
    scored = []
    for s in samples:
        label = labels.get(s.sample_id)
        if label is None:
            raise IntegrityError(f"no human label for {s.sample_id}")
        scored.append(ScoredSample(s.sample_id, s.verdict, s.confidence,
                                   label.verdict))
    return scored


@dataclass(frozen=True)
class RiskCoveragePoint:
    tau: Fraction
    coverage: Fraction
    risk: Fraction | None
    n_covered: int
    n_scored: int


def _covered(sample: ScoredSample, tau) -> bool:
    return sample.verdict in (PASS, FAIL) and sample.confidence >= tau


def risk_coverage_curve(scored: list[ScoredSample]) -> list[RiskCoveragePoint]:
    """Sweep tau over 0 plus every distinct confidence value.

    Coverage counts decided-and-confident samples over ALL audited
    samples; risk is 1 - accuracy on covered samples whose human label is
    decided (human UNDECIDABLE never enters the accuracy denominator).
    """
    if not scored:
        raise ValidationError("no audited samples")
    taus = sorted({Fraction(0)} | {s.confidence for s in scored})
    return [point_at(scored, tau) for tau in taus]


def point_at(scored: list[ScoredSample], tau) -> RiskCoveragePoint:
    tau = exact(tau)
    n = len(scored)
    covered = [s for s in scored if _covered(s, tau)]
    decided_human = [s for s in covered if s.human in (PASS, FAIL)]
    if decided_human:
        hits = sum(1 for s in decided_human if s.verdict == s.human)
        risk = 1 - Fraction(hits, len(decided_human))
    else:
        risk = None
    return RiskCoveragePoint(
        tau=tau,
        coverage=Fraction(len(covered), n),
        risk=risk,
        n_covered=len(covered),
        n_scored=len(decided_human),
    )


def fpr_pass(scored: list[ScoredSample], tau,
             exclude_human_undecidable: bool = False) -> Fraction:
    """Share of confident checker PASSes that humans call FAIL.

    The literal denominator counts every checker PASS at/above tau; the
    variant drops human-UNDECIDABLE rows from it. Empty denominator
    reads as 0.
    """
    tau = exact(tau)
    passes = [s for s in scored if s.verdict == PASS and s.confidence >= tau]
    if exclude_human_undecidable:
        passes = [s for s in passes if s.human in (PASS, FAIL)]
    if not passes:
        return Fraction(0)
    bad = sum(1 for s in passes if s.human == FAIL)
    return Fraction(bad, len(passes))


def objective_j(fpr, risk, coverage):
    """J = 10*FPR + 2*risk + 0.5*(1 - coverage); exact for Fraction inputs."""
    return 10 * fpr + 2 * risk + (1 - coverage) / 2


# ---------------------------------------------------------------------------
# Calibration grid search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridPoint:
    margin: float
    t_det: float
    tau: float
    fpr_pass: Fraction
    fpr_pass_excl: Fraction
    risk: Fraction | None
    coverage: Fraction
    j: Fraction
    degenerate: bool
    effective_cutoff: float | None


@dataclass(frozen=True)
class CalibrationResult:
    points: list[GridPoint]
    selected: GridPoint
    curve: list[RiskCoveragePoint]


def grid_search(bundles: dict[str, DetectionBundle],
                labels: dict[str, AuditLabel],
                base_config: CheckerConfig,
                grid: dict | None = None) -> CalibrationResult:
    """Re-check every audited bundle under each (margin, t_det), score each
    tau, and pick the smallest-J point.

    Ties break toward larger coverage, then the lexicographically smallest
    (margin, t_det, tau) triple. Degenerate points (no covered
    human-decided sample) score risk as 0 but are flagged.
    """
    if not bundles:
        raise ValidationError("no audited bundles to calibrate on")
    grid = dict(DEFAULT_GRID) if grid is None else grid
    for key in ("margin", "t_det", "tau"):
        if key not in grid or not grid[key]:
            raise ValidationError(f"grid is missing values for {key!r}")

    missing = sorted(set(bundles) - set(labels))
    if missing:
        raise IntegrityError(f"audited samples without labels: {missing[:5]}")

    floors = {b.base().backend_score_floor for b in bundles.values()}
    floor = floors.pop() if len(floors) == 1 else None

    points: list[GridPoint] = []
    best_scored: list[ScoredSample] | None = None
    best: GridPoint | None = None
    for margin in sorted(grid["margin"]):
        for t_det in sorted(grid["t_det"]):
            variant = base_config.with_params(margin=margin, t_det=t_det)
            scored = []
            for sid in sorted(bundles):
                outcome = check_bundle(bundles[sid], variant)
                scored.append(ScoredSample(
                    sample_id=sid,
                    verdict=outcome.verdict,
                    confidence=exact(outcome.confidence.overall),
                    human=labels[sid].verdict,
                ))
            for tau in sorted(grid["tau"]):
                rc = point_at(scored, tau)
                degenerate = rc.risk is None
                risk = Fraction(0) if degenerate else rc.risk
                point = GridPoint(
                    margin=margin, t_det=t_det, tau=tau,
                    fpr_pass=fpr_pass(scored, tau),
                    fpr_pass_excl=fpr_pass(scored, tau,
                                           exclude_human_undecidable=True),
                    risk=rc.risk,
                    coverage=rc.coverage,
                    j=objective_j(fpr_pass(scored, tau), risk, rc.coverage),
                    degenerate=degenerate,
                    effective_cutoff=(None if floor is None
                                      else max(t_det, floor)),
                )
                points.append(point)
                if best is None or _point_key(point) < _point_key(best):
                    best = point
                    best_scored = scored

    curve = risk_coverage_curve(best_scored)
    return CalibrationResult(points=points, selected=best, curve=curve)


def _point_key(p: GridPoint):
    return (p.j, -p.coverage, (p.margin, p.t_det, p.tau))


# ---------------------------------------------------------------------------
# Analysis output
# ---------------------------------------------------------------------------

def curve_json(curve: list[RiskCoveragePoint]) -> list[dict]:
    return [{
        "tau": float(p.tau),
        "coverage": _frac_json(p.coverage),
        "risk": _frac_json(p.risk),
        "n_covered": p.n_covered,
        "n_scored": p.n_scored,
    } for p in curve]


def write_analysis(path: str | Path, curve: list[RiskCoveragePoint],
                   summary: dict, result: CalibrationResult | None = None) -> None:
    """Emit audit_metrics.json for one analysis directory."""
    payload = {"curve": curve_json(curve), "summary": summary}
    if result is not None:
        payload["grid"] = [{
            "margin": p.margin, "t_det": p.t_det, "tau": p.tau,
            "fpr_pass": _frac_json(p.fpr_pass),
            "fpr_pass_excl_human_undecidable": _frac_json(p.fpr_pass_excl),
            "risk": _frac_json(p.risk),
            "coverage": _frac_json(p.coverage),
            "j": _frac_json(p.j),
            "degenerate": p.degenerate,
            "effective_cutoff": p.effective_cutoff,
        } for p in result.points]
        sel = result.selected
        payload["selected"] = {"margin": sel.margin, "t_det": sel.t_det,
                               "tau": sel.tau, "j": _frac_json(sel.j)}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
