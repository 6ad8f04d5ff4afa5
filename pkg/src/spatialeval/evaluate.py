"""Run orchestration: manifest validation, detector fan-out, and the
per-sample/cache/metrics/provenance artifacts for one method directory.

Detections are fetched eagerly for the unperturbed image, every standard
perturbation (primary detector), and the secondary detector, then persisted
to eval/detections.jsonl. Verdict logic consumes only that bundle, so
calibration later re-runs the checker without image or backend access.
"""

from __future__ import annotations

import datetime
import json
import os
from dataclasses import dataclass
from pathlib import Path

from . import TOOL_NAME, __version__
from .backends import Backend, request_detections
from .checker import (
    BASE_TAG,
    CheckerConfig,
    CheckOutcome,
    DetectionBundle,
    SampleRef,
    check_bundle,
)
from .detection import DetectionSet, detection_set_from_json, detection_set_to_json
from .errors import BackendFailure, IntegrityError, ValidationError
from .metrics import (
    OutcomeRow,
    abstention_breakdown,
    by_relation_metrics,
    counterfactual_metrics,
    frac_json,
    group_by_prompt,
    per_image_metrics,
    prompt_metrics,
)
from .prompts import PromptSet

PER_SAMPLE_FILE = "per_sample.jsonl"
DETECTIONS_FILE = "detections.jsonl"
METRICS_FILE = "metrics.json"
PROVENANCE_FILE = "provenance.json"
CONFIG_FILE = "checker_config.yaml"


def run_timestamp() -> str:
    """UTC timestamp for provenance records.

    SOURCE_DATE_EPOCH overrides the clock so a rerun of the same inputs
    can produce byte-identical artifacts.
    """
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        moment = datetime.datetime.fromtimestamp(int(epoch),
                                                 datetime.timezone.utc)
    else:
        moment = datetime.datetime.now(datetime.timezone.utc)
    return moment.isoformat()


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestRecord:
    """One generated image to evaluate.

    `image` is the manifest's verbatim string (it flows into
    per_sample.jsonl unchanged, keeping that file location-independent);
    `image_path` is the same path resolved against the manifest directory
    for file access.
    """

    prompt_id: str
    seed: int
    image: str
    method: str
    image_path: str = ""
    gen_digest: str = ""

    def resolved(self) -> str:
        return self.image_path or self.image


def resolve_image(image: str, base_dir: Path) -> str:
    path = Path(image)
    return str(path if path.is_absolute() else base_dir / path)


def load_manifest(path: str | Path) -> list[ManifestRecord]:
    path = Path(path)
    base_dir = path.parent
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                records.append(ManifestRecord(
                    prompt_id=data["prompt_id"],
                    seed=int(data["seed"]),
                    image=data["image"],
                    method=data["method"],
                    image_path=resolve_image(data["image"], base_dir),
                    gen_digest=data.get("gen_digest", ""),
                ))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValidationError(f"{path}:{line_no}: bad manifest record: {exc}")
    if not records:
        raise ValidationError(f"{path}: empty manifest")
    return records


def validate_manifest(records: list[ManifestRecord], prompts: PromptSet,
                      k: int | None = None) -> int:
    """Check method uniformity and the exactly-K-seeds invariant; return K."""
    methods = {r.method for r in records}
    if len(methods) != 1:
        raise IntegrityError(f"manifest mixes methods: {sorted(methods)}")
    known = {p.prompt_id for p in prompts}
    per_prompt: dict[str, set[int]] = {}
    for rec in records:
        if rec.prompt_id not in known:
            raise IntegrityError(f"manifest references unknown prompt {rec.prompt_id}")
        seeds = per_prompt.setdefault(rec.prompt_id, set())
        if rec.seed in seeds:
            raise IntegrityError(f"duplicate seed {rec.seed} for {rec.prompt_id}")
        seeds.add(rec.seed)
    sizes = {len(s) for s in per_prompt.values()}
    if k is None:
        if len(sizes) != 1:
            raise IntegrityError(f"uneven seeds per prompt: {sorted(sizes)}")
        k = sizes.pop()
    elif sizes != {k}:
        raise IntegrityError(f"expected {k} seeds per prompt, found {sorted(sizes)}")
    return k


def sample_id_for(record: ManifestRecord) -> str:
    return f"{record.method}:{record.prompt_id}:s{record.seed}"


# ---------------------------------------------------------------------------
# Bundle fetch and cache
# ---------------------------------------------------------------------------

def fetch_bundle(record: ManifestRecord, prompts: PromptSet,
                 config: CheckerConfig, primary: Backend,
                 secondary: Backend | None) -> DetectionBundle:
    """Collect every detection set the checker may ever need for one sample."""
    prompt = prompts.get(record.prompt_id)
    labels = (prompt.object_a, prompt.object_b)
    image = record.resolved()
    primary_sets: dict[str, DetectionSet] = {
        BASE_TAG: request_detections(primary, image, labels, None)
    }
    for spec in config.perturbations:
        primary_sets[spec.tag()] = request_detections(
            primary, image, labels, spec)
    secondary_set = None
    secondary_error = None
    if secondary is not None:
        try:
            secondary_set = request_detections(secondary, image, labels, None)
        except BackendFailure as exc:
            secondary_error = str(exc)
    return DetectionBundle(
        sample=SampleRef(
            sample_id=sample_id_for(record),
            prompt_id=record.prompt_id,
            method=record.method,
            seed=record.seed,
            image=record.image,
        ),
        object_a=prompt.object_a,
        object_b=prompt.object_b,
        relation=prompt.relation,
        primary=primary_sets,
        secondary=secondary_set,
        secondary_error=secondary_error,
    )


def bundle_to_json(bundle: DetectionBundle) -> dict:
    def detector_json(sets: dict[str, DetectionSet]) -> dict:
        any_set = next(iter(sets.values()))
        return {
            "detector_id": any_set.detector_id,
            "score_floor": any_set.backend_score_floor,
            "sets": {tag: {
                "width": ds.width,
                "height": ds.height,
                "detections": detection_set_to_json(ds)["detections"],
            } for tag, ds in sorted(sets.items())},
        }

    out = {
        "sample_id": bundle.sample.sample_id,
        "prompt_id": bundle.sample.prompt_id,
        "method": bundle.sample.method,
        "seed": bundle.sample.seed,
        "image": bundle.sample.image,
        "object_a": bundle.object_a,
        "object_b": bundle.object_b,
        "relation": bundle.relation,
        "primary": detector_json(bundle.primary),
    }
    if bundle.secondary is not None:
        out["secondary"] = detector_json({BASE_TAG: bundle.secondary})
    elif bundle.secondary_error is not None:
        out["secondary"] = {"error": bundle.secondary_error}
    else:
        out["secondary"] = None
    return out


def bundle_from_json(data: dict) -> DetectionBundle:
    def detector_sets(block: dict) -> dict[str, DetectionSet]:
        return {tag: detection_set_from_json({
            "detector_id": block["detector_id"],
            "score_floor": block["score_floor"],
            "width": entry["width"],
            "height": entry["height"],
            "detections": entry["detections"],
        }, tag) for tag, entry in block["sets"].items()}

    secondary_block = data["secondary"]
    if secondary_block is None:
        secondary, error = None, None
    elif "error" in secondary_block:
        secondary, error = None, secondary_block["error"]
    else:
        secondary = detector_sets(secondary_block)[BASE_TAG]
        error = None
    return DetectionBundle(
        sample=SampleRef(
            sample_id=data["sample_id"],
            prompt_id=data["prompt_id"],
            method=data["method"],
            seed=int(data["seed"]),
            image=data["image"],
        ),
        object_a=data["object_a"],
        object_b=data["object_b"],
        relation=data["relation"],
        primary=detector_sets(data["primary"]),
        secondary=secondary,
        secondary_error=error,
    )


def load_bundles(path: str | Path) -> dict[str, DetectionBundle]:
    bundles = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                bundle = bundle_from_json(json.loads(line))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValidationError(f"{path}:{line_no}: bad cache line: {exc}")
            bundles[bundle.sample.sample_id] = bundle
    return bundles


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvaluationResult:
    outcomes: list[CheckOutcome]
    bundles: list[DetectionBundle]
    skipped: list[dict]
    warnings: list[str]
    k: int


def evaluate_run(records: list[ManifestRecord], prompts: PromptSet,
                 config: CheckerConfig, primary: Backend,
                 secondary: Backend | None,
                 k: int | None = None) -> EvaluationResult:
    """Produce one CheckOutcome per manifest record.

    Missing images and primary-backend failures are recorded and excluded
    from the evaluated set rather than mapped onto any abstention reason;
    they are facts about the run, not about the generator.
    """
    k = validate_manifest(records, prompts, k=k)
    outcomes: list[CheckOutcome] = []
    bundles: list[DetectionBundle] = []
    skipped: list[dict] = []
    warnings: list[str] = []
    for record in sorted(records, key=lambda r: (r.prompt_id, r.seed)):
        if not Path(record.resolved()).is_file():
            skipped.append({"sample_id": sample_id_for(record),
                            "error": f"missing image: {record.resolved()}"})
            continue
        try:
            bundle = fetch_bundle(record, prompts, config, primary, secondary)
        except BackendFailure as exc:
            skipped.append({"sample_id": sample_id_for(record),
                            "error": f"primary backend: {exc}"})
            continue
        for ds in bundle.primary.values():
            warnings.extend(f"{bundle.sample.sample_id}: {w}" for w in ds.warnings)
        bundles.append(bundle)
        outcomes.append(check_bundle(bundle, config))
    if skipped:
        warnings.append(f"skipped {len(skipped)} of {len(records)} records")
    return EvaluationResult(outcomes=outcomes, bundles=bundles,
                            skipped=skipped, warnings=warnings, k=k)


# ---------------------------------------------------------------------------
# Artifact writers
# ---------------------------------------------------------------------------

def outcome_rows(outcomes: list[CheckOutcome]) -> list[OutcomeRow]:
    return [OutcomeRow.from_dict(o.as_dict()) for o in outcomes]


def write_per_sample(outcomes: list[CheckOutcome], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for outcome in outcomes:
            fh.write(json.dumps(outcome.as_dict(), sort_keys=True,
                                ensure_ascii=False) + "\n")


def write_detections_cache(bundles: list[DetectionBundle],
                           path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for bundle in bundles:
            fh.write(json.dumps(bundle_to_json(bundle), sort_keys=True,
                                ensure_ascii=False) + "\n")


def metrics_payload(outcomes: list[CheckOutcome], prompts: PromptSet,
                    k: int) -> dict:
    rows = outcome_rows(outcomes)
    mm = per_image_metrics(rows)
    # Skipped records can leave a prompt with fewer than K outcomes;
    # prompt-level rates then only cover the prompts that kept all K.
    groups = group_by_prompt(rows)
    full = [r for r in rows if len(groups[r.prompt_id]) == k]
    if full:
        pm = prompt_metrics(full, k=k)
        prompt_block = {
            "prompts": pm.prompts,
            "prompts_excluded": len(groups) - pm.prompts,
            "k": pm.k,
            "best_of_k_rate": frac_json(pm.best_of_k_rate),
            "all_of_k_rate": frac_json(pm.all_of_k_rate),
        }
    else:
        prompt_block = None
    reasons = abstention_breakdown(rows)
    payload = {
        "method": rows[0].method,
        "n": mm.n,
        "n_pass": mm.n_pass,
        "n_fail": mm.n_fail,
        "n_undecidable": mm.n_undecidable,
        "pass_rate": frac_json(mm.pass_rate),
        "coverage": frac_json(mm.coverage),
        "pass_rate_cond": frac_json(mm.pass_rate_cond),
        "mean_confidence": frac_json(mm.mean_confidence),
        "prompt": prompt_block,
        "abstention": {reason: frac_json(share)
                       for reason, share in reasons.items()},
        "by_relation": {
            relation: {"n": m.n, "pass_rate": frac_json(m.pass_rate)}
            for relation, m in by_relation_metrics(rows).items()
        },
    }
    pairing = prompts.pairing()
    have = {r.prompt_id for r in rows}
    if all(pairing.get(pid) in have for pid in have):
        cf = counterfactual_metrics(rows, pairing)
        payload["counterfactual"] = {
            "pairs": cf.pairs,
            "both_pass_rate": frac_json(cf.both_pass_rate),
            "undecidable_mass": frac_json(cf.undecidable_mass),
            "one_sided_rate": frac_json(cf.one_sided_rate),
        }
    else:
        payload["counterfactual"] = None
    return payload


def write_eval_dir(out_dir: str | Path, result: EvaluationResult,
                   config: CheckerConfig, prompts: PromptSet,
                   primary: Backend, secondary: Backend | None,
                   dataset_digest: str = "",
                   calibration: dict | None = None) -> Path:
    """Write per_sample.jsonl, detections.jsonl, metrics.json,
    provenance.json, and checker_config.yaml into one eval directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_per_sample(result.outcomes, out / PER_SAMPLE_FILE)
    write_detections_cache(result.bundles, out / DETECTIONS_FILE)
    if result.outcomes:
        payload = metrics_payload(result.outcomes, prompts, result.k)
    else:
        payload = {"n": 0}
    with open(out / METRICS_FILE, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    config.save(out / CONFIG_FILE)

    backends = {"primary": {"detector_id": primary.detector_id,
                            "score_floor": primary.score_floor}}
    if secondary is not None:
        backends["secondary"] = {"detector_id": secondary.detector_id,
                                 "score_floor": secondary.score_floor}
    provenance = {
        "tool": TOOL_NAME,
        "version": __version__,
        "config_digest": config.digest(),
        "dataset_digest": dataset_digest,
        "backends": backends,
        "n_evaluated": len(result.outcomes),
        "n_skipped": len(result.skipped),
        "skipped": result.skipped,
        "warnings": result.warnings,
        "calibration": calibration,
        "timestamp": run_timestamp(),
    }
    with open(out / PROVENANCE_FILE, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out
