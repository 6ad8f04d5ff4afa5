"""Report bundle emission: delimited tables, rendered charts, provenance.

A report covers one or more method run directories evaluated under one
checker configuration. Every cell is recomputed here from per_sample.jsonl
with exact rational arithmetic; nothing is copied from metrics.json.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import yaml

from . import TOOL_NAME, __version__
from .charts import (
    render_confidence_hist,
    render_coverage_vs_conditional,
    render_pass_rates,
    render_risk_coverage,
)
from .errors import IntegrityError, ValidationError
from .metrics import (
    CounterfactualMetrics,
    MethodMetrics,
    OutcomeRow,
    PromptLevelMetrics,
    abstention_breakdown,
    by_relation_metrics,
    counterfactual_metrics,
    group_by_prompt,
    load_rows,
    per_image_metrics,
    prompt_metrics,
)
from .evaluate import run_timestamp
from .prompts import INVERSE_RELATION, RELATIONS, hash_dataset
from .rendering import format_fixed, format_percent

PER_SAMPLE = "per_sample.jsonl"

TABLE_FILES = ("main_results.csv", "prompt_metrics.csv", "by_relation.csv",
               "counterfactual.csv", "abstention_breakdown.csv")
DELTA_TABLE = "calibration_deltas.csv"


@dataclass
class RunSummary:
    run_dir: Path
    method: str
    config_digest: str
    rows: list[OutcomeRow]
    per_image: MethodMetrics
    prompt: PromptLevelMetrics
    reasons: dict
    relations: dict[str, MethodMetrics]
    counterfactual: CounterfactualMetrics


def derive_pairing(rows: list[OutcomeRow]) -> dict[str, str]:
    """Counterfactual partner ids from the builder's id scheme.

    Prompt ids end in their relation name, so the partner is the same id
    with the relation swapped for its inverse.
    """
    pairing = {}
    ids = {r.prompt_id for r in rows}
    for row in rows:
        suffix = row.relation
        if not row.prompt_id.endswith(suffix):
            raise IntegrityError(
                f"prompt id {row.prompt_id!r} does not end with its relation; "
                "cannot derive counterfactual pairing")
        partner = row.prompt_id[:-len(suffix)] + INVERSE_RELATION[suffix]
        if partner not in ids:
            raise IntegrityError(
                f"counterfactual partner {partner!r} of {row.prompt_id!r} "
                "has no outcomes")
        pairing[row.prompt_id] = partner
    return pairing


def load_run(run_dir: str | Path, eval_subdir: str = "eval") -> RunSummary:
    run_dir = Path(run_dir)
    path = run_dir / eval_subdir / PER_SAMPLE
    if not path.is_file():
        raise ValidationError(f"no {PER_SAMPLE} under {run_dir / eval_subdir}")
    rows = load_rows(path)
    if not rows:
        raise ValidationError(f"{path}: empty evaluation")
    digests = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                digests.add(json.loads(line).get("config_digest", ""))
    if len(digests) != 1:
        raise IntegrityError(
            f"{path}: mixed config digests in one eval dir: {sorted(digests)}")
    methods = {r.method for r in rows}
    if len(methods) != 1:
        raise IntegrityError(f"{path}: mixed methods: {sorted(methods)}")
    # Prompts that lost a seed to a skipped record drop out of the
    # prompt-level rates; K is whatever the intact prompts carry.
    groups = group_by_prompt(rows)
    k = max(len(g) for g in groups.values())
    full = [r for r in rows if len(groups[r.prompt_id]) == k]
    return RunSummary(
        run_dir=run_dir,
        method=methods.pop(),
        config_digest=digests.pop(),
        rows=rows,
        per_image=per_image_metrics(rows),
        prompt=prompt_metrics(full, k=k),
        reasons=abstention_breakdown(rows),
        relations=by_relation_metrics(rows),
        counterfactual=counterfactual_metrics(rows, derive_pairing(rows)),
    )


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_tables(summaries: list[RunSummary], tables_dir: Path,
                 baselines: dict[str, RunSummary] | None = None) -> list[Path]:
    tables_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def table(name, header, rows):
        path = tables_dir / name
        _write_csv(path, header, rows)
        written.append(path)

    table("main_results.csv",
          ["method", "n", "n_pass", "n_fail", "n_undecidable", "pass_pct",
           "coverage_pct", "pass_given_decided_pct", "prompt_pass_pct",
           "mean_conf"],
          [[s.method, str(s.per_image.n), str(s.per_image.n_pass),
            str(s.per_image.n_fail), str(s.per_image.n_undecidable),
            format_percent(s.per_image.pass_rate),
            format_percent(s.per_image.coverage),
            "" if s.per_image.pass_rate_cond is None
            else format_percent(s.per_image.pass_rate_cond),
            format_percent(s.prompt.best_of_k_rate),
            format_fixed(s.per_image.mean_confidence, 3)]
           for s in summaries])

    table("prompt_metrics.csv",
          ["method", "prompts", "k", "best_of_k_pct", "all_of_k_pct"],
          [[s.method, str(s.prompt.prompts), str(s.prompt.k),
            format_percent(s.prompt.best_of_k_rate),
            format_percent(s.prompt.all_of_k_rate)]
           for s in summaries])

    table("by_relation.csv",
          ["method"] + [f"{rel}_pass_pct" for rel in RELATIONS],
          [[s.method] + ["" if rel not in s.relations
                         else format_percent(s.relations[rel].pass_rate)
                         for rel in RELATIONS]
           for s in summaries])

    table("counterfactual.csv",
          ["method", "pairs", "both_pass_pct", "undecidable_pct",
           "one_sided_pct"],
          [[s.method, str(s.counterfactual.pairs),
            format_percent(s.counterfactual.both_pass_rate),
            format_percent(s.counterfactual.undecidable_mass),
            format_percent(s.counterfactual.one_sided_rate)]
           for s in summaries])

    table("abstention_breakdown.csv",
          ["method", "undecidable_pct", "missing_pct", "ambiguous_pct",
           "high_overlap_pct", "near_boundary_pct", "unstable_pct"],
          [[s.method,
            format_percent(1 - s.per_image.coverage, 2),
            format_percent(s.reasons["missing"], 2),
            format_percent(s.reasons["ambiguous"], 2),
            format_percent(s.reasons["high_overlap"], 2),
            format_percent(s.reasons["near_boundary"], 2),
            format_percent(s.reasons["unstable"], 2)]
           for s in summaries])

    if baselines is not None:
        rows = []
        for s in summaries:
            base = baselines.get(s.method)
            if base is None:
                raise IntegrityError(
                    f"baseline evaluation missing for method {s.method!r}")
            cond_cell = ""
            if (s.per_image.pass_rate_cond is not None
                    and base.per_image.pass_rate_cond is not None):
                cond_cell = format_percent(
                    s.per_image.pass_rate_cond - base.per_image.pass_rate_cond,
                    2, force_sign=True)
            rows.append([
                s.method,
                format_percent(s.per_image.pass_rate - base.per_image.pass_rate,
                               2, force_sign=True),
                format_percent(s.per_image.coverage - base.per_image.coverage,
                               2, force_sign=True),
                cond_cell,
                format_percent(s.prompt.best_of_k_rate
                               - base.prompt.best_of_k_rate,
                               2, force_sign=True),
                format_fixed(s.per_image.mean_confidence
                             - base.per_image.mean_confidence,
                             3, force_sign=True),
            ])
        table(DELTA_TABLE,
              ["method", "delta_pass_pp", "delta_coverage_pp",
               "delta_pass_given_decided_pp", "delta_prompt_pass_pp",
               "delta_mean_conf"],
              rows)

    return written


# ---------------------------------------------------------------------------
# Bundle
# ---------------------------------------------------------------------------

def emit_report(run_dirs: list[str | Path], out_dir: str | Path,
                eval_subdir: str = "eval",
                baseline_subdir: str | None = None,
                audit_analysis: str | Path | None = None) -> dict:
    """Write the full report bundle; returns the manifest of written files."""
    if not run_dirs:
        raise ValidationError("no run directories given")
    summaries = [load_run(d, eval_subdir) for d in run_dirs]
    baselines = None
    if baseline_subdir:
        baselines = {s.method: s
                     for s in (load_run(d, baseline_subdir) for d in run_dirs)}

    out = Path(out_dir)
    tables_dir = out / "tables"
    assets_dir = out / "assets"
    tables = write_tables(summaries, tables_dir, baselines)

    assets: list[Path] = []
    assets += render_pass_rates(
        [(s.method, float(s.per_image.pass_rate), float(s.per_image.coverage))
         for s in summaries],
        assets_dir / "pass_rate_comparison")
    assets += render_coverage_vs_conditional(
        [(s.method, float(s.per_image.coverage),
          None if s.per_image.pass_rate_cond is None
          else float(s.per_image.pass_rate_cond))
         for s in summaries],
        assets_dir / "coverage_vs_conditional_pass")
    assets += render_confidence_hist(
        {s.method: [float(r.confidence) for r in s.rows] for s in summaries},
        assets_dir / "confidence_distribution")

    audit_ref = None
    if audit_analysis is not None:
        metrics_path = Path(audit_analysis)
        if metrics_path.is_dir():
            metrics_path = metrics_path / "audit_metrics.json"
        with open(metrics_path, encoding="utf-8") as fh:
            analysis = json.load(fh)
        selected_tau = (analysis.get("selected") or {}).get("tau")
        assets += render_risk_coverage(analysis.get("curve", []),
                                       assets_dir / "risk_coverage",
                                       selected_tau=selected_tau)
        audit_ref = str(metrics_path)

    meta = {
        "tool": TOOL_NAME,
        "version": __version__,
        "eval_subdir": eval_subdir,
        "baseline_subdir": baseline_subdir,
        "audit_analysis": audit_ref,
        "runs": [{
            "dir": str(s.run_dir),
            "method": s.method,
            "config_digest": s.config_digest,
            "n": s.per_image.n,
            "per_sample_sha256": hash_dataset(
                s.run_dir / eval_subdir / PER_SAMPLE),
        } for s in summaries],
        "tables": [p.name for p in tables],
        "assets": [p.name for p in assets],
        "timestamp": run_timestamp(),
    }
    with open(out / "report_meta.json", "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")

    effective = {
        "runs": [str(Path(d).resolve()) for d in run_dirs],
        "eval_subdir": eval_subdir,
        "baseline_subdir": baseline_subdir,
        "audit_analysis": audit_ref,
        "out": str(out.resolve()),
    }
    with open(out / "report_config_effective.yaml", "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(yaml.safe_dump(effective, sort_keys=True,
                                default_flow_style=False))

    return {"tables": tables, "assets": assets, "out": out}
