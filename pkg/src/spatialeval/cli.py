"""Command-line entry points.

Verbs:
    build-prompts   write the prompt dataset (jsonl + meta + digest)
    mock-gen        build a synthetic scenario (images, scenes, manifests)
    evaluate        run detection + checking over a manifest
    report          render tables and figures from one or more runs
    audit-sample    draw a stratified audit sample into a CSV
    serve-audit     label the sample in a browser (blind API)
    audit-analyze   risk-coverage curve + error rates from labels
    calibrate       grid-search margin/threshold/tau against labels

Exit codes: 0 success, 2 validation or integrity failure, 3 backend or
protocol failure. Backend commands resolve flag > environment > built-in
mock (when --scenes is given).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import yaml

from . import __version__
from .audit import (
    DEFAULT_GRID,
    fpr_pass,
    grid_search,
    join_labels,
    load_labels,
    point_at,
    read_sample_csv,
    risk_coverage_curve,
    stratified_sample,
    write_analysis,
    write_sample_csv,
)
from .backends import (
    Backend,
    ProcessBackend,
    mock_backend_command,
    resolve_backend_command,
)
from .checker import CheckerConfig
from .errors import BackendFailure, SpatialEvalError, ValidationError
from .evaluate import evaluate_run, load_bundles, load_manifest, write_eval_dir
from .metrics import frac_json, load_rows
from .prompts import (
    PromptTemplate,
    build_prompts,
    default_pairs,
    hash_dataset,
    load_pairs,
    load_prompts,
    validate_dataset,
    write_dataset,
)
from .report import emit_report
from .server import AuditState, serve_forever

PRIMARY_ENV = "SPATIALEVAL_PRIMARY_BACKEND"
SECONDARY_ENV = "SPATIALEVAL_SECONDARY_BACKEND"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BACKEND = 3


def _prompts_path(value: str) -> Path:
    path = Path(value)
    return path / "prompts.jsonl" if path.is_dir() else path


def _load_config(value: str | None) -> CheckerConfig:
    return CheckerConfig.load(value) if value else CheckerConfig()


def _per_sample_paths(runs: list[str], eval_subdir: str) -> list[Path]:
    return [Path(r) / eval_subdir / "per_sample.jsonl" for r in runs]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_build_prompts(args) -> int:
    pairs = load_pairs(args.pairs) if args.pairs else default_pairs()
    template = PromptTemplate.load(args.template) if args.template \
        else PromptTemplate()
    prompt_set, meta = build_prompts(pairs, template, version=args.version)
    violations = validate_dataset(prompt_set, meta)
    if violations:
        for v in violations:
            print(f"invalid: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    out_dir = Path(args.out) / meta.version
    paths = write_dataset(out_dir, prompt_set, meta)
    print(f"wrote {meta.total_prompts} prompts "
          f"({meta.object_pairs} pairs x 4 relations, "
          f"{meta.counterfactual_pairs} counterfactual pairs)")
    print(f"dataset digest {meta.content_digest}")
    print(f"-> {paths['prompts']}")
    return EXIT_OK


def cmd_mock_gen(args) -> int:
    from . import mockgen
    info = mockgen.generate(args.out, pairs=args.pairs, seeds=args.seeds,
                            seed=args.seed, run_id=args.run_id)
    print(f"wrote {info['samples']} samples across {len(info['methods'])} "
          f"methods under {info['run_root']}")
    print(f"prompts:      {info['prompts_file']}")
    print(f"scenes:       {info['scenes']}")
    print(f"truth labels: {info['truth_labels']}")
    return EXIT_OK


def _open_backend(flag: str | None, env_var: str, scenes: str | None,
                  mock_id: str, timeout: float) -> Backend | None:
    default = mock_backend_command(scenes, mock_id) if scenes else None
    command = resolve_backend_command(flag, env_var, default)
    if command is None:
        return None
    return ProcessBackend(command, timeout=timeout)


def cmd_evaluate(args) -> int:
    prompts = load_prompts(_prompts_path(args.prompts))
    config = _load_config(args.config)
    records = load_manifest(args.manifest)
    out_dir = Path(args.out) if args.out else Path(args.manifest).parent / "eval"

    primary = _open_backend(args.primary_backend, PRIMARY_ENV, args.scenes,
                            "mock-primary", args.backend_timeout)
    if primary is None:
        raise ValidationError(
            "no primary backend: pass --primary-backend, set "
            f"{PRIMARY_ENV}, or pass --scenes for the mock")
    secondary = None
    if not args.no_secondary:
        secondary = _open_backend(args.secondary_backend, SECONDARY_ENV,
                                  args.scenes, "mock-secondary",
                                  args.backend_timeout)
    try:
        result = evaluate_run(records, prompts, config, primary, secondary)
        write_eval_dir(out_dir, result, config, prompts, primary, secondary,
                       dataset_digest=hash_dataset(_prompts_path(args.prompts)))
    finally:
        primary.close()
        if secondary is not None:
            secondary.close()

    n = len(result.outcomes)
    decided = sum(1 for o in result.outcomes if o.verdict in ("PASS", "FAIL"))
    print(f"evaluated {n} samples ({decided} decided, "
          f"{n - decided} undecidable, {len(result.skipped)} skipped)")
    if secondary is None:
        print("note: no secondary detector; agreement treated as neutral")
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"-> {out_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    info = emit_report(args.run, args.out, eval_subdir=args.eval_subdir,
                       baseline_subdir=args.baseline_subdir,
                       audit_analysis=args.audit_analysis)
    print(f"report in {info['out']}")
    for path in info["tables"]:
        print(f"table: {path}")
    for path in info["assets"]:
        print(f"asset: {path}")
    return EXIT_OK


def cmd_audit_sample(args) -> int:
    prompts = load_prompts(_prompts_path(args.prompts))
    prompt_texts = {p.prompt_id: p.text for p in prompts}
    rows = []
    for run, per_sample in zip(args.run, _per_sample_paths(args.run,
                                                           args.eval_subdir)):
        for row in load_rows(per_sample):
            image = row.image
            if image and not Path(image).is_absolute():
                image = str((Path(run) / image).resolve())
            rows.append(replace(row, image=image))
    samples = stratified_sample(rows, prompt_texts, args.n, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_sample_csv(samples, out)
    print(f"sampled {len(samples)} of {len(rows)} outcomes -> {out}")
    return EXIT_OK


def cmd_serve_audit(args) -> int:
    samples = read_sample_csv(args.sample)
    rows: list[dict] = []
    for per_sample in _per_sample_paths(args.run, args.eval_subdir):
        with open(per_sample, encoding="utf-8") as fh:
            rows.extend(json.loads(line) for line in fh if line.strip())
    state = AuditState.build(samples, rows, args.labels)
    serve_forever(state, args.host, args.port, ui_dir=args.ui_dir)
    return EXIT_OK


def cmd_audit_analyze(args) -> int:
    samples = read_sample_csv(args.sample)
    labels = load_labels(args.labels)
    scored = join_labels(samples, labels)
    curve = risk_coverage_curve(scored)
    tau = Fraction(str(args.tau))
    op = point_at(scored, tau)
    summary = {
        "n_audited": len(scored),
        "tau": float(tau),
        "coverage": frac_json(op.coverage),
        "risk": frac_json(op.risk),
        "fpr_pass": frac_json(fpr_pass(scored, tau)),
        "fpr_pass_excl_human_undecidable": frac_json(
            fpr_pass(scored, tau, exclude_human_undecidable=True)),
    }
    out = Path(args.out)
    write_analysis(out / "audit_metrics.json", curve, summary)
    risk = "n/a" if op.risk is None else f"{float(op.risk):.4f}"
    print(f"audited {len(scored)} samples; at tau={float(tau):g} "
          f"coverage={float(op.coverage):.4f} risk={risk}")
    print(f"-> {out / 'audit_metrics.json'}")
    return EXIT_OK


def _load_grid(path: str | None) -> dict | None:
    if not path:
        return None
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: grid must be a mapping of lists")
    return data


def cmd_calibrate(args) -> int:
    labels = load_labels(args.labels)
    if args.sample:
        keep = {s.sample_id for s in read_sample_csv(args.sample)}
        labels = {k: v for k, v in labels.items() if k in keep}
    bundles = {}
    for run in args.run:
        path = Path(run) / args.eval_subdir / "detections.jsonl"
        bundles.update(load_bundles(path))
    bundles = {k: v for k, v in bundles.items() if k in labels}
    if not bundles:
        raise ValidationError("no labeled samples found in the detection caches")
    config = _load_config(args.config)
    result = grid_search(bundles, labels, config,
                         grid=_load_grid(args.grid) or DEFAULT_GRID)
    sel = result.selected
    out = Path(args.out)
    summary = {
        "n_audited": len(bundles),
        "selected": {"margin": sel.margin, "t_det": sel.t_det,
                     "tau": sel.tau},
    }
    write_analysis(out / "audit_metrics.json", result.curve, summary, result)
    calibrated = config.with_params(margin=sel.margin, t_det=sel.t_det)
    calibrated.save(out / "checker_config_calibrated.yaml")
    print(f"searched {len(result.points)} grid points over "
          f"{len(bundles)} audited samples")
    print(f"selected margin={sel.margin} t_det={sel.t_det} tau={sel.tau} "
          f"(J={float(sel.j):.4f}, coverage={float(sel.coverage):.4f})")
    if sel.degenerate:
        print("warning: selected point had no covered human-decided "
              "samples; risk treated as 0", file=sys.stderr)
    print(f"-> {out / 'audit_metrics.json'}")
    print(f"-> {out / 'checker_config_calibrated.yaml'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_runs(sub, single: bool = False) -> None:
    sub.add_argument("--run", action="append", required=True,
                     help="run directory (repeatable)" if not single else
                     "run directory")
    sub.add_argument("--eval-subdir", default="eval",
                     help="evaluation subdirectory inside each run")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spatialeval",
        description="Uncertainty-aware checking of pairwise spatial "
                    "relations in generated images.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-prompts", help="write the prompt dataset")
    p.add_argument("--out", required=True, help="dataset root directory")
    p.add_argument("--pairs", help="object pair file (one 'a,b' per line)")
    p.add_argument("--template", help="JSON prompt template override")
    p.add_argument("--version", default="v1.0.1", dest="version",
                   help="dataset version tag")
    p.set_defaults(func=cmd_build_prompts)

    p = sub.add_parser("mock-gen", help="build a synthetic demo scenario")
    p.add_argument("--out", required=True)
    p.add_argument("--pairs", type=int, default=12,
                   help="object pairs to include")
    p.add_argument("--seeds", type=int, default=2, help="images per prompt")
    p.add_argument("--seed", type=int, default=7, help="scenario RNG seed")
    p.add_argument("--run-id", default="demo")
    p.set_defaults(func=cmd_mock_gen)

    p = sub.add_parser("evaluate", help="run detection + checking")
    p.add_argument("--manifest", required=True, help="manifest.jsonl path")
    p.add_argument("--prompts", required=True,
                   help="prompts.jsonl or its directory")
    p.add_argument("--config", help="checker config YAML")
    p.add_argument("--out", help="output directory (default: <run>/eval)")
    p.add_argument("--scenes", help="mock scene file (enables mock backends)")
    p.add_argument("--primary-backend",
                   help=f"primary detector command (or {PRIMARY_ENV})")
    p.add_argument("--secondary-backend",
                   help=f"secondary detector command (or {SECONDARY_ENV})")
    p.add_argument("--no-secondary", action="store_true",
                   help="skip the cross-detector agreement check")
    p.add_argument("--backend-timeout", type=float, default=60.0,
                   help="seconds to wait per detector response")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render tables and figures")
    _add_runs(p)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--baseline-subdir",
                   help="uncalibrated eval subdir for delta tables")
    p.add_argument("--audit-analysis",
                   help="audit_metrics.json (or its directory) for the "
                        "risk-coverage figure")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("audit-sample", help="draw a stratified audit sample")
    _add_runs(p)
    p.add_argument("--prompts", required=True)
    p.add_argument("--n", type=int, required=True, help="sample size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="sample CSV path")
    p.set_defaults(func=cmd_audit_sample)

    p = sub.add_parser("serve-audit", help="label the audit sample over HTTP")
    _add_runs(p)
    p.add_argument("--sample", required=True, help="sample CSV")
    p.add_argument("--labels", required=True,
                   help="label file to write (resumes if present)")
    p.add_argument("--ui-dir", help="static web UI directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve_audit)

    p = sub.add_parser("audit-analyze",
                       help="risk-coverage + error rates from labels")
    p.add_argument("--sample", required=True, help="sample CSV")
    p.add_argument("--labels", required=True, help="filled label file")
    p.add_argument("--tau", type=float, default=0.0,
                   help="confidence cutoff for the summary operating point")
    p.add_argument("--out", required=True, help="analysis directory")
    p.set_defaults(func=cmd_audit_analyze)

    p = sub.add_parser("calibrate",
                       help="grid-search margin/t_det/tau against labels")
    _add_runs(p)
    p.add_argument("--labels", required=True, help="filled label file")
    p.add_argument("--sample", help="sample CSV (restricts to audited ids)")
    p.add_argument("--config", help="base checker config YAML")
    p.add_argument("--grid", help="YAML/JSON grid override "
                                  "(margin/t_det/tau lists)")
    p.add_argument("--out", required=True, help="analysis directory")
    p.set_defaults(func=cmd_calibrate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BackendFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except SpatialEvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
