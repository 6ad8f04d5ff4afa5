"""Aggregation of checker outcomes under abstention semantics.

All ratios are exact fractions.Fraction values; rounding happens only at
rendering time. Confidences read back from disk are converted through
their decimal string so the mean is exact over the stored 6-decimal
values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .checker import FAIL, PASS, REASONS, UNDECIDABLE
from .errors import IntegrityError, ValidationError
from .prompts import RELATIONS


@dataclass(frozen=True)
class OutcomeRow:
    """The slice of one per-sample record that aggregation needs."""

    sample_id: str
    prompt_id: str
    method: str
    seed: int
    relation: str
    verdict: str
    reason: str | None
    confidence: Fraction
    image: str = ""

    @classmethod
    def from_dict(cls, data: dict) -> "OutcomeRow":
        return cls(
            sample_id=data["sample_id"],
            prompt_id=data["prompt_id"],
            method=data["method"],
            seed=int(data["seed"]),
            relation=data["relation"],
            verdict=data["verdict"],
            reason=data.get("reason"),
            confidence=exact(data["confidence"]),
            image=data.get("image", ""),
        )


def exact(value) -> Fraction:
    """Fraction through the decimal string, so 0.78 means 78/100."""
    if isinstance(value, Fraction):
        return value
    return Fraction(str(value))


def frac_json(value: Fraction | None) -> dict | None:
    """JSON view of an exact ratio: float for plotting, string for audit."""
    if value is None:
        return None
    return {"value": float(value),
            "exact": f"{value.numerator}/{value.denominator}"}


def load_rows(path: str | Path) -> list[OutcomeRow]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(OutcomeRow.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValidationError(f"{path}:{line_no}: bad outcome: {exc}")
    return rows


# ---------------------------------------------------------------------------
# Per-image metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MethodMetrics:
    n: int
    n_pass: int
    n_fail: int
    n_undecidable: int
    pass_rate: Fraction
    coverage: Fraction
    pass_rate_cond: Fraction | None
    mean_confidence: Fraction


def per_image_metrics(rows: list[OutcomeRow]) -> MethodMetrics:
    if not rows:
        raise ValidationError("cannot aggregate an empty outcome list")
    n = len(rows)
    n_pass = sum(1 for r in rows if r.verdict == PASS)
    n_fail = sum(1 for r in rows if r.verdict == FAIL)
    n_und = n - n_pass - n_fail
    decided = n_pass + n_fail
    cond = Fraction(n_pass, decided) if decided else None
    mean_conf = sum((r.confidence for r in rows), Fraction(0)) / n
    return MethodMetrics(
        n=n, n_pass=n_pass, n_fail=n_fail, n_undecidable=n_und,
        pass_rate=Fraction(n_pass, n),
        coverage=Fraction(decided, n),
        pass_rate_cond=cond,
        mean_confidence=mean_conf,
    )


# ---------------------------------------------------------------------------
# Prompt-level metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PromptLevelMetrics:
    prompts: int
    k: int
    best_of_k_rate: Fraction
    all_of_k_rate: Fraction


def group_by_prompt(rows: list[OutcomeRow]) -> dict[str, list[OutcomeRow]]:
    groups: dict[str, list[OutcomeRow]] = {}
    for row in rows:
        groups.setdefault(row.prompt_id, []).append(row)
    return groups


def prompt_metrics(rows: list[OutcomeRow],
                   k: int | None = None) -> PromptLevelMetrics:
    """Best-of-K and all-of-K PASS rates over prompts.

    K may be supplied or inferred; every prompt must have exactly K
    outcomes either way.
    """
    groups = group_by_prompt(rows)
    if not groups:
        raise ValidationError("no outcomes to group by prompt")
    sizes = {len(g) for g in groups.values()}
    if k is None:
        if len(sizes) != 1:
            raise IntegrityError(f"uneven seeds per prompt: {sorted(sizes)}")
        k = sizes.pop()
    else:
        bad = {pid: len(g) for pid, g in groups.items() if len(g) != k}
        if bad:
            raise IntegrityError(f"prompts without exactly {k} seeds: {bad}")
    best = sum(1 for g in groups.values()
               if any(r.verdict == PASS for r in g))
    strict = sum(1 for g in groups.values()
                 if all(r.verdict == PASS for r in g))
    p = len(groups)
    return PromptLevelMetrics(prompts=p, k=k,
                              best_of_k_rate=Fraction(best, p),
                              all_of_k_rate=Fraction(strict, p))


# ---------------------------------------------------------------------------
# Counterfactual consistency
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CounterfactualMetrics:
    pairs: int
    both_pass_rate: Fraction
    undecidable_mass: Fraction
    one_sided_rate: Fraction


def reduce_prompt_verdict(rows: list[OutcomeRow]) -> str:
    """Best-of-K style reduction: PASS beats FAIL beats UNDECIDABLE."""
    verdicts = {r.verdict for r in rows}
    if PASS in verdicts:
        return PASS
    if FAIL in verdicts:
        return FAIL
    return UNDECIDABLE


def counterfactual_metrics(rows: list[OutcomeRow],
                           pairing: dict[str, str]) -> CounterfactualMetrics:
    """Bucket each counterfactual prompt pair into exactly one of three bins.

    Any UNDECIDABLE side puts the pair in the undecidable bucket; both
    PASS is both_pass; every remaining combination (one decided side
    contradicting the other, including FAIL+FAIL) counts as one_sided
    disagreement with the prompt's claim.
    """
    groups = group_by_prompt(rows)
    reduced = {pid: reduce_prompt_verdict(g) for pid, g in groups.items()}
    seen: set[frozenset] = set()
    both = und = one = 0
    for pid in sorted(groups):
        partner = pairing.get(pid)
        if partner is None:
            raise IntegrityError(f"prompt {pid} has no counterfactual partner")
        if partner not in reduced:
            raise IntegrityError(
                f"prompt {pid}: partner {partner!r} has no outcomes")
        key = frozenset((pid, partner))
        if key in seen:
            continue
        seen.add(key)
        a, b = reduced[pid], reduced[partner]
        if UNDECIDABLE in (a, b):
            und += 1
        elif a == PASS and b == PASS:
            both += 1
        else:
            one += 1
    pairs = len(seen)
    if pairs == 0:
        raise ValidationError("no counterfactual pairs to score")
    return CounterfactualMetrics(
        pairs=pairs,
        both_pass_rate=Fraction(both, pairs),
        undecidable_mass=Fraction(und, pairs),
        one_sided_rate=Fraction(one, pairs),
    )


# ---------------------------------------------------------------------------
# Abstention breakdown and by-relation slices
# ---------------------------------------------------------------------------

def abstention_breakdown(rows: list[OutcomeRow]) -> dict[str, Fraction]:
    """Share of ALL outcomes abstaining for each reason.

    The values sum exactly to 1 - coverage.
    """
    n = len(rows)
    out = {reason: Fraction(0) for reason in REASONS}
    if n == 0:
        return out
    for row in rows:
        if row.verdict == UNDECIDABLE:
            if row.reason not in out:
                raise ValidationError(
                    f"{row.sample_id}: unknown abstention reason {row.reason!r}")
            out[row.reason] += Fraction(1, n)
    return out


def by_relation_metrics(rows: list[OutcomeRow]) -> dict[str, MethodMetrics]:
    """Per-image metrics restricted to each relation with any outcomes."""
    out = {}
    for relation in RELATIONS:
        subset = [r for r in rows if r.relation == relation]
        if subset:
            out[relation] = per_image_metrics(subset)
    return out


def group_by_method(rows: list[OutcomeRow]) -> dict[str, list[OutcomeRow]]:
    groups: dict[str, list[OutcomeRow]] = {}
    for row in rows:
        groups.setdefault(row.method, []).append(row)
    return groups
