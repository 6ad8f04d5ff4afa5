"""Versioned benchmark prompt set with counterfactual pairing.

Each unordered object pair expands into four prompts, one per relation.
The two horizontal prompts describe the same scene with roles swapped
("A left of B" / "B right of A"), as do the two vertical ones, so
counterfactual linkage is a perfect involution inside each pair block.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import IntegrityError, ValidationError

RELATIONS = ("left_of", "right_of", "above", "below")

INVERSE_RELATION = {
    "left_of": "right_of",
    "right_of": "left_of",
    "above": "below",
    "below": "above",
}

AXIS_GROUP = {
    "left_of": "horizontal",
    "right_of": "horizontal",
    "above": "vertical",
    "below": "vertical",
}

# Relations whose prompt keeps the pair's input order; the inverse relation
# swaps roles so each pair block closes under counterfactual linkage.
_CANONICAL = {"left_of", "above"}

DEFAULT_RELATION_PHRASES = {
    "left_of": "to the left of",
    "right_of": "to the right of",
    "above": "above",
    "below": "below",
}

DEFAULT_PATTERN = "A photo of a {a} {rel} a {b}."

PROMPT_KEYS = ("prompt_id", "object_a", "object_b", "relation", "text",
               "pair_id", "counterfactual_id", "axis_group")


@dataclass(frozen=True)
class PromptTemplate:
    pattern: str = DEFAULT_PATTERN
    relation_phrases: dict[str, str] | None = None

    def phrase(self, relation: str) -> str:
        phrases = self.relation_phrases or DEFAULT_RELATION_PHRASES
        return phrases[relation]

    def render(self, object_a: str, relation: str, object_b: str) -> str:
        return self.pattern.format(a=object_a, rel=self.phrase(relation),
                                   b=object_b)

    @classmethod
    def load(cls, path: str | Path) -> "PromptTemplate":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(pattern=data.get("pattern", DEFAULT_PATTERN),
                   relation_phrases=data.get("relation_phrases"))


@dataclass(frozen=True)
class PromptRecord:
    prompt_id: str
    object_a: str
    object_b: str
    relation: str
    text: str
    pair_id: str
    counterfactual_id: str
    axis_group: str

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in PROMPT_KEYS}


@dataclass(frozen=True)
class DatasetMeta:
    version: str
    total_prompts: int
    object_pairs: int
    counterfactual_pairs: int
    prompts_per_relation: int
    unique_objects: int
    content_digest: str

    def as_dict(self) -> dict:
        return {
            "version": self.version,
            "total_prompts": self.total_prompts,
            "object_pairs": self.object_pairs,
            "counterfactual_pairs": self.counterfactual_pairs,
            "prompts_per_relation": self.prompts_per_relation,
            "unique_objects": self.unique_objects,
            "content_digest": self.content_digest,
        }


class PromptSet:
    def __init__(self, records: list[PromptRecord]):
        self.records = list(records)
        self._by_id = {r.prompt_id: r for r in self.records}
        if len(self._by_id) != len(self.records):
            raise IntegrityError("duplicate prompt ids")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def get(self, prompt_id: str) -> PromptRecord:
        return self._by_id[prompt_id]

    def counterfactual_of(self, record: PromptRecord) -> PromptRecord:
        partner = self._by_id.get(record.counterfactual_id)
        if partner is None:
            raise IntegrityError(
                f"{record.prompt_id}: dangling counterfactual_id "
                f"{record.counterfactual_id!r}")
        return partner

    def pairing(self) -> dict[str, str]:
        return {r.prompt_id: r.counterfactual_id for r in self.records}


def build_prompts(pairs: list[tuple[str, str]], template: PromptTemplate,
                  version: str = "v1.0.1") -> tuple[PromptSet, DatasetMeta]:
    """Expand unordered object pairs into the full counterfactually-paired set.

    Ordering is deterministic: input pair order, then relation order
    left_of, right_of, above, below.
    """
    seen: dict[frozenset, int] = {}
    for i, (a, b) in enumerate(pairs):
        if a == b:
            raise ValidationError(f"pair {i}: identical labels ({a!r})")
        key = frozenset((a, b))
        if key in seen:
            raise ValidationError(
                f"pair {i}: duplicate of pair {seen[key]} ({a!r}, {b!r})")
        seen[key] = i

    records: list[PromptRecord] = []
    for i, (a, b) in enumerate(pairs):
        pair_id = f"{i:03d}"
        for relation in RELATIONS:
            obj_a, obj_b = (a, b) if relation in _CANONICAL else (b, a)
            records.append(PromptRecord(
                prompt_id=f"{pair_id}_{relation}",
                object_a=obj_a,
                object_b=obj_b,
                relation=relation,
                text=template.render(obj_a, relation, obj_b),
                pair_id=pair_id,
                counterfactual_id=f"{pair_id}_{INVERSE_RELATION[relation]}",
                axis_group=AXIS_GROUP[relation],
            ))

    prompt_set = PromptSet(records)
    content = render_jsonl(prompt_set)
    unique = {obj for a, b in pairs for obj in (a, b)}
    meta = DatasetMeta(
        version=version,
        total_prompts=len(records),
        object_pairs=len(pairs),
        counterfactual_pairs=2 * len(pairs),
        prompts_per_relation=len(pairs),
        unique_objects=len(unique),
        content_digest=hashlib.sha256(content.encode("utf-8")).hexdigest(),
    )
    return prompt_set, meta


def render_jsonl(prompt_set: PromptSet) -> str:
    """Canonical prompt file: one record per line, fixed key order, LF."""
    lines = [json.dumps(r.as_dict(), ensure_ascii=False) for r in prompt_set]
    return "\n".join(lines) + "\n"


def hash_dataset(path: str | Path) -> str:
    """SHA-256 of the exact file bytes, lowercase hex."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def validate_dataset(prompt_set: PromptSet, meta: DatasetMeta,
                     template: PromptTemplate | None = None) -> list[str]:
    """Check every record- and meta-level invariant; return violations."""
    violations: list[str] = []
    by_id = {r.prompt_id: r for r in prompt_set}

    for r in prompt_set:
        if r.relation not in RELATIONS:
            violations.append(f"{r.prompt_id}: unknown relation {r.relation!r}")
            continue
        if r.object_a == r.object_b:
            violations.append(f"{r.prompt_id}: identical objects")
        if r.axis_group != AXIS_GROUP[r.relation]:
            violations.append(f"{r.prompt_id}: axis_group mismatch")
        if template is not None:
            expected = template.render(r.object_a, r.relation, r.object_b)
            if r.text != expected:
                violations.append(f"{r.prompt_id}: text not rendered from template")
        partner = by_id.get(r.counterfactual_id)
        if partner is None:
            violations.append(
                f"{r.prompt_id}: dangling counterfactual {r.counterfactual_id!r}")
            continue
        if partner.prompt_id == r.prompt_id:
            violations.append(f"{r.prompt_id}: self-linked counterfactual")
            continue
        if partner.counterfactual_id != r.prompt_id:
            violations.append(f"{r.prompt_id}: counterfactual link not mutual")
        if partner.relation != INVERSE_RELATION.get(r.relation):
            violations.append(f"{r.prompt_id}: non-inverse counterfactual")
        if (partner.object_a, partner.object_b) != (r.object_b, r.object_a):
            violations.append(f"{r.prompt_id}: counterfactual objects not swapped")

    relation_counts = {rel: 0 for rel in RELATIONS}
    for r in prompt_set:
        if r.relation in relation_counts:
            relation_counts[r.relation] += 1

    n = meta.object_pairs
    checks = [
        ("total_prompts", meta.total_prompts, 4 * n),
        ("counterfactual_pairs", meta.counterfactual_pairs, 2 * n),
        ("prompts_per_relation", meta.prompts_per_relation, n),
    ]
    for name, claimed, expected in checks:
        if claimed != expected:
            violations.append(
                f"meta: count mismatch for {name}: {claimed} != {expected}")
    if meta.total_prompts != len(prompt_set):
        violations.append(
            f"meta: total_prompts {meta.total_prompts} != {len(prompt_set)} records")
    for rel, count in relation_counts.items():
        if count != meta.prompts_per_relation:
            violations.append(
                f"meta: relation {rel} has {count} prompts, "
                f"expected {meta.prompts_per_relation}")
    unique = {obj for r in prompt_set for obj in (r.object_a, r.object_b)}
    if meta.unique_objects != len(unique):
        violations.append(
            f"meta: unique_objects {meta.unique_objects} != {len(unique)}")
    return violations


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def load_pairs(path: str | Path) -> list[tuple[str, str]]:
    """Pairs file: one 'label_a,label_b' per line, '#' comments allowed."""
    pairs: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2 or not all(parts):
                raise ValidationError(f"{path}:{line_no}: expected 'a,b'")
            pairs.append((parts[0], parts[1]))
    return pairs


def default_pairs() -> list[tuple[str, str]]:
    text = resources.files("spatialeval").joinpath("data/default_pairs.txt") \
        .read_text(encoding="utf-8")
    pairs = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        a, b = (p.strip() for p in line.split(","))
        pairs.append((a, b))
    return pairs


def write_dataset(out_dir: str | Path, prompt_set: PromptSet,
                  meta: DatasetMeta) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prompts_path = out / "prompts.jsonl"
    with open(prompts_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_jsonl(prompt_set))
    meta_path = out / "dataset_meta.json"
    with open(meta_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta.as_dict(), fh, indent=2)
        fh.write("\n")
    sha_path = out / "sha256.txt"
    with open(sha_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{meta.content_digest}  prompts.jsonl\n")
    return {"prompts": prompts_path, "meta": meta_path, "sha256": sha_path}


def load_prompts(path: str | Path) -> PromptSet:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                records.append(PromptRecord(**{k: data[k] for k in PROMPT_KEYS}))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValidationError(f"{path}:{line_no}: bad prompt record: {exc}")
    return PromptSet(records)
