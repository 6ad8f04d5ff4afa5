import json

import pytest

from spatialeval.errors import IntegrityError, ValidationError
from spatialeval.prompts import (
    INVERSE_RELATION,
    RELATIONS,
    PromptTemplate,
    build_prompts,
    default_pairs,
    hash_dataset,
    load_pairs,
    load_prompts,
    render_jsonl,
    validate_dataset,
    write_dataset,
)

PAIRS = [("cat", "chair"), ("bus", "laptop"), ("zebra", "dog")]


@pytest.fixture
def built():
    return build_prompts(PAIRS, PromptTemplate())


def test_counts(built):
    prompt_set, meta = built
    assert len(prompt_set) == len(PAIRS) * 4
    assert meta.object_pairs == len(PAIRS)
    assert meta.counterfactual_pairs == len(PAIRS) * 2
    assert meta.prompts_per_relation == len(PAIRS)


def test_prompt_ids_and_text(built):
    prompt_set, _ = built
    first = prompt_set.get("000_left_of")
    assert first.object_a == "cat"
    assert first.object_b == "chair"
    assert first.text == "A photo of a cat to the left of a chair."
    # non-canonical relations swap roles instead of inventing new pairs
    right = prompt_set.get("000_right_of")
    assert right.object_a == "chair"
    assert right.object_b == "cat"
    assert right.text == "A photo of a chair to the right of a cat."


def test_counterfactual_is_involution(built):
    prompt_set, _ = built
    for record in prompt_set:
        partner = prompt_set.counterfactual_of(record)
        assert prompt_set.counterfactual_of(partner) is record
        assert partner.prompt_id != record.prompt_id
        assert partner.relation == INVERSE_RELATION[record.relation]
        # same scene described from the other side
        assert (partner.object_a, partner.object_b) == \
            (record.object_b, record.object_a)


def test_axis_groups(built):
    prompt_set, _ = built
    for record in prompt_set:
        expected = "horizontal" if record.relation in ("left_of", "right_of") \
            else "vertical"
        assert record.axis_group == expected


def test_rejects_identical_labels():
    with pytest.raises(ValidationError, match="pair 1"):
        build_prompts([("cat", "dog"), ("sofa", "sofa")], PromptTemplate())


def test_rejects_duplicate_unordered_pairs():
    with pytest.raises(ValidationError, match="duplicate"):
        build_prompts([("cat", "dog"), ("dog", "cat")], PromptTemplate())


def test_build_is_deterministic(built):
    again = build_prompts(PAIRS, PromptTemplate())
    assert render_jsonl(again[0]) == render_jsonl(built[0])
    assert again[1].content_digest == built[1].content_digest


def test_write_and_load_round_trip(built, tmp_path):
    prompt_set, meta = built
    paths = write_dataset(tmp_path / "v1", prompt_set, meta)
    loaded = load_prompts(paths["prompts"])
    assert [r.as_dict() for r in loaded] == [r.as_dict() for r in prompt_set]
    digest_line = (tmp_path / "v1" / "sha256.txt").read_text()
    assert digest_line.split()[0] == hash_dataset(paths["prompts"])
    meta_data = json.loads((tmp_path / "v1" / "dataset_meta.json").read_text())
    assert meta_data["total_prompts"] == len(prompt_set)


def test_validate_clean_dataset(built):
    prompt_set, meta = built
    assert validate_dataset(prompt_set, meta) == []


def test_validate_catches_broken_counterfactual(built, tmp_path):
    prompt_set, meta = built
    records = [r.as_dict() for r in prompt_set]
    records[0]["counterfactual_id"] = records[0]["prompt_id"]  # self link
    path = tmp_path / "broken.jsonl"
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
    broken = load_prompts(path)
    violations = validate_dataset(broken, meta)
    assert violations
    assert any("counterfactual" in v for v in violations)


def test_counterfactual_of_dangling_raises(built, tmp_path):
    prompt_set, _ = built
    records = [r.as_dict() for r in prompt_set][:1]
    records[0]["counterfactual_id"] = "999_left_of"
    path = tmp_path / "dangling.jsonl"
    path.write_text(json.dumps(records[0]) + "\n")
    loaded = load_prompts(path)
    with pytest.raises(IntegrityError):
        loaded.counterfactual_of(loaded.get(records[0]["prompt_id"]))


def test_load_pairs(tmp_path):
    path = tmp_path / "pairs.txt"
    path.write_text("# comment\ncat,chair\n\nbus , laptop\n")
    assert load_pairs(path) == [("cat", "chair"), ("bus", "laptop")]


def test_load_pairs_rejects_bad_line(tmp_path):
    path = tmp_path / "pairs.txt"
    path.write_text("cat chair\n")
    with pytest.raises(ValidationError):
        load_pairs(path)


def test_default_pairs_shape():
    pairs = default_pairs()
    assert len(pairs) == 50
    assert all(a != b for a, b in pairs)
    unordered = {frozenset(p) for p in pairs}
    assert len(unordered) == 50  # no duplicates in either order


def test_default_dataset_is_paper_sized():
    prompt_set, meta = build_prompts(default_pairs(), PromptTemplate())
    assert meta.total_prompts == 200
    assert meta.counterfactual_pairs == 100
    per_relation = {rel: 0 for rel in RELATIONS}
    for r in prompt_set:
        per_relation[r.relation] += 1
    assert set(per_relation.values()) == {50}


def test_custom_template():
    template = PromptTemplate(pattern="{a} is {rel} {b}",
                              relation_phrases={"left_of": "left of",
                                                "right_of": "right of",
                                                "above": "over",
                                                "below": "under"})
    prompt_set, _ = build_prompts([("cat", "rug")], template)
    assert prompt_set.get("000_above").text == "cat is over rug"
