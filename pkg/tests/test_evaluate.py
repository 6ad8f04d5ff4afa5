import json
import random

import pytest

from scenegen import bundle_from_scene, random_scene
from spatialeval.backends import InProcessMockBackend, MockScenes
from spatialeval.checker import CheckerConfig, check_bundle
from spatialeval.errors import IntegrityError, ValidationError
from spatialeval.evaluate import (
    bundle_from_json,
    bundle_to_json,
    evaluate_run,
    load_bundles,
    load_manifest,
    metrics_payload,
    sample_id_for,
    validate_manifest,
    write_detections_cache,
    write_eval_dir,
)
from spatialeval.prompts import PromptTemplate, build_prompts

CFG = CheckerConfig()


def write_manifest(path, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
    return path


@pytest.fixture
def prompts():
    return build_prompts([("cat", "dog")], PromptTemplate())[0]


def far_apart(label_a, label_b, correct, relation="left_of"):
    a_box = [50, 200, 150, 300]
    b_box = [350, 200, 450, 300]
    if relation in ("above", "below"):
        a_box = [200, 50, 300, 150]
        b_box = [200, 350, 300, 450]
    boxes = (a_box, b_box)
    if (relation in ("right_of", "below")) == correct:
        boxes = (b_box, a_box)
    return [{"label": label_a, "score": 0.9, "box": boxes[0]},
            {"label": label_b, "score": 0.8, "box": boxes[1]}]


@pytest.fixture
def scenario(tmp_path, prompts):
    """Four prompts x two seeds; images i*.png; one scripted primary crash."""
    images = {}
    records = []
    for prompt in prompts:
        for seed in (0, 1):
            name = f"{prompt.prompt_id}_s{seed}.png"
            correct = seed == 0
            dets = far_apart(prompt.object_a, prompt.object_b, correct,
                             prompt.relation)
            entry = {"width": 512, "height": 512,
                     "p": {"none": {"detections": dets}},
                     "s": {"none": {"detections": dets}}}
            if prompt.prompt_id == "000_below" and seed == 1:
                entry["p"] = {"none": {"error": "boom"}}
            if prompt.prompt_id == "000_above" and seed == 1:
                entry["s"] = {"none": {"error": "sec down"}}
            images[name] = entry
            (tmp_path / name).write_bytes(b"png")
            records.append({"prompt_id": prompt.prompt_id, "seed": seed,
                            "image": name, "method": "mm"})
    # one record whose image file is absent from disk
    images["000_left_of_s9.png"] = images["000_left_of_s0.png"]
    scenes = MockScenes(detectors={"p": {"score_floor": 0.1},
                                   "s": {"score_floor": 0.1}},
                        images=images)
    manifest = write_manifest(tmp_path / "manifest.jsonl", records)
    return {"dir": tmp_path, "manifest": manifest, "scenes": scenes}


class TestManifest:
    def test_load_resolves_relative_paths(self, scenario):
        records = load_manifest(scenario["manifest"])
        assert len(records) == 8
        assert records[0].image.endswith(".png")
        assert str(scenario["dir"]) in records[0].resolved()

    def test_sample_id(self, scenario):
        records = load_manifest(scenario["manifest"])
        r = records[0]
        assert sample_id_for(r) == f"mm:{r.prompt_id}:s{r.seed}"

    def test_duplicate_seed_rejected(self, tmp_path, prompts):
        records = [{"prompt_id": "000_left_of", "seed": 0, "image": "x.png",
                    "method": "m"}] * 2
        path = write_manifest(tmp_path / "m.jsonl", records)
        with pytest.raises(IntegrityError, match="duplicate"):
            validate_manifest(load_manifest(path), prompts)

    def test_unknown_prompt_rejected(self, tmp_path, prompts):
        records = [{"prompt_id": "777_left_of", "seed": 0, "image": "x.png",
                    "method": "m"}]
        path = write_manifest(tmp_path / "m.jsonl", records)
        with pytest.raises(IntegrityError, match="unknown prompt"):
            validate_manifest(load_manifest(path), prompts)

    def test_mixed_methods_rejected(self, tmp_path, prompts):
        records = [{"prompt_id": "000_left_of", "seed": 0, "image": "x.png",
                    "method": "m1"},
                   {"prompt_id": "000_right_of", "seed": 0, "image": "x.png",
                    "method": "m2"}]
        path = write_manifest(tmp_path / "m.jsonl", records)
        with pytest.raises(IntegrityError, match="method"):
            validate_manifest(load_manifest(path), prompts)

    def test_uneven_seeds_rejected(self, tmp_path, prompts):
        records = [{"prompt_id": "000_left_of", "seed": s, "image": "x.png",
                    "method": "m"} for s in (0, 1)]
        records.append({"prompt_id": "000_right_of", "seed": 0,
                        "image": "x.png", "method": "m"})
        path = write_manifest(tmp_path / "m.jsonl", records)
        with pytest.raises(IntegrityError, match="seed"):
            validate_manifest(load_manifest(path), prompts)

    def test_empty_rejected(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text("")
        with pytest.raises(ValidationError):
            load_manifest(path)


class TestEvaluateRun:
    def run(self, scenario, prompts, with_secondary=True):
        primary = InProcessMockBackend(scenario["scenes"], "p")
        secondary = InProcessMockBackend(scenario["scenes"], "s") \
            if with_secondary else None
        records = load_manifest(scenario["manifest"])
        return evaluate_run(records, prompts, CFG, primary, secondary)

    def test_counts_and_order(self, scenario, prompts):
        result = self.run(scenario, prompts)
        # 8 records, one primary crash skipped
        assert len(result.outcomes) == 7
        assert len(result.skipped) == 1
        assert "primary backend" in result.skipped[0]["error"]
        ids = [o.sample.sample_id for o in result.outcomes]
        assert ids == sorted(ids)

    def test_seed0_passes_seed1_fails(self, scenario, prompts):
        result = self.run(scenario, prompts)
        by_id = {o.sample.sample_id: o for o in result.outcomes}
        assert by_id["mm:000_left_of:s0"].verdict == "PASS"
        assert by_id["mm:000_left_of:s1"].verdict == "FAIL"

    def test_missing_image_skipped(self, scenario, prompts, tmp_path):
        records = load_manifest(scenario["manifest"])
        extra = [{"prompt_id": r.prompt_id, "seed": 9, "image": "gone.png",
                  "method": "mm"} for r in records if r.seed == 0]
        with open(scenario["manifest"], "a") as fh:
            for r in extra:
                fh.write(json.dumps(r) + "\n")
        result = self.run(scenario, prompts)
        skipped_ids = {s["sample_id"] for s in result.skipped}
        assert any("s9" in sid for sid in skipped_ids)
        assert all("missing image" in s["error"] or "primary" in s["error"]
                   for s in result.skipped)

    def test_secondary_failure_recorded_not_fatal(self, scenario, prompts):
        result = self.run(scenario, prompts)
        by_id = {o.sample.sample_id: o for o in result.outcomes}
        out = by_id["mm:000_above:s1"]
        assert out.secondary_verdict == "BACKEND_FAILURE"
        assert out.verdict in ("PASS", "FAIL", "UNDECIDABLE")

    def test_no_secondary_run(self, scenario, prompts):
        result = self.run(scenario, prompts, with_secondary=False)
        assert all(o.secondary_verdict is None for o in result.outcomes)


class TestDetectionCache:
    def test_bundle_json_round_trip(self):
        rng = random.Random(3)
        for i in range(100):
            scene, _ = random_scene(rng, i)
            bundle = bundle_from_scene(scene)
            assert bundle_from_json(bundle_to_json(bundle)) == bundle

    def test_cached_recheck_equals_live(self):
        """The calibration path (cache -> check) must reproduce the live
        path (backend -> check) exactly, config changes included."""
        rng = random.Random(4)
        for i in range(100):
            scene, config = random_scene(rng, i)
            live = bundle_from_scene(scene)
            cached = bundle_from_json(bundle_to_json(live))
            for variant in (config, config.with_params(margin=0.05),
                            config.with_params(t_det=0.3)):
                a = check_bundle(live, variant)
                b = check_bundle(cached, variant)
                assert a == b

    def test_cache_file_round_trip(self, tmp_path):
        rng = random.Random(5)
        bundles = []
        for i in range(10):
            scene, _ = random_scene(rng, i)
            bundles.append(bundle_from_scene(scene))
        path = tmp_path / "detections.jsonl"
        write_detections_cache(bundles, path)
        loaded = load_bundles(path)
        assert len(loaded) == 10
        for b in bundles:
            assert loaded[b.sample.sample_id] == b


class TestEvalDir:
    def test_artifacts_written(self, scenario, prompts, tmp_path):
        primary = InProcessMockBackend(scenario["scenes"], "p")
        secondary = InProcessMockBackend(scenario["scenes"], "s")
        records = load_manifest(scenario["manifest"])
        result = evaluate_run(records, prompts, CFG, primary, secondary)
        out = tmp_path / "eval"
        write_eval_dir(out, result, CFG, prompts, primary, secondary,
                       dataset_digest="abc123")
        for name in ("per_sample.jsonl", "detections.jsonl", "metrics.json",
                     "provenance.json", "checker_config.yaml"):
            assert (out / name).is_file(), name
        prov = json.loads((out / "provenance.json").read_text())
        assert prov["dataset_digest"] == "abc123"
        assert prov["config_digest"] == CFG.digest()
        assert prov["n_evaluated"] == 7
        assert prov["n_skipped"] == 1
        assert {b["detector_id"]
                for b in prov["backends"].values()} == {"p", "s"}
        lines = (out / "per_sample.jsonl").read_text().splitlines()
        assert len(lines) == 7
        row = json.loads(lines[0])
        assert row["config_digest"] == CFG.digest()

    def test_metrics_payload_survives_skips(self, scenario, prompts):
        """A skipped record leaves its prompt short of K; prompt-level
        rates must drop that prompt instead of refusing to aggregate."""
        primary = InProcessMockBackend(scenario["scenes"], "p")
        records = load_manifest(scenario["manifest"])
        result = evaluate_run(records, prompts, CFG, primary, None)
        assert len(result.skipped) == 1
        payload = metrics_payload(result.outcomes, prompts, result.k)
        assert payload["n"] == 7
        cond = payload["pass_rate_cond"]
        assert payload["pass_rate"]["value"] == pytest.approx(
            payload["coverage"]["value"] * (cond["value"] if cond else 0.0))
        assert payload["prompt"]["k"] == 2
        assert payload["prompt"]["prompts"] == 3
        assert payload["prompt"]["prompts_excluded"] == 1
        # the crashed sample's prompt is still present on its other seed,
        # so the counterfactual pairing stays complete
        assert payload["counterfactual"] is not None