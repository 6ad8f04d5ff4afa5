"""Synthetic end-to-end scenario builder.

Emits everything a demo or integration test needs: a prompt subset, PNG
images with the planted layout drawn in, a scene file for the mock
detector backend, per-method run manifests, and synthetic annotator
labels. Every byte is a deterministic function of the seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from PIL import Image, ImageDraw

from .backends import MockScenes
from .prompts import (
    AXIS_GROUP,
    PromptRecord,
    PromptSet,
    PromptTemplate,
    build_prompts,
    default_pairs,
    write_dataset,
)

PRIMARY_ID = "mock-primary"
SECONDARY_ID = "mock-secondary"
PRIMARY_FLOOR = 0.1
SECONDARY_FLOOR = 0.1

METHODS = ("mock_promptonly", "mock_boxdiff", "mock_gligen")

# Planted-outcome mix per method; grounded methods succeed more and lose
# fewer objects, mirroring how real generators differ.
_MIX = {
    "mock_promptonly": (("pass", 15), ("fail", 15), ("missing", 40),
                        ("ambiguous", 10), ("high_overlap", 5),
                        ("near_boundary", 10), ("unstable", 5)),
    "mock_boxdiff": (("pass", 45), ("fail", 8), ("missing", 25),
                     ("ambiguous", 8), ("high_overlap", 4),
                     ("near_boundary", 7), ("unstable", 3)),
    "mock_gligen": (("pass", 60), ("fail", 5), ("missing", 20),
                    ("ambiguous", 5), ("high_overlap", 3),
                    ("near_boundary", 5), ("unstable", 2)),
}

SIZE = 512

_BG = {"mock_promptonly": (238, 234, 228), "mock_boxdiff": (228, 238, 232),
       "mock_gligen": (230, 232, 242)}


def _choice(rng: random.Random, mix) -> str:
    total = sum(w for _, w in mix)
    roll = rng.randrange(total)
    acc = 0
    for name, weight in mix:
        acc += weight
        if roll < acc:
            return name
    return mix[-1][0]


def _box_around(cx: float, cy: float, w: float, h: float) -> list[float]:
    return [round(cx - w / 2, 1), round(cy - h / 2, 1),
            round(cx + w / 2, 1), round(cy + h / 2, 1)]


def _centers(relation: str, correct: bool, rng: random.Random):
    """Centers for A and B achieving |d| ~ 0.4-0.56 with the right sign."""
    near = 128 + rng.randrange(-25, 26)
    far = 384 + rng.randrange(-25, 26)
    mid_a = 256 + rng.randrange(-80, 81)
    mid_b = 256 + rng.randrange(-80, 81)
    if AXIS_GROUP[relation] == "horizontal":
        a, b = ((near, mid_a), (far, mid_b))
        if (relation == "right_of") == correct:
            a, b = b, a
    else:
        a, b = ((mid_a, near), (mid_b, far))
        if (relation == "below") == correct:
            a, b = b, a
    return a, b


@dataclass
class _Scene:
    primary: dict            # tag -> {"detections": [...]} scripted entries
    secondary: dict          # {"detections": [...]} or {"error": "..."}
    truth: str               # synthetic annotator verdict
    boxes: dict              # label -> box drawn into the image


def _score(rng: random.Random) -> float:
    return round(rng.uniform(0.55, 0.95), 2)


def _entry(dets: list[dict]) -> dict:
    return {"detections": dets}


def _det(label: str, score: float, box: list[float]) -> dict:
    return {"label": label, "score": score, "box": box}


def _secondary_for(rng: random.Random, dets: list[dict],
                   verdict_hint: str) -> tuple[dict, bool]:
    """Secondary detector view: usually agrees, sometimes abstains/crashes."""
    roll = rng.random()
    if roll < 0.85:
        jittered = []
        for d in dets:
            x1, y1, x2, y2 = d["box"]
            dx, dy = rng.uniform(-4, 4), rng.uniform(-4, 4)
            jittered.append(_det(d["label"], min(0.99, round(d["score"] + 0.02, 2)),
                                 [round(x1 + dx, 1), round(y1 + dy, 1),
                                  round(x2 + dx, 1), round(y2 + dy, 1)]))
        return _entry(jittered), True
    if roll < 0.95:
        return _entry(dets[:1]), False  # one object only: secondary abstains
    return {"error": "simulated inference crash"}, False


def _plant(kind: str, prompt: PromptRecord, rng: random.Random,
           perturbation_tags: list[str]) -> _Scene:
    a, b = prompt.object_a, prompt.object_b
    relation = prompt.relation
    dims = (rng.randrange(80, 140), rng.randrange(80, 140))
    size_a = (dims[0], rng.randrange(80, 140))
    size_b = (dims[1], rng.randrange(80, 140))

    if kind in ("pass", "fail", "unstable"):
        correct = kind != "fail"
        ca, cb = _centers(relation, correct, rng)
        box_a = _box_around(*ca, *size_a)
        box_b = _box_around(*cb, *size_b)
        dets = [_det(a, _score(rng), box_a), _det(b, _score(rng), box_b)]
        primary = {"none": _entry(dets)}
        if kind == "unstable":
            for tag in perturbation_tags[:3]:
                primary[tag] = _entry(dets[:1])  # B vanishes under perturbation
        elif rng.random() < 0.3:
            primary[perturbation_tags[0]] = _entry(dets[:1])  # flaky, still stable
        secondary, sec_ok = _secondary_for(rng, dets, kind)
        base_verdict = "PASS" if correct else "FAIL"
        if kind == "unstable":
            truth = base_verdict if rng.random() < 0.6 else "UNDECIDABLE"
        else:
            truth = base_verdict
            if rng.random() < 0.08:
                truth = "FAIL" if base_verdict == "PASS" else "PASS"
        return _Scene(primary, secondary, truth, {a: box_a, b: box_b})

    if kind == "missing":
        ca, cb = _centers(relation, True, rng)
        box_a = _box_around(*ca, *size_a)
        dets = [_det(a, _score(rng), box_a)]
        if rng.random() < 0.5:
            # present but under the checker threshold (above the floor)
            box_b = _box_around(*cb, *size_b)
            dets.append(_det(b, 0.15, box_b))
        truth = "UNDECIDABLE" if rng.random() < 0.7 else \
            ("PASS" if rng.random() < 0.5 else "FAIL")
        secondary, _ = _secondary_for(rng, dets, kind)
        return _Scene({"none": _entry(dets)}, secondary, truth, {a: box_a})

    if kind == "ambiguous":
        ca, cb = _centers(relation, True, rng)
        box_a1 = _box_around(*ca, *size_a)
        box_a2 = _box_around(ca[0] + 30, ca[1] - 40, *size_a)
        box_b = _box_around(*cb, *size_b)
        dets = [_det(a, 0.8, box_a1), _det(a, 0.75, box_a2),
                _det(b, _score(rng), box_b)]
        secondary, _ = _secondary_for(rng, dets, kind)
        truth = "UNDECIDABLE" if rng.random() < 0.7 else "PASS"
        return _Scene({"none": _entry(dets)}, secondary, truth,
                      {a: box_a1, b: box_b})

    if kind == "high_overlap" and AXIS_GROUP[relation] == "horizontal":
        box_a = _box_around(246 + rng.randrange(-20, 21),
                            246 + rng.randrange(-20, 21), 200, 200)
        box_b = [round(v + 10, 1) for v in box_a]
        dets = [_det(a, _score(rng), box_a), _det(b, _score(rng), box_b)]
        secondary, _ = _secondary_for(rng, dets, kind)
        truth = "UNDECIDABLE" if rng.random() < 0.7 else "FAIL"
        return _Scene({"none": _entry(dets)}, secondary, truth,
                      {a: box_a, b: box_b})

    # near_boundary; also the fallback for high_overlap on vertical
    # relations, which the overlap gate does not cover.
    offset = rng.randrange(10, 26)  # |d| in (0.019, 0.05]
    if AXIS_GROUP[relation] == "horizontal":
        box_a = _box_around(256 - offset, 190 + rng.randrange(-30, 31), 42, 42)
        box_b = _box_around(256 + offset, 330 + rng.randrange(-30, 31), 42, 42)
        sign_ok = relation == "left_of"
    else:
        box_a = _box_around(190 + rng.randrange(-30, 31), 256 - offset, 42, 42)
        box_b = _box_around(330 + rng.randrange(-30, 31), 256 + offset, 42, 42)
        sign_ok = relation == "above"
    dets = [_det(a, _score(rng), box_a), _det(b, _score(rng), box_b)]
    secondary, _ = _secondary_for(rng, dets, kind)
    if rng.random() < 0.3:
        truth = "UNDECIDABLE"
    else:
        truth = "PASS" if sign_ok else "FAIL"
    return _Scene({"none": _entry(dets)}, secondary, truth,
                  {a: box_a, b: box_b})


def _draw_image(path: Path, boxes: dict, method: str) -> None:
    img = Image.new("RGB", (SIZE, SIZE), _BG[method])
    draw = ImageDraw.Draw(img)
    palette = [(200, 60, 50), (60, 90, 200), (90, 160, 80)]
    for i, (label, box) in enumerate(sorted(boxes.items())):
        color = palette[i % len(palette)]
        draw.rectangle(box, outline=color, width=4)
        x1, y1 = box[0], box[1]
        draw.rectangle([x1, y1, x1 + 10, y1 + 10], fill=color)
    img.save(path, format="PNG")


def generate(out_dir: str | Path, pairs: int = 12, seeds: int = 2,
             seed: int = 7, run_id: str = "demo") -> dict:
    """Build the full synthetic scenario under out_dir; returns key paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    pair_list = default_pairs()[:pairs]
    prompt_set, meta = build_prompts(pair_list, PromptTemplate())
    prompts_dir = out / "data" / "prompts" / meta.version
    write_dataset(prompts_dir, prompt_set, meta)

    perturbation_tags = ["brightness(1.1)", "brightness(0.9)", "blur(1.0)",
                         "resize(0.9)"]
    images: dict = {}
    labels: list[dict] = []
    run_root = out / "runs" / run_id
    for method in METHODS:
        method_dir = run_root / method
        image_dir = method_dir / "images"
        image_dir.mkdir(parents=True, exist_ok=True)
        manifest_lines = []
        for prompt in prompt_set:
            for gen_seed in range(seeds):
                rng = random.Random(f"{seed}:{method}:{prompt.prompt_id}:{gen_seed}")
                kind = _choice(rng, _MIX[method])
                scene = _plant(kind, prompt, rng, perturbation_tags)
                fname = f"{method}__{prompt.prompt_id}_s{gen_seed}.png"
                _draw_image(image_dir / fname, scene.boxes, method)
                images[fname] = {
                    "width": SIZE,
                    "height": SIZE,
                    PRIMARY_ID: scene.primary,
                    SECONDARY_ID: {"none": scene.secondary},
                }
                manifest_lines.append({
                    "prompt_id": prompt.prompt_id,
                    "seed": gen_seed,
                    "image": f"images/{fname}",
                    "method": method,
                    "gen_digest": f"mock-{seed}",
                })
                labels.append({
                    "sample_id": f"{method}:{prompt.prompt_id}:s{gen_seed}",
                    "verdict": scene.truth,
                    "annotator": "synthetic",
                    "timestamp": "",
                })
        with open(method_dir / "manifest.jsonl", "w", encoding="utf-8",
                  newline="\n") as fh:
            for line in manifest_lines:
                fh.write(json.dumps(line, sort_keys=True) + "\n")

    scenes = MockScenes(
        detectors={PRIMARY_ID: {"score_floor": PRIMARY_FLOOR},
                   SECONDARY_ID: {"score_floor": SECONDARY_FLOOR}},
        images=images,
    )
    scenes_path = out / "scenes.json"
    scenes.save(scenes_path)

    labels_path = out / "truth_labels.json"
    with open(labels_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"version": 1, "labels": labels, "trail": []}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")

    return {
        "prompts_dir": prompts_dir,
        "prompts_file": prompts_dir / "prompts.jsonl",
        "scenes": scenes_path,
        "run_root": run_root,
        "methods": list(METHODS),
        "truth_labels": labels_path,
        "samples": len(labels),
    }
