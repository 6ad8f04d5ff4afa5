"""Protocol loop: handshake, then one response per request line.

The declared score floor doubles as the internal cutoff: a detection below
it is never written to the wire. Model load failure turns into a handshake
refusal and a nonzero exit; anything that goes wrong inside a single
request becomes an error response and the loop keeps serving.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

from PIL import Image

from .detectors import (ColorBlobDetector, DetectorLoadError,
                        GroundingDetector, TorchvisionDetector)
from .perturb import NO_SCALE, apply_perturbation, map_box_to_original
from .wire import (WireError, error_line, handshake_line, parse_request,
                   refusal_line, response_line)


@dataclass(frozen=True)
class ScoreProfile:
    box_floor: float
    text_floor: float | None = None


# Role presets: the primary detector cuts at 0.5; the secondary keeps
# weaker boxes (0.35) and, for open-vocabulary models, weaker text
# matches (0.25).
PROFILES = {
    "primary": ScoreProfile(0.5),
    "secondary": ScoreProfile(0.35, 0.25),
}


def parse_scores(value: str) -> ScoreProfile:
    if value in PROFILES:
        return PROFILES[value]
    parts = value.split(",")
    try:
        if len(parts) == 1:
            return ScoreProfile(float(parts[0]))
        if len(parts) == 2:
            return ScoreProfile(float(parts[0]), float(parts[1]))
    except ValueError:
        pass
    raise ValueError(
        f"bad scores value {value!r}: use 'primary', 'secondary', "
        f"'BOX' or 'BOX,TEXT'")


@dataclass(frozen=True)
class BackendConfig:
    detector: str = "colorblob"
    device: str = "cpu"
    scores: ScoreProfile = field(default_factory=lambda: PROFILES["primary"])


def build_detector(config: BackendConfig):
    if config.detector == "colorblob":
        return ColorBlobDetector()
    if config.detector == "faster-rcnn":
        return TorchvisionDetector(device=config.device)
    if config.detector == "grounding-dino":
        return GroundingDetector(device=config.device,
                                 text_floor=config.scores.text_floor)
    raise DetectorLoadError(f"unknown detector {config.detector!r}")


def _answer(req: dict, detector, scores: ScoreProfile) -> str:
    try:
        with Image.open(req["image"]) as raw:
            image = raw.convert("RGB")
        width, height = image.size
        scale = NO_SCALE
        pert = req["perturbation"]
        if pert is not None:
            image, scale = apply_perturbation(image, pert["kind"],
                                              pert["param"])
        detections = []
        for det in detector.detect(image, req["labels"]):
            if det.score < scores.box_floor:
                continue
            detections.append({"label": det.label, "score": det.score,
                               "box": map_box_to_original(det.box, scale)})
        return response_line(req["request_id"], width, height, detections)
    except Exception as exc:  # noqa: BLE001 - any per-request failure
        return error_line(req["request_id"], f"{type(exc).__name__}: {exc}")


def run_service(config: BackendConfig, stdin=None, stdout=None) -> int:
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    try:
        detector = build_detector(config)
    except DetectorLoadError as exc:
        stdout.write(refusal_line(str(exc)) + "\n")
        stdout.flush()
        return 1
    stdout.write(handshake_line(detector.detector_id, config.scores.box_floor)
                 + "\n")
    stdout.flush()
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = parse_request(line)
        except WireError as exc:
            stdout.write(error_line("?", str(exc)) + "\n")
            stdout.flush()
            continue
        stdout.write(_answer(req, detector, config.scores) + "\n")
        stdout.flush()
    return 0
