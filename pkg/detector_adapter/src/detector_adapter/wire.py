"""Line codec for the detection protocol.

One JSON object per line. Key order is fixed and floats are rounded to
four decimals before serialization, so any valid exchange has exactly one
byte representation and transcripts can be compared byte-for-byte.

    handshake: {"hello": {"detector_id": "...", "score_floor": 0.5}}
    refusal:   {"hello": {"error": "..."}}
    request:   {"image": "...", "labels": [...], "perturbation": {...}|null,
                "request_id": "..."}
    response:  {"request_id": "...", "width": W, "height": H,
                "detections": [{"label": ..., "score": ..., "box": [...]}]}
    error:     {"request_id": "...", "error": "..."}
"""

from __future__ import annotations

import json


class WireError(ValueError):
    """A line that does not follow the protocol."""


def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def round4(value):
    """Round a wire number to 4 decimals; ints pass through untouched."""
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise WireError(f"not a wire number: {value!r}")
    if isinstance(value, int):
        return value
    return round(float(value), 4)


def handshake_line(detector_id: str, score_floor: float) -> str:
    return _dumps({"hello": {"detector_id": detector_id,
                             "score_floor": round4(score_floor)}})


def refusal_line(message: str) -> str:
    """Handshake that announces the backend could not start."""
    return _dumps({"hello": {"error": message}})


def response_line(request_id: str, width, height, detections) -> str:
    return _dumps({
        "request_id": request_id,
        "width": width,
        "height": height,
        "detections": [
            {"label": d["label"], "score": round4(d["score"]),
             "box": [round4(v) for v in d["box"]]}
            for d in detections
        ],
    })


def error_line(request_id: str, message: str) -> str:
    return _dumps({"request_id": request_id, "error": message})


def parse_request(line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise WireError(f"malformed request line: {exc}") from exc
    if not isinstance(obj, dict):
        raise WireError("request line is not a JSON object")
    try:
        pert = obj["perturbation"]
        if pert is not None:
            pert = {"kind": str(pert["kind"]), "param": float(pert["param"])}
        return {
            "image": str(obj["image"]),
            "labels": [str(x) for x in obj["labels"]],
            "perturbation": pert,
            "request_id": str(obj["request_id"]),
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise WireError(f"request missing or bad field: {exc}") from exc
