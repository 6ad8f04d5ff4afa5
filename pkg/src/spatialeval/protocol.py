"""Line-delimited JSON wire protocol between the core and detector backends.

One request line -> one response line, over the backend's stdin/stdout.
The backend opens the conversation with a single handshake line. Canonical
key order is fixed so serialize(parse(line)) == line for every valid line,
which lets golden transcripts be compared byte-for-byte.

    handshake: {"hello": {"detector_id": "...", "score_floor": 0.5}}
    request:   {"image": "...", "labels": [...], "perturbation": {...}|null,
                "request_id": "..."}
    response:  {"request_id": "...", "width": W, "height": H,
                "detections": [{"label": ..., "score": ..., "box": [...]}]}
    error:     {"request_id": "...", "error": "..."}
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .detection import PerturbationSpec
from .errors import ProtocolError


def _dumps(obj: dict) -> str:
    # Insertion order of the dicts below *is* the canonical key order.
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


@dataclass(frozen=True)
class Handshake:
    detector_id: str
    score_floor: float

    def serialize(self) -> str:
        return _dumps({"hello": {"detector_id": self.detector_id,
                                 "score_floor": self.score_floor}})


@dataclass(frozen=True)
class Request:
    image: str
    labels: tuple[str, ...]
    perturbation: PerturbationSpec | None
    request_id: str

    def serialize(self) -> str:
        pert = None if self.perturbation is None else self.perturbation.as_wire()
        return _dumps({
            "image": self.image,
            "labels": list(self.labels),
            "perturbation": pert,
            "request_id": self.request_id,
        })


@dataclass(frozen=True)
class Response:
    request_id: str
    width: float | None = None
    height: float | None = None
    detections: tuple[dict, ...] = ()
    error: str | None = None

    def serialize(self) -> str:
        if self.error is not None:
            return _dumps({"request_id": self.request_id, "error": self.error})
        return _dumps({
            "request_id": self.request_id,
            "width": self.width,
            "height": self.height,
            "detections": [
                {"label": d["label"], "score": d["score"], "box": list(d["box"])}
                for d in self.detections
            ],
        })


def _loads(line: str, line_number: int | None = None) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed protocol line: {exc}",
                            line_number=line_number) from exc
    if not isinstance(obj, dict):
        raise ProtocolError("protocol line is not a JSON object",
                            line_number=line_number)
    return obj


def parse_handshake(line: str, line_number: int | None = None) -> Handshake:
    obj = _loads(line, line_number)
    hello = obj.get("hello")
    if not isinstance(hello, dict):
        raise ProtocolError("handshake line missing 'hello' object",
                            line_number=line_number)
    if "error" in hello:
        raise ProtocolError(f"backend refused handshake: {hello['error']}",
                            line_number=line_number)
    try:
        return Handshake(detector_id=str(hello["detector_id"]),
                         score_floor=float(hello["score_floor"]))
    except KeyError as exc:
        raise ProtocolError(f"handshake missing field {exc}",
                            line_number=line_number) from exc


def parse_request(line: str, line_number: int | None = None) -> Request:
    obj = _loads(line, line_number)
    try:
        pert = obj["perturbation"]
        spec = None
        if pert is not None:
            spec = PerturbationSpec(kind=pert["kind"], param=float(pert["param"]))
        return Request(
            image=str(obj["image"]),
            labels=tuple(str(x) for x in obj["labels"]),
            perturbation=spec,
            request_id=str(obj["request_id"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed request line: {exc}",
                            line_number=line_number) from exc


def _number(obj: dict, key: str, line_number: int | None):
    value = obj.get(key)
    # bool is an int subclass; keep the original int/float so that
    # serialize(parse(line)) stays byte-identical.
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProtocolError(f"response field {key!r} must be a number",
                            line_number=line_number)
    return value


def parse_response(line: str, line_number: int | None = None) -> Response:
    obj = _loads(line, line_number)
    if "request_id" not in obj:
        raise ProtocolError("response missing request_id", line_number=line_number)
    if "error" in obj:
        return Response(request_id=str(obj["request_id"]), error=str(obj["error"]))
    try:
        return Response(
            request_id=str(obj["request_id"]),
            width=_number(obj, "width", line_number),
            height=_number(obj, "height", line_number),
            detections=tuple(obj["detections"]),
        )
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed response line: {exc}",
                            line_number=line_number) from exc
