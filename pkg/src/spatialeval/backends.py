"""Backend connections: live subprocess backends and the scripted mock.

A backend is any process that writes one handshake line on startup and then
answers one response line per request line. The mock backend replays a scene
file so every abstention path can be exercised deterministically; the same
scene logic is also usable in-process for fast unit tests.
"""

from __future__ import annotations

import json
import os
import queue
import subprocess
import threading
from dataclasses import dataclass
from pathlib import Path

from .detection import (
    BASE_TAG,
    DetectionSet,
    PERTURBATION_KINDS,
    PerturbationSpec,
    ingest_detections,
    perturbation_tag,
)
from .errors import BackendFailure, ProtocolError
from .protocol import Handshake, Request, parse_handshake, parse_response


class Backend:
    """One connection to a detector backend; one in-flight request at a time."""

    detector_id: str
    score_floor: float

    def request(self, image: str, labels: tuple[str, ...],
                perturbation: PerturbationSpec | None) -> DetectionSet:
        raise NotImplementedError

    def close(self) -> None:
        pass


def request_detections(backend: Backend, image: str, labels: tuple[str, ...],
                       perturbation: PerturbationSpec | None = None) -> DetectionSet:
    """Fetch all detections the backend reports for the queried labels.

    No filtering happens here; score/area thresholds are checker policy.
    """
    return backend.request(image, labels, perturbation)


# ---------------------------------------------------------------------------
# Scene files for the mock backend
# ---------------------------------------------------------------------------

@dataclass
class MockScenes:
    """Scripted detections per detector per image per perturbation.

    Schema:
        {"detectors": {"<id>": {"score_floor": 0.5}},
         "images": {"<basename>": {
             "width": 512, "height": 512,
             "<detector_id>": {
                 "none": {"detections": [...]} | {"error": "..."},
                 "blur(1.0)": {...}            # optional per-tag override
             }}}}

    Lookup falls back from the exact image path to its basename, and from a
    missing perturbation tag to the base ("none") entry.
    """

    detectors: dict
    images: dict

    @classmethod
    def load(cls, path: str | Path) -> "MockScenes":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(detectors=data["detectors"], images=data["images"])

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump({"detectors": self.detectors, "images": self.images},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")

    def floor(self, detector_id: str) -> float:
        return float(self.detectors[detector_id]["score_floor"])

    def lookup(self, image: str, detector_id: str,
               perturbation: PerturbationSpec | None) -> tuple[dict, dict]:
        """Return (image entry, scripted result) or raise KeyError."""
        entry = self.images.get(image) or self.images.get(Path(image).name)
        if entry is None:
            raise KeyError(f"no scene for image {image!r}")
        per_detector = entry.get(detector_id)
        if per_detector is None:
            raise KeyError(f"no scene for detector {detector_id!r} on {image!r}")
        tag = perturbation_tag(perturbation)
        scripted = per_detector.get(tag, per_detector.get(BASE_TAG))
        if scripted is None:
            raise KeyError(f"no scene entry for tag {tag!r} on {image!r}")
        return entry, scripted


def mock_detect(scenes: MockScenes, detector_id: str, image: str,
                labels: tuple[str, ...],
                perturbation: PerturbationSpec | None) -> DetectionSet:
    """Evaluate one scripted request. Raises BackendFailure for scripted
    failures and ProtocolError for unknown perturbation kinds."""
    if perturbation is not None and perturbation.kind not in PERTURBATION_KINDS:
        raise ProtocolError(f"unknown perturbation kind: {perturbation.kind}",
                            detector_id=detector_id)
    try:
        entry, scripted = scenes.lookup(image, detector_id, perturbation)
    except KeyError as exc:
        raise BackendFailure(str(exc), detector_id=detector_id) from exc
    if "error" in scripted:
        raise BackendFailure(f"scripted failure: {scripted['error']}",
                             detector_id=detector_id)
    wanted = {lbl.lower() for lbl in labels}
    raw = [d for d in scripted["detections"] if d["label"].lower() in wanted]
    return ingest_detections(
        raw,
        width=float(entry["width"]),
        height=float(entry["height"]),
        backend_score_floor=scenes.floor(detector_id),
        detector_id=detector_id,
        perturbation=perturbation,
    )


class InProcessMockBackend(Backend):
    """Scene-scripted backend without the subprocess hop (unit tests)."""

    def __init__(self, scenes: MockScenes, detector_id: str):
        self._scenes = scenes
        self.detector_id = detector_id
        self.score_floor = scenes.floor(detector_id)

    def request(self, image, labels, perturbation):
        return mock_detect(self._scenes, self.detector_id, image, labels,
                           perturbation)


# ---------------------------------------------------------------------------
# Subprocess backend client
# ---------------------------------------------------------------------------

class ProcessBackend(Backend):
    """Client for a backend subprocess speaking the line protocol."""

    def __init__(self, command: list[str], timeout: float = 30.0):
        self._command = list(command)
        self._timeout = timeout
        self._counter = 0
        try:
            self._proc = subprocess.Popen(
                self._command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise BackendFailure(f"could not start backend {command!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        hello = self._next_line()
        hs: Handshake = parse_handshake(hello, line_number=1)
        self.detector_id = hs.detector_id
        self.score_floor = hs.score_floor
        self._line_no = 1

    def _pump(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _next_line(self) -> str:
        try:
            line = self._lines.get(timeout=self._timeout)
        except queue.Empty:
            self._kill()
            raise BackendFailure(
                f"backend timeout after {self._timeout}s",
                detector_id=getattr(self, "detector_id", None),
            ) from None
        if line is None:
            raise BackendFailure("backend closed its output stream",
                                 detector_id=getattr(self, "detector_id", None))
        return line.rstrip("\n")

    def request(self, image, labels, perturbation):
        self._counter += 1
        req = Request(image=image, labels=tuple(labels),
                      perturbation=perturbation,
                      request_id=f"r{self._counter:06d}")
        try:
            self._proc.stdin.write(req.serialize() + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError, OSError) as exc:
            raise BackendFailure(f"backend pipe broken: {exc}",
                                 detector_id=self.detector_id) from exc
        line = self._next_line()
        self._line_no += 1
        resp = parse_response(line, line_number=self._line_no)
        if resp.request_id != req.request_id:
            raise ProtocolError(
                f"response id {resp.request_id!r} does not match request "
                f"{req.request_id!r}",
                detector_id=self.detector_id, line_number=self._line_no)
        if resp.error is not None:
            raise BackendFailure(f"backend error: {resp.error}",
                                 detector_id=self.detector_id)
        return ingest_detections(
            list(resp.detections),
            width=resp.width,
            height=resp.height,
            backend_score_floor=self.score_floor,
            detector_id=self.detector_id,
            perturbation=perturbation,
        )

    def _kill(self):
        try:
            self._proc.kill()
        except OSError:
            pass

    def close(self):
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            self._kill()


def mock_backend_command(scenes_path: str | Path, detector_id: str) -> list[str]:
    import sys
    return [sys.executable, "-m", "spatialeval.mock_backend",
            "--scenes", str(scenes_path), "--detector-id", detector_id]


def resolve_backend_command(flag_value: str | None, env_var: str,
                            default: list[str] | None) -> list[str] | None:
    """Precedence: CLI flag > environment variable > default."""
    import shlex
    if flag_value:
        return shlex.split(flag_value)
    env = os.environ.get(env_var)
    if env:
        return shlex.split(env)
    return default
