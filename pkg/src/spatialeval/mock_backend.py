"""Runnable mock detector backend: replays a scene file over the line protocol.

    python -m spatialeval.mock_backend --scenes scenes.json --detector-id mock-primary

Scripted failures become error responses (the process keeps serving), so a
"crash" is observable by the core as a backend failure without flakiness.
"""

from __future__ import annotations

import argparse
import sys

from .backends import MockScenes, mock_detect
from .errors import BackendFailure, ProtocolError
from .protocol import Handshake, Response, parse_request


def serve(scenes: MockScenes, detector_id: str, stdin, stdout) -> None:
    stdout.write(Handshake(detector_id, scenes.floor(detector_id)).serialize() + "\n")
    stdout.flush()
    line_no = 1
    for line in stdin:
        line_no += 1
        line = line.strip()
        if not line:
            continue
        try:
            req = parse_request(line, line_number=line_no)
        except ProtocolError as exc:
            stdout.write(Response(request_id="?", error=str(exc)).serialize() + "\n")
            stdout.flush()
            continue
        try:
            ds = mock_detect(scenes, detector_id, req.image, req.labels,
                             req.perturbation)
            resp = Response(
                request_id=req.request_id,
                width=ds.width,
                height=ds.height,
                detections=tuple(
                    {"label": d.label, "score": d.score, "box": d.box.as_list()}
                    for d in ds.detections
                ),
            )
        except (BackendFailure, ProtocolError) as exc:
            resp = Response(request_id=req.request_id, error=str(exc))
        stdout.write(resp.serialize() + "\n")
        stdout.flush()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="scene-replay mock detector backend")
    parser.add_argument("--scenes", required=True, help="scene JSON file")
    parser.add_argument("--detector-id", required=True)
    args = parser.parse_args(argv)

    scenes = MockScenes.load(args.scenes)
    if args.detector_id not in scenes.detectors:
        sys.stdout.write('{"hello": {"error": "unknown detector id"}}\n')
        sys.stdout.flush()
        return 1
    serve(scenes, args.detector_id, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
