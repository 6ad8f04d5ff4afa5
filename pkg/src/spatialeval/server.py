"""HTTP API for blind human auditing of sampled verdicts.

Serves the audit queue without the automated verdict or confidence so the
annotator judges the image cold; the tool's own answer is revealed only
after a label is submitted. Labels persist to a JSON file compatible with
`load_labels`, so an interrupted session resumes where it stopped.

Endpoints:
    GET  /api/audit/samples        queue with labeled-state flags
    GET  /api/audit/image/<id>     PNG/JPEG bytes for the sample
    GET  /api/audit/reveal/<id>    tool verdict + boxes (labeled samples only)
    POST /api/audit/label          {"sample_id", "verdict"[, "annotator"]}
    GET  /api/audit/export         full label file payload

Anything else is served from --ui-dir when given (the bundled web UI).
"""

from __future__ import annotations

import json
import mimetypes
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import unquote, urlparse

from .audit import AuditLabel, AuditSample, HUMAN_VERDICTS, load_labels, write_labels
from .errors import ValidationError

_LANDING = (
    "spatialeval audit API\n"
    "GET /api/audit/samples | image/<id> | reveal/<id> | export\n"
    "POST /api/audit/label\n"
)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class AuditState:
    """Shared queue + label store behind the HTTP handlers."""

    samples: dict[str, AuditSample]
    order: list[str]
    rows: dict[str, dict]                 # sample_id -> per-sample record
    labels_path: Path
    labels: dict[str, AuditLabel] = field(default_factory=dict)
    trail: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @classmethod
    def build(cls, samples: list[AuditSample], rows: list[dict],
              labels_path: str | Path) -> "AuditState":
        by_id = {s.sample_id: s for s in samples}
        row_map = {r["sample_id"]: r for r in rows if r.get("sample_id") in by_id}
        state = cls(samples=by_id, order=[s.sample_id for s in samples],
                    rows=row_map, labels_path=Path(labels_path))
        if state.labels_path.exists():
            state.labels = {k: v for k, v in load_labels(state.labels_path).items()
                            if k in by_id}
        return state

    def queue_payload(self) -> dict:
        items = []
        for sid in self.order:
            s = self.samples[sid]
            label = self.labels.get(sid)
            items.append({
                "sample_id": sid,
                "prompt_text": s.prompt_text,
                "image_url": f"/api/audit/image/{sid}",
                "labeled": label is not None,
                "human_verdict": label.verdict if label else None,
            })
        done = sum(1 for it in items if it["labeled"])
        return {"samples": items, "total": len(items), "labeled": done,
                "choices": list(HUMAN_VERDICTS)}

    def boxes_payload(self, sid: str) -> dict:
        """Overlay geometry for the viewer. Safe before labeling: boxes
        locate the objects but say nothing about the verdict."""
        row = self.rows.get(sid, {})
        return {
            "sample_id": sid,
            "relation": row.get("relation"),
            "boxes": row.get("boxes"),
        }

    def reveal_payload(self, sid: str) -> dict:
        row = self.rows.get(sid, {})
        label = self.labels[sid]
        return {
            "sample_id": sid,
            "verdict": row.get("verdict"),
            "reason": row.get("reason"),
            "confidence": row.get("confidence"),
            "boxes": row.get("boxes"),
            "relation": row.get("relation"),
            "human": {"verdict": label.verdict, "annotator": label.annotator,
                      "timestamp": label.timestamp},
        }

    def submit(self, sid: str, verdict: str, annotator: str) -> dict:
        if sid not in self.samples:
            raise KeyError(sid)
        if verdict not in HUMAN_VERDICTS:
            raise ValidationError(f"bad human verdict {verdict!r}")
        with self.lock:
            previous = self.labels.get(sid)
            if previous is not None:
                self.trail.append({"sample_id": sid, "old": previous.verdict,
                                   "new": verdict, "timestamp": _now()})
            self.labels[sid] = AuditLabel(sid, verdict, annotator, _now())
            self._persist()
        return self.reveal_payload(sid)

    def export_payload(self) -> dict:
        ordered = [self.labels[sid] for sid in self.order if sid in self.labels]
        return {"version": 1,
                "labels": [{"sample_id": l.sample_id, "verdict": l.verdict,
                            "annotator": l.annotator, "timestamp": l.timestamp}
                           for l in ordered],
                "trail": list(self.trail)}

    def _persist(self) -> None:
        ordered = [self.labels[sid] for sid in self.order if sid in self.labels]
        tmp = self.labels_path.with_suffix(self.labels_path.suffix + ".tmp")
        write_labels(ordered, tmp, trail=self.trail)
        tmp.replace(self.labels_path)


class _Handler(BaseHTTPRequestHandler):
    state: AuditState
    ui_dir: Path | None = None
    quiet = True

    # -- plumbing ---------------------------------------------------------

    def log_message(self, fmt, *args):  # noqa: N802
        if not self.quiet:
            super().log_message(fmt, *args)

    def _send_json(self, payload: dict, status: int = 200) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, message: str) -> None:
        self._send_json({"error": message}, status)

    def _send_bytes(self, body: bytes, content_type: str) -> None:
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    # -- routes -----------------------------------------------------------

    def do_GET(self):  # noqa: N802
        path = urlparse(self.path).path
        if path == "/api/audit/samples":
            self._send_json(self.state.queue_payload())
        elif path.startswith("/api/audit/image/"):
            self._serve_image(unquote(path.rsplit("/", 1)[1]))
        elif path.startswith("/api/audit/boxes/"):
            self._serve_boxes(unquote(path.rsplit("/", 1)[1]))
        elif path.startswith("/api/audit/reveal/"):
            self._serve_reveal(unquote(path.rsplit("/", 1)[1]))
        elif path == "/api/audit/export":
            self._send_json(self.state.export_payload())
        else:
            self._serve_static(path)

    def do_POST(self):  # noqa: N802
        path = urlparse(self.path).path
        if path != "/api/audit/label":
            self._send_error_json(404, "unknown endpoint")
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            data = json.loads(self.rfile.read(length).decode("utf-8"))
            sid = data["sample_id"]
            verdict = data["verdict"]
        except (ValueError, KeyError) as exc:
            self._send_error_json(400, f"bad request body: {exc}")
            return
        try:
            payload = self.state.submit(sid, verdict, data.get("annotator", ""))
        except KeyError:
            self._send_error_json(404, f"unknown sample {sid!r}")
            return
        except ValidationError as exc:
            self._send_error_json(400, str(exc))
            return
        self._send_json(payload)

    def _serve_image(self, sid: str) -> None:
        sample = self.state.samples.get(sid)
        if sample is None:
            self._send_error_json(404, f"unknown sample {sid!r}")
            return
        image_path = Path(sample.image)
        if not image_path.is_file():
            self._send_error_json(404, f"image not found for {sid!r}")
            return
        ctype = mimetypes.guess_type(image_path.name)[0] or "application/octet-stream"
        self._send_bytes(image_path.read_bytes(), ctype)

    def _serve_boxes(self, sid: str) -> None:
        if sid not in self.state.samples:
            self._send_error_json(404, f"unknown sample {sid!r}")
            return
        self._send_json(self.state.boxes_payload(sid))

    def _serve_reveal(self, sid: str) -> None:
        if sid not in self.state.samples:
            self._send_error_json(404, f"unknown sample {sid!r}")
            return
        # Blindness rule: nothing about the tool's answer leaves the server
        # until the annotator has committed a label for that sample.
        if sid not in self.state.labels:
            self._send_error_json(409, f"sample {sid!r} not labeled yet")
            return
        self._send_json(self.state.reveal_payload(sid))

    def _serve_static(self, path: str) -> None:
        if self.ui_dir is None:
            self._send_bytes(_LANDING.encode("utf-8"), "text/plain; charset=utf-8")
            return
        rel = path.lstrip("/") or "index.html"
        target = (self.ui_dir / rel).resolve()
        root = self.ui_dir.resolve()
        if root not in target.parents and target != root:
            self._send_error_json(404, "not found")
            return
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            # SPA fallback keeps client-side routes working on reload.
            target = root / "index.html"
            if not target.is_file():
                self._send_error_json(404, "not found")
                return
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        self._send_bytes(target.read_bytes(), ctype)


def make_server(state: AuditState, host: str = "127.0.0.1", port: int = 0,
                ui_dir: str | Path | None = None,
                quiet: bool = True) -> ThreadingHTTPServer:
    handler = type("AuditHandler", (_Handler,), {
        "state": state,
        "ui_dir": Path(ui_dir) if ui_dir else None,
        "quiet": quiet,
    })
    return ThreadingHTTPServer((host, port), handler)


def serve_forever(state: AuditState, host: str, port: int,
                  ui_dir: str | Path | None = None) -> None:
    server = make_server(state, host, port, ui_dir, quiet=False)
    addr = server.server_address
    print(f"audit server on http://{addr[0]}:{addr[1]}/ "
          f"({len(state.order)} samples, {len(state.labels)} labeled)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
