"""Detector wrappers behind one small interface: detect(image, labels).

`colorblob` is the shipped reference detector. It finds axis-aligned
regions of a label-derived solid color with subpixel edge estimation, so
the protocol, the perturbation plumbing and the golden transcripts run
anywhere: no weights, no GPU, and fully deterministic. On the synthetic
rectangle images used for tests and demos it behaves like a real detector
(boxes drift under blur, vanish when the object is absent, lose score when
the region is washed out).

`faster-rcnn` (closed COCO vocabulary) and `grounding-dino` (open
vocabulary) wrap real models; when their packages or weights are missing
they raise DetectorLoadError, which the service turns into a handshake
refusal and a nonzero exit.
"""

from __future__ import annotations

import colorsys
import hashlib
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .labels import load_label_map, normalize, to_vocabulary


class DetectorLoadError(RuntimeError):
    """The detector cannot be constructed (missing package or weights)."""


@dataclass(frozen=True)
class RawDetection:
    label: str                                   # echoed request label
    score: float
    box: tuple[float, float, float, float]       # x0, y0, x1, y1, given frame


def label_color(label: str) -> tuple[int, int, int]:
    """Deterministic saturated color for a label.

    Hue comes from a hash of the normalized label, so "the cat" and "cat"
    share a color. Max channel stays <= 217, which keeps brightness 1.1
    from clipping it.
    """
    digest = hashlib.sha256(normalize(label).encode("utf-8")).digest()
    hue = int.from_bytes(digest[:2], "big") % 360
    r, g, b = colorsys.hsv_to_rgb(hue / 360.0, 0.85, 0.85)
    return round(r * 255), round(g * 255), round(b * 255)


def _background_color(rgb: np.ndarray) -> np.ndarray:
    """Most frequent color along the 1px border."""
    border = np.concatenate([rgb[0], rgb[-1], rgb[:, 0], rgb[:, -1]])
    values, counts = np.unique(border.reshape(-1, 3), axis=0,
                               return_counts=True)
    return values[counts.argmax()].astype(np.float64)


def _coverage(rgb: np.ndarray, pure: np.ndarray,
              background: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-pixel blend fraction of the pure color, plus signal strength.

    A blended pixel sits on the line from background to pure; brightness
    scaling moves it along the same direction, so direction matching plus
    projected length recovers the blend fraction without knowing the
    brightness factor. Strength compares the strongest observed pixel
    against the palette ideal: a washed-out region matches but scores low.
    """
    direction = pure - background
    norm = float(np.linalg.norm(direction))
    if norm < 1.0:
        return np.zeros(rgb.shape[:2]), 0.0
    diff = rgb - background
    length = np.linalg.norm(diff, axis=-1)
    proj = diff @ direction / norm
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(length > 0, proj / length, 0.0)
    candidate = (cos >= 0.98) & (length >= 25.0)
    if not candidate.any():
        return np.zeros(rgb.shape[:2]), 0.0
    full = proj[candidate].max()
    strength = float(min(1.0, full / norm))
    return np.clip(proj / full, 0.0, 1.0) * candidate, strength


def _edges(profile: np.ndarray) -> tuple[float, float] | None:
    """Subpixel [lo, hi) extent of a plateau-shaped mass profile.

    Interior columns of a solid rectangle carry the full mass; the partial
    mass on each flank is exactly the subpixel remainder of the edge.
    """
    nz = np.flatnonzero(profile > 0)
    if nz.size == 0:
        return None
    peak = profile.max()
    cov = np.clip(profile / peak, 0.0, 1.0)
    full = np.flatnonzero(cov > 0.999)
    if full.size == 0:
        return float(nz[0]), float(nz[-1] + 1)
    left = full[0] - cov[nz[0]:full[0]].sum()
    right = full[-1] + 1 + cov[full[-1] + 1:nz[-1] + 1].sum()
    return float(left), float(right)


def _blob_box(f: np.ndarray) -> tuple[tuple[float, float, float, float],
                                      float] | None:
    if f.sum() < 4.0:  # under ~2x2 px of evidence: nothing there
        return None
    x_extent = _edges(f.sum(axis=0))
    y_extent = _edges(f.sum(axis=1))
    if x_extent is None or y_extent is None:
        return None
    x0, x1 = x_extent
    y0, y1 = y_extent
    if x1 - x0 < 1.0 or y1 - y0 < 1.0:
        return None
    interior = f[f > 0.5]
    quality = float(interior.mean()) if interior.size else float(f[f > 0].mean())
    return (x0, y0, x1, y1), quality


class ColorBlobDetector:
    """Finds one box per label by the label's palette color.

    Meant for synthetic rectangle images; natural photos are out of scope.
    Multiple instances of the same color merge into one bounding box.
    """

    detector_id = "colorblob"

    def detect(self, image: Image.Image,
               labels: list[str]) -> list[RawDetection]:
        rgb = np.asarray(image.convert("RGB"), dtype=np.float64)
        background = _background_color(rgb)
        out: list[RawDetection] = []
        for label in labels:
            pure = np.array(label_color(label), dtype=np.float64)
            f, strength = _coverage(rgb, pure, background)
            found = _blob_box(f)
            if found is None:
                continue
            box, quality = found
            score = round(min(quality * strength, 0.99), 4)
            out.append(RawDetection(label=label, score=score, box=box))
        return out


# Torchvision's pretrained COCO heads use the 91-slot paper list.
COCO_CLASSES = (
    "__background__", "person", "bicycle", "car", "motorcycle", "airplane",
    "bus", "train", "truck", "boat", "traffic light", "fire hydrant", "N/A",
    "stop sign", "parking meter", "bench", "bird", "cat", "dog", "horse",
    "sheep", "cow", "elephant", "bear", "zebra", "giraffe", "N/A", "backpack",
    "umbrella", "N/A", "N/A", "handbag", "tie", "suitcase", "frisbee", "skis",
    "snowboard", "sports ball", "kite", "baseball bat", "baseball glove",
    "skateboard", "surfboard", "tennis racket", "bottle", "N/A", "wine glass",
    "cup", "fork", "knife", "spoon", "bowl", "banana", "apple", "sandwich",
    "orange", "broccoli", "carrot", "hot dog", "pizza", "donut", "cake",
    "chair", "couch", "potted plant", "bed", "N/A", "dining table", "N/A",
    "N/A", "toilet", "N/A", "tv", "laptop", "mouse", "remote", "keyboard",
    "cell phone", "microwave", "oven", "toaster", "sink", "refrigerator",
    "N/A", "book", "clock", "vase", "scissors", "teddy bear", "hair drier",
    "toothbrush",
)


class TorchvisionDetector:
    """Closed-vocabulary COCO detector (Faster R-CNN, torchvision weights)."""

    detector_id = "faster-rcnn"

    def __init__(self, device: str = "cpu"):
        try:
            import torch
            from torchvision.models import detection as tvd
        except ImportError as exc:
            raise DetectorLoadError(
                f"faster-rcnn needs torch and torchvision: {exc}") from exc
        try:
            weights = tvd.FasterRCNN_ResNet50_FPN_Weights.DEFAULT
            self._model = tvd.fasterrcnn_resnet50_fpn(weights=weights)
        except Exception as exc:  # weights download/load can fail offline
            raise DetectorLoadError(f"faster-rcnn weights unavailable: {exc}") \
                from exc
        self._torch = torch
        self._device = device
        self._model.to(device)
        self._model.eval()
        self._table = load_label_map()

    def detect(self, image: Image.Image,
               labels: list[str]) -> list[RawDetection]:
        torch = self._torch
        wanted = {to_vocabulary(lb, self._table): lb for lb in labels}
        arr = np.asarray(image.convert("RGB"), dtype=np.float32) / 255.0
        tensor = torch.from_numpy(arr).permute(2, 0, 1).to(self._device)
        with torch.no_grad():
            pred = self._model([tensor])[0]
        out: list[RawDetection] = []
        best: dict[str, RawDetection] = {}
        for box, cls, score in zip(pred["boxes"].cpu().numpy(),
                                   pred["labels"].cpu().numpy(),
                                   pred["scores"].cpu().numpy()):
            name = COCO_CLASSES[int(cls)] if int(cls) < len(COCO_CLASSES) else ""
            if name not in wanted:
                continue
            label = wanted[name]
            det = RawDetection(label=label, score=float(score),
                               box=tuple(float(v) for v in box))
            if label not in best or det.score > best[label].score:
                best[label] = det
        out.extend(best.values())
        return out


class GroundingDetector:
    """Open-vocabulary grounding detector (Grounding DINO, transformers)."""

    detector_id = "grounding-dino"
    checkpoint = "IDEA-Research/grounding-dino-tiny"

    def __init__(self, device: str = "cpu", text_floor: float | None = None):
        try:
            import torch
            from transformers import (AutoModelForZeroShotObjectDetection,
                                      AutoProcessor)
        except ImportError as exc:
            raise DetectorLoadError(
                f"grounding-dino needs torch and transformers: {exc}") from exc
        try:
            self._processor = AutoProcessor.from_pretrained(self.checkpoint)
            self._model = AutoModelForZeroShotObjectDetection.from_pretrained(
                self.checkpoint).to(device)
        except Exception as exc:
            raise DetectorLoadError(
                f"grounding-dino checkpoint unavailable: {exc}") from exc
        self._torch = torch
        self._device = device
        self._text_floor = 0.25 if text_floor is None else text_floor
        self._table = load_label_map()

    def detect(self, image: Image.Image,
               labels: list[str]) -> list[RawDetection]:
        torch = self._torch
        queries = [to_vocabulary(lb, self._table) for lb in labels]
        text = ". ".join(queries) + "."
        rgb = image.convert("RGB")
        inputs = self._processor(images=rgb, text=text,
                                 return_tensors="pt").to(self._device)
        with torch.no_grad():
            outputs = self._model(**inputs)
        results = self._processor.post_process_grounded_object_detection(
            outputs, inputs.input_ids, text_threshold=self._text_floor,
            target_sizes=[rgb.size[::-1]])[0]
        by_query = {q: lb for q, lb in zip(queries, labels)}
        best: dict[str, RawDetection] = {}
        for box, score, phrase in zip(results["boxes"], results["scores"],
                                      results["labels"]):
            label = by_query.get(str(phrase).strip().lower())
            if label is None:
                continue
            det = RawDetection(label=label, score=float(score),
                               box=tuple(float(v) for v in box))
            if label not in best or det.score > best[label].score:
                best[label] = det
        return list(best.values())
