"""Image perturbations, applied before inference.

brightness scales all channels, blur is a Gaussian with sigma in pixels,
resize scales both axes bilinearly. Resize changes the pixel frame, so it
returns the realized per-axis factors; callers divide detected boxes by
them to get back to original-image pixels.
"""

from __future__ import annotations

from PIL import Image, ImageEnhance, ImageFilter

KINDS = ("brightness", "blur", "resize")

Scale = tuple[float, float]
NO_SCALE: Scale = (1.0, 1.0)


def apply_perturbation(image: Image.Image, kind: str,
                       param: float) -> tuple[Image.Image, Scale]:
    if kind == "brightness":
        return ImageEnhance.Brightness(image).enhance(param), NO_SCALE
    if kind == "blur":
        return image.filter(ImageFilter.GaussianBlur(radius=param)), NO_SCALE
    if kind == "resize":
        if param <= 0:
            raise ValueError("resize scale must be positive")
        w, h = image.size
        rw = max(1, round(w * param))
        rh = max(1, round(h * param))
        resized = image.resize((rw, rh), Image.Resampling.BILINEAR)
        # report the realized factor: rounding to whole pixels makes it
        # differ slightly from the requested one
        return resized, (rw / w, rh / h)
    raise ValueError(f"unknown perturbation kind: {kind!r}")


def map_box_to_original(box, scale: Scale) -> list[float]:
    """Map [x0, y0, x1, y1] from the perturbed frame back to the original."""
    sx, sy = scale
    x0, y0, x1, y1 = box
    return [x0 / sx, y0 / sy, x1 / sx, y1 / sy]
