"""Fixture helpers: deterministic scenes the reference detector can find."""

from PIL import Image, ImageDraw

from .detectors import label_color

WHITE = (255, 255, 255)


def draw_rects(path, size, rects, background=WHITE):
    """Write a scene of solid label-colored rectangles.

    Boxes use the continuous [x0, y0, x1, y1) convention, so a detector
    with exact edges reports the same numbers back.
    """
    img = Image.new("RGB", size, background)
    canvas = ImageDraw.Draw(img)
    for label, (x0, y0, x1, y1) in rects:
        canvas.rectangle([x0, y0, x1 - 1, y1 - 1], fill=label_color(label))
    img.save(path)
    return path
