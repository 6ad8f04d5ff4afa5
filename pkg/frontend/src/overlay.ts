// Box overlay geometry. Detections arrive in original-image pixels as
// [x0, y0, x1, y1]; the viewer shows the image scaled to fit, so each box
// has to be mapped into the displayed frame before it becomes a styled div.

export interface Placement {
  left: number;
  top: number;
  width: number;
  height: number;
}

export function placeBox(
  box: number[],
  naturalW: number,
  naturalH: number,
  shownW: number,
  shownH: number,
): Placement {
  if (naturalW <= 0 || naturalH <= 0) return { left: 0, top: 0, width: 0, height: 0 };
  const sx = shownW / naturalW;
  const sy = shownH / naturalH;
  const [x0, y0, x1, y1] = box;
  const left = Math.min(x0, x1) * sx;
  const top = Math.min(y0, y1) * sy;
  const width = Math.abs(x1 - x0) * sx;
  const height = Math.abs(y1 - y0) * sy;
  // Keep the outline inside the frame even when a detection pokes past the edge.
  const clampedLeft = Math.min(Math.max(left, 0), shownW);
  const clampedTop = Math.min(Math.max(top, 0), shownH);
  return {
    left: clampedLeft,
    top: clampedTop,
    width: Math.min(width, shownW - clampedLeft),
    height: Math.min(height, shownH - clampedTop),
  };
}

export function placementStyle(p: Placement): string {
  return `left:${p.left.toFixed(1)}px;top:${p.top.toFixed(1)}px;width:${p.width.toFixed(1)}px;height:${p.height.toFixed(1)}px`;
}
