/** Client-side detection overlay: same geometry as the server renderer,
 * filtered by a score threshold without re-fetching anything. */

import { boxToPixels, captionOrigin } from "./geometry.js";
import type { Detection } from "./types.js";

export function filterByThreshold(
  detections: Detection[],
  threshold: number,
): Detection[] {
  return detections.filter((d) => d.score >= threshold);
}

/** Deterministic palette: must match the server's hue walk. */
export function classColor(classId: number): string {
  const hue = ((classId * 0.61803398875) % 1.0) * 360;
  return `hsl(${hue}, 95%, 48%)`;
}

export function drawOverlay(
  ctx: CanvasRenderingContext2D,
  detections: Detection[],
  classNames: Map<number, string>,
  width: number,
  height: number,
  threshold: number,
  lineThickness = 2,
): void {
  for (const det of filterByThreshold(detections, threshold)) {
    const rect = boxToPixels(det.box, width, height);
    ctx.strokeStyle = classColor(det.class_id);
    ctx.lineWidth = lineThickness;
    ctx.strokeRect(
      rect.x0 + lineThickness / 2,
      rect.y0 + lineThickness / 2,
      rect.x1 - rect.x0 - lineThickness,
      rect.y1 - rect.y0 - lineThickness,
    );
    const name = classNames.get(det.class_id) ?? `id ${det.class_id}`;
    const caption = `${name}: ${det.score.toFixed(2)}`;
    const origin = captionOrigin(rect, lineThickness);
    ctx.font = "10px monospace";
    ctx.fillStyle = classColor(det.class_id);
    ctx.fillText(caption, origin.x, origin.y + 7);
  }
}
