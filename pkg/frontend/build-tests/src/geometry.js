/** Box denormalization mirroring the server renderer, so client overlays
 * land on the same pixels the server draws (parity-tested on fixtures). */
/** Server rule: round half up onto the (extent - 1) pixel grid. */
export function denorm(value, extent) {
    return Math.floor(value * (extent - 1) + 0.5);
}
export function boxToPixels(box, width, height) {
    return {
        x0: denorm(box[0], width),
        y0: denorm(box[1], height),
        x1: denorm(box[2], width),
        y1: denorm(box[3], height),
    };
}
/** Caption baseline: above the box's top-left, pushed inside at the edge
 * (same clamping the server applies; glyphs are 7px tall). */
export function captionOrigin(rect, lineThickness, glyphHeight = 7) {
    let y = rect.y0 - glyphHeight - 1;
    if (y < 0) {
        y = rect.y0 + lineThickness + 1;
    }
    return { x: Math.max(0, rect.x0), y };
}
