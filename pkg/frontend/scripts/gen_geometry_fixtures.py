"""Regenerate tests/fixtures/overlay_geometry.json from the server renderer.

For each case the server draws one box (thickness 1, captions off) onto a
black canvas; the drawn rectangle's pixel bounds are recovered by scanning
the output. The console's geometry must land within 1 px of these.

Run from the frontend directory: python scripts/gen_geometry_fixtures.py
"""

import json
import random
from pathlib import Path

import numpy as np

from detlab.export_viz import RenderSpec, render_detections
from detlab.images import ImageBuffer
from detlab.ingest import LabelMap
from detlab.metrics import Detection

LM = LabelMap(((1, "box"), (2, "disc")))


def drawn_bounds(width, height, box):
    img = ImageBuffer(width, height, np.zeros((height, width, 3), dtype=np.uint8))
    spec = RenderSpec(score_threshold=0.0, line_thickness=1, with_captions=False)
    out = render_detections(img, [Detection("x", box, 1, 1.0)], LM, spec)
    changed = np.any(out.pixels != 0, axis=2)
    ys, xs = np.nonzero(changed)
    return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())


def main():
    rng = random.Random(20_240_817)
    cases = []
    fixed = [
        (100, 100, (0.25, 0.25, 0.75, 0.75)),
        (64, 48, (0.0, 0.0, 1.0, 1.0)),
        (31, 77, (0.1, 0.2, 0.4, 0.6)),
    ]
    for width, height, box in fixed:
        x0, y0, x1, y1 = drawn_bounds(width, height, box)
        cases.append(
            {"width": width, "height": height, "box": list(box),
             "expected": {"x0": x0, "y0": y0, "x1": x1, "y1": y1}}
        )
    for _ in range(37):
        width, height = rng.randrange(16, 512), rng.randrange(16, 512)
        x1, x2 = sorted(round(rng.random(), 4) for _ in range(2))
        y1, y2 = sorted(round(rng.random(), 4) for _ in range(2))
        if x2 - x1 < 0.05 or y2 - y1 < 0.05:
            continue
        box = (x1, y1, x2, y2)
        bx0, by0, bx1, by1 = drawn_bounds(width, height, box)
        cases.append(
            {"width": width, "height": height, "box": list(box),
             "expected": {"x0": bx0, "y0": by0, "x1": bx1, "y1": by1}}
        )
    out = Path(__file__).parent.parent / "tests" / "fixtures" / "overlay_geometry.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(cases, indent=1))
    print(f"wrote {len(cases)} cases to {out}")


if __name__ == "__main__":
    main()
