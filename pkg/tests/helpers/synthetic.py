"""Synthetic shape dataset: colored rectangles and discs with VOC-style XML.

Small, deterministic, and self-annotating: every generated image carries one
or two shapes whose bounding boxes are known exactly.
"""

import io
import random

import numpy as np
from PIL import Image


def _xml_for(filename, width, height, objects):
    parts = [
        "<annotation>",
        f"  <filename>{filename}</filename>",
        f"  <size><width>{width}</width><height>{height}</height><depth>3</depth></size>",
    ]
    for name, (x1, y1, x2, y2) in objects:
        parts += [
            "  <object>",
            f"    <name>{name}</name>",
            "    <bndbox>",
            f"      <xmin>{x1}</xmin><ymin>{y1}</ymin><xmax>{x2}</xmax><ymax>{y2}</ymax>",
            "    </bndbox>",
            "  </object>",
        ]
    parts.append("</annotation>")
    return "\n".join(parts).encode()


def make_shape_dataset(count=20, width=96, height=72, seed=11):
    """Return [(image_name, png_bytes, xml_name, xml_bytes, objects)].

    Classes: 'box' (filled rectangle) and 'disc' (filled ellipse); each image
    contains one of each, at seeded random positions.
    """
    rng = random.Random(seed)
    out = []
    for index in range(count):
        pixels = np.full((height, width, 3), 230, dtype=np.uint8)
        objects = []

        def place(margin=4, min_size=12, max_size=28):
            w = rng.randrange(min_size, max_size)
            h = rng.randrange(min_size, max_size)
            x1 = rng.randrange(margin, width - margin - w)
            y1 = rng.randrange(margin, height - margin - h)
            return x1, y1, x1 + w, y1 + h

        bx1, by1, bx2, by2 = place()
        pixels[by1:by2, bx1:bx2] = (200, 40, 40)
        objects.append(("box", (bx1, by1, bx2, by2)))

        dx1, dy1, dx2, dy2 = place()
        yy, xx = np.mgrid[0:height, 0:width]
        cx, cy = (dx1 + dx2) / 2, (dy1 + dy2) / 2
        rx, ry = (dx2 - dx1) / 2, (dy2 - dy1) / 2
        mask = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
        pixels[mask] = (40, 40, 200)
        objects.append(("disc", (dx1, dy1, dx2, dy2)))

        image_name = f"shape{index:03d}.png"
        buffer = io.BytesIO()
        Image.fromarray(pixels, mode="RGB").save(buffer, format="PNG")
        xml_name = f"shape{index:03d}.xml"
        out.append(
            (
                image_name,
                buffer.getvalue(),
                xml_name,
                _xml_for(image_name, width, height, objects),
                objects,
            )
        )
    return out


def perfect_detections(dataset, eval_names, width=96, height=72):
    """Detections identical to ground truth (score 1.0) for the named images.

    class ids follow the lexicographic labelmap: box=1, disc=2.
    """
    ids = {"box": 1, "disc": 2}
    detections = []
    for image_name, _, _, _, objects in dataset:
        if image_name not in eval_names:
            continue
        for class_name, (x1, y1, x2, y2) in objects:
            detections.append(
                {
                    "image_id": image_name,
                    "box": [x1 / width, y1 / height, x2 / width, y2 / height],
                    "class_id": ids[class_name],
                    "score": 1.0,
                }
            )
    return detections
