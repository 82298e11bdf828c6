"""Annotation parsing, labelmap construction, and dataset splitting.

Accepts Pascal-VOC-style XML (one image per document) and CSV with header
``filename,width,height,class,xmin,ymin,xmax,ymax`` (column order free).
Coordinates are kept as reals here; truncation to integers happens at
record-encoding time.
"""

from __future__ import annotations

import csv
import io
import random
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class BoundingBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float
    class_name: str


@dataclass
class AnnotatedImage:
    filename: str
    width: int
    height: int
    boxes: list[BoundingBox] = field(default_factory=list)


@dataclass(frozen=True)
class LabelMap:
    """Ordered (id, name) entries; ids contiguous from 1, 0 reserved."""

    entries: tuple[tuple[int, str], ...]

    def __post_init__(self):
        ids = [i for i, _ in self.entries]
        names = [n for _, n in self.entries]
        if ids != list(range(1, len(ids) + 1)):
            raise ValidationError("labelmap ids must be contiguous from 1")
        if len(set(names)) != len(names) or any(not n for n in names):
            raise ValidationError("labelmap names must be unique and non-empty")

    def ids_by_name(self) -> dict[str, int]:
        return {name: i for i, name in self.entries}

    def names_by_id(self) -> dict[int, str]:
        return {i: name for i, name in self.entries}

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class DatasetSplit:
    train: list[AnnotatedImage]
    eval: list[AnnotatedImage]
    ratio: float
    seed: int


def _check_box(box: BoundingBox, width: float, height: float, where: str) -> None:
    if not box.class_name:
        raise ParseError(f"{where}: empty class name")
    if not (0 <= box.xmin < box.xmax <= width):
        raise ParseError(
            f"{where}: x range [{box.xmin}, {box.xmax}] invalid for width {width}"
        )
    if not (0 <= box.ymin < box.ymax <= height):
        raise ParseError(
            f"{where}: y range [{box.ymin}, {box.ymax}] invalid for height {height}"
        )


def _coord(text: str | None, element: str) -> float:
    try:
        return float(text)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        raise ParseError(f"non-numeric coordinate in <{element}>") from None


def parse_voc_xml(content: bytes) -> AnnotatedImage:
    """Parse one VOC-style <annotation> document."""
    try:
        root = ET.fromstring(content)
    except ET.ParseError as exc:
        raise ParseError(f"malformed XML: {exc}") from exc

    filename_el = root.find("filename")
    if filename_el is None or not (filename_el.text or "").strip():
        raise ParseError("missing <filename>")
    filename = filename_el.text.strip()

    size = root.find("size")
    if size is None:
        raise ParseError("missing <size>")
    width = _coord(size.findtext("width"), "width")
    height = _coord(size.findtext("height"), "height")
    if width <= 0 or height <= 0:
        raise ParseError("<size> must be positive")

    boxes = []
    for obj in root.findall("object"):
        name = (obj.findtext("name") or "").strip()
        bnd = obj.find("bndbox")
        if bnd is None:
            raise ParseError(f"object '{name}': missing <bndbox>")
        box = BoundingBox(
            xmin=_coord(bnd.findtext("xmin"), "xmin"),
            ymin=_coord(bnd.findtext("ymin"), "ymin"),
            xmax=_coord(bnd.findtext("xmax"), "xmax"),
            ymax=_coord(bnd.findtext("ymax"), "ymax"),
            class_name=name,
        )
        _check_box(box, width, height, f"object '{name}'")
        boxes.append(box)
    return AnnotatedImage(filename, int(width), int(height), boxes)


_CSV_COLUMNS = ("filename", "width", "height", "class", "xmin", "ymin", "xmax", "ymax")


def parse_annotation_csv(content: bytes) -> list[AnnotatedImage]:
    """Parse CSV rows into images grouped by filename (first-seen order)."""
    text = content.decode("utf-8-sig")
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ParseError("empty CSV: missing header row")
    missing = [c for c in _CSV_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise ParseError(f"missing CSV column(s): {', '.join(missing)}")

    images: dict[str, AnnotatedImage] = {}
    for row_no, row in enumerate(reader, start=2):
        where = f"row {row_no}"
        filename = (row.get("filename") or "").strip()
        if not filename:
            raise ParseError(f"{where}: empty filename")

        def num(col: str) -> float:
            value = row.get(col)
            if value is None or not value.strip():
                raise ParseError(f"{where}: missing value for '{col}'")
            try:
                return float(value)
            except ValueError:
                raise ParseError(f"{where}: non-numeric '{col}': {value!r}") from None

        width, height = num("width"), num("height")
        if width <= 0 or height <= 0:
            raise ParseError(f"{where}: non-positive image size")
        box = BoundingBox(
            xmin=num("xmin"),
            ymin=num("ymin"),
            xmax=num("xmax"),
            ymax=num("ymax"),
            class_name=(row.get("class") or "").strip(),
        )
        _check_box(box, width, height, where)

        img = images.get(filename)
        if img is None:
            images[filename] = AnnotatedImage(filename, int(width), int(height), [box])
        else:
            if img.width != int(width) or img.height != int(height):
                raise ParseError(
                    f"{where}: size {int(width)}x{int(height)} conflicts with "
                    f"earlier {img.width}x{img.height} for '{filename}'"
                )
            img.boxes.append(box)
    return list(images.values())


def build_labelmap(images: list[AnnotatedImage]) -> LabelMap:
    """Distinct class names, sorted lexicographically, ids from 1."""
    names = sorted({box.class_name for img in images for box in img.boxes})
    if not names:
        raise ValidationError("no annotated boxes: cannot build labelmap")
    return LabelMap(tuple((i, name) for i, name in enumerate(names, start=1)))


def _escape(name: str) -> str:
    return name.replace("\\", "\\\\").replace("'", "\\'")


def _unescape(raw: str) -> str:
    out = []
    i = 0
    while i < len(raw):
        if raw[i] == "\\" and i + 1 < len(raw):
            out.append(raw[i + 1])
            i += 2
        else:
            out.append(raw[i])
            i += 1
    return "".join(out)


def render_labelmap_text(labelmap: LabelMap) -> str:
    """Emit the labelmap text format, blocks separated by blank lines."""
    blocks = [
        f"item {{\n  id: {i}\n  name: '{_escape(name)}'\n}}\n"
        for i, name in labelmap.entries
    ]
    return "\n".join(blocks)


def parse_labelmap_text(text: str) -> LabelMap:
    """Inverse of render_labelmap_text."""
    entries: list[tuple[int, str]] = []
    current_id: int | None = None
    current_name: str | None = None
    in_item = False
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line:
            continue
        if line == "item {":
            if in_item:
                raise ParseError(f"line {line_no}: nested item block")
            in_item, current_id, current_name = True, None, None
        elif line == "}":
            if not in_item or current_id is None or current_name is None:
                raise ParseError(f"line {line_no}: incomplete item block")
            entries.append((current_id, current_name))
            in_item = False
        elif line.startswith("id:"):
            try:
                current_id = int(line[3:].strip())
            except ValueError:
                raise ParseError(f"line {line_no}: bad id") from None
        elif line.startswith("name:"):
            value = line[5:].strip()
            if len(value) < 2 or value[0] != "'" or value[-1] != "'":
                raise ParseError(f"line {line_no}: name must be single-quoted")
            current_name = _unescape(value[1:-1])
        else:
            raise ParseError(f"line {line_no}: unrecognized line {line!r}")
    if in_item:
        raise ParseError("unterminated item block")
    entries.sort(key=lambda e: e[0])
    return LabelMap(tuple(entries))


def split_dataset(
    images: list[AnnotatedImage], ratio: float = 0.8, seed: int = 0
) -> DatasetSplit:
    """Seeded shuffle, first round(ratio*N) images to train (round half up)."""
    if len(images) < 2:
        raise ValidationError("need at least 2 images to split")
    if not 0 < ratio < 1:
        raise ValidationError("ratio must be in (0, 1)")
    shuffled = list(images)
    random.Random(seed).shuffle(shuffled)
    n_train = int(ratio * len(images) + 0.5)
    return DatasetSplit(shuffled[:n_train], shuffled[n_train:], ratio, seed)


@dataclass
class ValidationReport:
    missing_images: list[str] = field(default_factory=list)
    invalid_boxes: list[str] = field(default_factory=list)
    duplicate_filenames: list[str] = field(default_factory=list)
    zero_box_images: list[str] = field(default_factory=list)  # warnings only

    @property
    def ok(self) -> bool:
        return not (self.missing_images or self.invalid_boxes or self.duplicate_filenames)

    def to_dict(self) -> dict:
        return {
            "missing_images": self.missing_images,
            "invalid_boxes": self.invalid_boxes,
            "duplicate_filenames": self.duplicate_filenames,
            "zero_box_images": self.zero_box_images,
            "ok": self.ok,
        }


def validate_dataset(
    images: list[AnnotatedImage], available_files: set[str]
) -> ValidationReport:
    """Cross-check annotations against the files actually present.

    ``available_files`` holds image basenames (or paths ending in them).
    """
    report = ValidationReport()
    basenames = {name.rsplit("/", 1)[-1] for name in available_files}
    seen: set[str] = set()
    for img in images:
        if img.filename in seen:
            report.duplicate_filenames.append(img.filename)
        seen.add(img.filename)
        if img.filename not in basenames:
            report.missing_images.append(img.filename)
        if not img.boxes:
            report.zero_box_images.append(img.filename)
        for box in img.boxes:
            if not (0 <= box.xmin < box.xmax <= img.width) or not (
                0 <= box.ymin < box.ymax <= img.height
            ):
                report.invalid_boxes.append(
                    f"{img.filename}: ({box.xmin}, {box.ymin}, {box.xmax}, {box.ymax})"
                )
    return report
