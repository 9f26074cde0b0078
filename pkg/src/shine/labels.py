"""Annotation I/O and label tooling.

Reads and writes the two annotation formats the pipeline speaks
(single-file YOLO text and per-image VOC XML), converts between them,
splits datasets reproducibly, reports class distributions, and applies
the rotation augmentation to box geometry.

YOLO label line: ``<class-id> <cx> <cy> <w> <h>`` with ``.`` decimals and
LF line endings.  An empty file is a valid negative sample.
"""

from __future__ import annotations

import math
import statistics
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass

from .domain import BBox, ClassVocabulary, Detection
from .errors import (
    AngleOutOfRange,
    DuplicateId,
    EmptyInput,
    MalformedLine,
    MalformedDocument,
    MissingDimensions,
    OutOfRange,
    UnknownClassName,
)
from .rng import SplitMix64


@dataclass(frozen=True)
class LabeledImage:
    """One annotated image; ``boxes`` may be empty (negative sample)."""

    image_id: str
    boxes: tuple[tuple[int, BBox], ...]
    width: int | None = None
    height: int | None = None


@dataclass(frozen=True)
class SplitSpec:
    """Reproducible train/validation split parameters."""

    train_fraction: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise OutOfRange(f"train fraction must be in (0, 1), got {self.train_fraction}")


@dataclass(frozen=True)
class AugmentationSpec:
    """Rotation angles (degrees) and an optional fixed pivot.

    ``pivot=None`` means each call rotates about the box group's center.
    """

    angles: tuple[float, ...]
    pivot: tuple[float, float] | None = None

    def __post_init__(self):
        for angle in self.angles:
            if abs(angle) > 90:
                raise AngleOutOfRange(f"|angle| must be <= 90 degrees, got {angle}")

    @classmethod
    def card_preset(cls) -> "AugmentationSpec":
        # Full-circle rotation is deliberately unavailable: upside-down
        # digits make 6 and 9 ambiguous, so badges rotate at most 60 deg.
        return cls(angles=(-60.0, -30.0, 30.0, 60.0))


def parse_yolo_labels(text: str) -> list[tuple[int, BBox]]:
    """Parse YOLO label text into (class-id, box) pairs in file order."""
    boxes: list[tuple[int, BBox]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise MalformedLine(f"line {lineno}: expected 5 fields, got {len(fields)}")
        try:
            class_id = int(fields[0])
            cx, cy, w, h = (float(v) for v in fields[1:])
        except ValueError:
            raise MalformedLine(f"line {lineno}: non-numeric field") from None
        if class_id < 0:
            raise OutOfRange(f"line {lineno}: negative class id")
        try:
            boxes.append((class_id, BBox(cx, cy, w, h)))
        except OutOfRange as exc:
            raise OutOfRange(f"line {lineno}: {exc}") from None
    return boxes


def write_yolo_labels(boxes: list[tuple[int, BBox]]) -> str:
    """Emit YOLO label text with 6-decimal coordinates, LF-terminated."""
    lines = [
        f"{cid} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}"
        for cid, b in boxes
    ]
    return "".join(line + "\n" for line in lines)


def parse_detections(text: str) -> list[Detection]:
    """Parse detection records: ``<class-id> <confidence> <cx> <cy> <w> <h>``."""
    dets: list[Detection] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 6:
            raise MalformedLine(f"line {lineno}: expected 6 fields, got {len(fields)}")
        try:
            class_id = int(fields[0])
            conf, cx, cy, w, h = (float(v) for v in fields[1:])
        except ValueError:
            raise MalformedLine(f"line {lineno}: non-numeric field") from None
        try:
            dets.append(Detection(class_id, BBox(cx, cy, w, h), conf))
        except OutOfRange as exc:
            raise OutOfRange(f"line {lineno}: {exc}") from None
    return dets


def write_detections(dets: list[Detection]) -> str:
    lines = [
        f"{d.class_id} {d.confidence:.6f} {d.box.cx:.6f} {d.box.cy:.6f} {d.box.w:.6f} {d.box.h:.6f}"
        for d in dets
    ]
    return "".join(line + "\n" for line in lines)


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def yolo_to_voc(item: LabeledImage, vocab: ClassVocabulary) -> str:
    """Render a LabeledImage as VOC XML text.

    Pixel corners are 0-based with half-up rounding, which keeps the
    round trip within one pixel per coordinate.
    """
    if item.width is None or item.height is None:
        raise MissingDimensions("VOC output needs pixel width and height")
    root = ET.Element("annotation")
    ET.SubElement(root, "filename").text = item.image_id
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = str(item.width)
    ET.SubElement(size, "height").text = str(item.height)
    ET.SubElement(size, "depth").text = "3"
    for class_id, box in item.boxes:
        x0, y0, x1, y1 = box.corners()
        obj = ET.SubElement(root, "object")
        ET.SubElement(obj, "name").text = vocab.token(class_id).name
        bnd = ET.SubElement(obj, "bndbox")
        ET.SubElement(bnd, "xmin").text = str(_round_half_up(x0 * item.width))
        ET.SubElement(bnd, "ymin").text = str(_round_half_up(y0 * item.height))
        ET.SubElement(bnd, "xmax").text = str(_round_half_up(x1 * item.width))
        ET.SubElement(bnd, "ymax").text = str(_round_half_up(y1 * item.height))
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def voc_to_yolo(xml_text: str, vocab: ClassVocabulary) -> LabeledImage:
    """Parse VOC XML back into a LabeledImage (inverse of yolo_to_voc)."""
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise MalformedDocument(f"not well-formed XML: {exc}") from None
    size = root.find("size")
    if size is None:
        raise MalformedDocument("missing <size> element")
    try:
        width = int(size.findtext("width"))
        height = int(size.findtext("height"))
    except (TypeError, ValueError):
        raise MalformedDocument("missing or non-integer image dimensions") from None
    if width <= 0 or height <= 0:
        raise MalformedDocument("image dimensions must be positive")
    boxes: list[tuple[int, BBox]] = []
    for obj in root.iter("object"):
        name = obj.findtext("name")
        try:
            class_id = vocab.id_of(name)
        except KeyError:
            raise UnknownClassName(f"class name {name!r} not in vocabulary") from None
        bnd = obj.find("bndbox")
        if bnd is None:
            raise MalformedDocument(f"object {name!r} lacks a bndbox")
        try:
            x0, y0, x1, y1 = (float(bnd.findtext(k)) for k in ("xmin", "ymin", "xmax", "ymax"))
        except (TypeError, ValueError):
            raise MalformedDocument(f"object {name!r} has malformed corners") from None
        boxes.append((class_id, BBox.from_corners(x0 / width, y0 / height, x1 / width, y1 / height)))
    image_id = root.findtext("filename") or ""
    return LabeledImage(image_id, tuple(boxes), width, height)


def split_dataset(ids: list[str], spec: SplitSpec) -> tuple[list[str], list[str]]:
    """Deterministic seeded split; |train| = floor(fraction * n)."""
    if not ids:
        raise EmptyInput("no image ids to split")
    if len(set(ids)) != len(ids):
        raise DuplicateId("image ids must be unique")
    shuffled = list(ids)
    SplitMix64(spec.seed).shuffle(shuffled)
    n_train = math.floor(spec.train_fraction * len(ids))
    return shuffled[:n_train], shuffled[n_train:]


def class_distribution(items: list[LabeledImage]) -> Counter:
    """Box count per class id; absent classes read as 0."""
    counts: Counter = Counter()
    for item in items:
        counts.update(cid for cid, _ in item.boxes)
    return counts


def group_center(boxes: list[BBox]) -> tuple[float, float]:
    """Center of the joint bounding box of a group."""
    corners = [b.corners() for b in boxes]
    x0 = min(c[0] for c in corners)
    y0 = min(c[1] for c in corners)
    x1 = max(c[2] for c in corners)
    y1 = max(c[3] for c in corners)
    return (x0 + x1) / 2, (y0 + y1) / 2


def rotate_boxes(
    boxes: list[BBox],
    angle_deg: float,
    pivot: tuple[float, float] | None = None,
) -> list[BBox]:
    """Axis-aligned hulls of the boxes after rigid rotation about ``pivot``.

    Each output box is the AABB of the input rectangle rotated by
    ``angle_deg`` (half extents ``(w/2)|cos| + (h/2)|sin|`` and
    ``(w/2)|sin| + (h/2)|cos|``) with its center rotated about the pivot.
    Results are clamped to the unit square; 90 degrees is the accepted
    boundary (it swaps width and height).
    """
    if abs(angle_deg) > 90:
        raise AngleOutOfRange(f"|angle| must be <= 90 degrees, got {angle_deg}")
    if pivot is None:
        if not boxes:
            return []
        pivot = group_center(boxes)
    px, py = pivot
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    abs_cos, abs_sin = abs(cos_t), abs(sin_t)
    out: list[BBox] = []
    for b in boxes:
        dx, dy = b.cx - px, b.cy - py
        ncx = px + dx * cos_t - dy * sin_t
        ncy = py + dx * sin_t + dy * cos_t
        half_w = (b.w / 2) * abs_cos + (b.h / 2) * abs_sin
        half_h = (b.w / 2) * abs_sin + (b.h / 2) * abs_cos
        x0 = max(0.0, ncx - half_w)
        x1 = min(1.0, ncx + half_w)
        y0 = max(0.0, ncy - half_h)
        y1 = min(1.0, ncy + half_h)
        if x1 <= x0 or y1 <= y0:
            raise OutOfRange("rotated box left the unit square entirely")
        out.append(BBox.from_corners(x0, y0, x1, y1))
    return out


def median_height(boxes: list[BBox]) -> float:
    return statistics.median(b.h for b in boxes)
