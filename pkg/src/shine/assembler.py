"""Turns character detections into plate and badge numbers.

Pipeline: cluster token boxes into one or two rows by vertical gaps,
order each row left to right, then match the flattened sequence against
the plate grammar (``REGION? DIGIT{2,3} MIDDLE DIGIT{4}``) and classify
the format.  Badge numbers are simply the four digit tokens in x order.
Ordering derives from geometry alone, so the result is independent of
input order and stable under rotations below 90 degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .domain import (
    BadgeClass,
    BBox,
    CanonicalPlate,
    ClassToken,
    ClassVocabulary,
    Detection,
    GENERIC_TAG,
    TokenKind,
    badge_class_of,
)
from .errors import (
    AmbiguousRows,
    EmptyInput,
    FormatConflict,
    NonDigitToken,
    NoParse,
    UnknownClassId,
    WrongDigitCount,
)
from .labels import median_height

# Consecutive y-center gaps above this fraction of the median box height
# start a new row; two-row plate geometry sits far above it while jitter
# stays below.
ROW_SPLIT_FACTOR = 0.6


@dataclass(frozen=True)
class TokenBox:
    """A character-level detection: token, box, confidence."""

    token: ClassToken
    box: BBox
    confidence: float

    def __post_init__(self):
        if not self.token.is_character:
            raise NonDigitToken(
                f"{self.token.name} ({self.token.kind.value}) is not a character token"
            )


@dataclass(frozen=True)
class RowLayout:
    """Tokens grouped top-to-bottom into rows, each ordered left-to-right."""

    rows: tuple[tuple[TokenBox, ...], ...]

    def __post_init__(self):
        for row in self.rows:
            for left, right in zip(row, row[1:]):
                if right.box.cx < left.box.cx:
                    raise ValueError("row tokens must be in non-decreasing x order")
        means = [sum(t.box.cy for t in row) / len(row) for row in self.rows if row]
        if any(b < a for a, b in zip(means, means[1:])):
            raise ValueError("rows must be ordered by ascending mean y")

    def flatten(self) -> list[TokenBox]:
        return [t for row in self.rows for t in row]


def _x_sorted(tokens: list[tuple[TokenBox, int]]) -> tuple[TokenBox, ...]:
    # Ties on x fall back to confidence (descending), then input order.
    ordered = sorted(tokens, key=lambda t: (t[0].box.cx, -t[0].confidence, t[1]))
    return tuple(t for t, _ in ordered)


def cluster_rows(
    tokens: list[TokenBox], *, row_split_factor: float = ROW_SPLIT_FACTOR
) -> RowLayout:
    """Partition tokens into one or two rows by vertical gaps.

    Tokens are sorted by y-center; a new row starts at any consecutive gap
    larger than ``row_split_factor`` times the median box height.  More
    than one qualifying gap cannot belong to any plate format.
    """
    if not tokens:
        raise EmptyInput("no tokens to cluster")
    indexed = sorted(enumerate(tokens), key=lambda it: it[1].box.cy)
    threshold = row_split_factor * median_height([t.box for t in tokens])
    split_points = [
        k + 1
        for k in range(len(indexed) - 1)
        if indexed[k + 1][1].box.cy - indexed[k][1].box.cy > threshold
    ]
    if len(split_points) > 1:
        raise AmbiguousRows(f"{len(split_points) + 1} separated rows; plates have at most 2")
    groups = [indexed] if not split_points else [indexed[: split_points[0]], indexed[split_points[0]:]]
    return RowLayout(tuple(_x_sorted([(t, i) for i, t in g]) for g in groups))


def _classify_korean(
    region: str | None, leading: str, rows: int, plate_value: str | None
) -> str:
    if region is not None:
        if len(leading) != 2:
            raise FormatConflict("regional plates take exactly 2 leading digits")
        if plate_value != "green":
            raise FormatConflict("regional plates are green")
        if rows != 2:
            raise FormatConflict("regional plates are two-row")
        return "e"
    if len(leading) == 3:
        if plate_value != "white":
            raise FormatConflict("3 leading digits only occur on white plates")
        if rows != 1:
            raise FormatConflict("3-leading-digit plates are single-row")
        return "a"
    if plate_value == "electric":
        if rows != 1:
            raise FormatConflict("electric plates are single-row")
        return "b"
    if plate_value == "white":
        if rows != 1:
            raise FormatConflict("two-row white plates do not exist")
        return "c"
    if plate_value == "green":
        if rows != 2:
            raise FormatConflict("non-regional green plates are two-row")
        return "d"
    raise FormatConflict(f"plate class {plate_value!r} matches no format")


def parse_plate(
    layout: RowLayout, plate_class: ClassToken, mode: str = "korean"
) -> CanonicalPlate:
    """Match a row layout against the plate grammar and classify its format.

    ``mode`` is ``korean`` (Hangul middle slot, optional region) or
    ``generic-alnum`` (any alphanumeric middle, no regions).
    """
    if plate_class.kind is not TokenKind.PLATE_TYPE:
        raise ValueError(f"{plate_class.name} is not a plate-type token")
    if mode not in ("korean", "generic-alnum"):
        raise ValueError(f"unknown parse mode {mode!r}")
    seq = layout.flatten()
    if not seq:
        raise EmptyInput("empty layout")

    region = None
    if mode == "korean":
        if seq[0].token.kind is TokenKind.REGION:
            region = str(seq[0].token.value)
            seq = seq[1:]
        if any(t.token.kind is TokenKind.REGION for t in seq):
            raise NoParse("region tokens may only open the plate")
        middles = [i for i, t in enumerate(seq) if t.token.kind in
                   (TokenKind.HANGUL_PRIVATE, TokenKind.HANGUL_RENTAL)]
        if len(middles) != 1:
            raise NoParse(f"expected exactly one Hangul token, found {len(middles)}")
        mid = middles[0]
        if any(t.token.kind is not TokenKind.DIGIT for i, t in enumerate(seq) if i != mid):
            raise NoParse("plate positions around the middle slot must be digits")
    else:
        bad = [t for t in seq if t.token.kind not in (TokenKind.DIGIT, TokenKind.ALNUM)]
        if bad:
            raise NoParse(f"{bad[0].token.name} cannot appear on an alphanumeric plate")
        letters = [i for i, t in enumerate(seq) if t.token.kind is TokenKind.ALNUM]
        if len(letters) > 1:
            raise NoParse(f"expected at most one letter, found {len(letters)}")
        # All-digit sequences take the positional middle slot (5th from the end).
        mid = letters[0] if letters else len(seq) - 5
        if mid < 0:
            raise WrongDigitCount(f"{len(seq)} tokens cannot form a plate")

    leading_tokens, serial_tokens = seq[:mid], seq[mid + 1:]
    if len(serial_tokens) != 4:
        raise WrongDigitCount(f"serial needs exactly 4 digits, got {len(serial_tokens)}")
    if len(leading_tokens) not in (2, 3):
        raise WrongDigitCount(f"leading group needs 2 or 3 digits, got {len(leading_tokens)}")
    if mode == "generic-alnum" and any(
        t.token.kind is not TokenKind.DIGIT for t in leading_tokens + serial_tokens
    ):
        raise NoParse("leading and serial groups must be digits")

    leading = "".join(t.token.text() for t in leading_tokens)
    serial = "".join(t.token.text() for t in serial_tokens)
    middle = seq[mid].token.text()
    if mode == "korean":
        tag = _classify_korean(region, leading, len(layout.rows), plate_class.value)
    else:
        tag = GENERIC_TAG
    return CanonicalPlate(tag, leading, middle, serial, region)


def assemble_card(tokens: list[TokenBox], badge_class: BadgeClass | None = None) -> str:
    """The badge's 4-digit number, read left to right."""
    if len(tokens) != 4:
        raise WrongDigitCount(f"badge numbers have exactly 4 digits, got {len(tokens)}")
    for t in tokens:
        if t.token.kind is not TokenKind.DIGIT:
            raise NonDigitToken(f"{t.token.name} is not a digit token")
    ordered = _x_sorted(list(zip(tokens, range(len(tokens)))))
    return "".join(t.token.text() for t in ordered)


def check_badge_link(plate: CanonicalPlate, card: str) -> bool:
    """Whether the card number equals the plate serial.

    The link usually holds but is advisory only; a mismatch never denies
    authorization by itself.
    """
    return card == plate.serial


@dataclass(frozen=True)
class SceneReading:
    """What the assembler extracted from one scene's detections."""

    plate: CanonicalPlate | None
    card: str | None
    badge: BadgeClass | None
    serial_link_ok: bool | None  # advisory; None unless both sides were read


def _pick_type_box(cands: list[Detection], what: str) -> Detection | None:
    if not cands:
        return None
    best = max(cands, key=lambda d: d.confidence)
    ties = [d for d in cands if d.confidence == best.confidence]
    if len(ties) > 1:
        raise FormatConflict(f"{len(ties)} equally confident {what} detections")
    return best


def _nearer(box: BBox, a: BBox, b: BBox) -> bool:
    """True when ``box`` center is nearer to ``a`` than to ``b``."""
    da = (box.cx - a.cx) ** 2 + (box.cy - a.cy) ** 2
    db = (box.cx - b.cx) ** 2 + (box.cy - b.cy) ** 2
    return da <= db


def assemble_scene(
    dets: list[Detection],
    vocab: ClassVocabulary,
    *,
    mode: str = "korean",
    row_split_factor: float = ROW_SPLIT_FACTOR,
) -> SceneReading:
    """Read one scene: split detections into plate and badge groups, then
    parse each.

    Character tokens go to the plate or badge group by nearest type-box
    center (all to the single group when only one type box is present).
    Multiple plate-type or badge-type detections resolve by highest
    confidence; an exact tie is an error rather than a silent guess.
    """
    plate_types: list[Detection] = []
    badge_types: list[Detection] = []
    chars: list[tuple[ClassToken, Detection]] = []
    for det in dets:
        try:
            token = vocab.token(det.class_id)
        except KeyError:
            raise UnknownClassId(f"class id {det.class_id} not in vocabulary") from None
        if token.kind is TokenKind.PLATE_TYPE:
            plate_types.append(det)
        elif token.kind is TokenKind.BADGE_TYPE:
            badge_types.append(det)
        elif token.is_character:
            chars.append((token, det))
        # vehicle boxes carry no characters; ignored here

    plate_box = _pick_type_box(plate_types, "plate-type")
    badge_box = _pick_type_box(badge_types, "badge-type")

    plate_tokens: list[TokenBox] = []
    badge_tokens: list[TokenBox] = []
    for token, det in chars:
        tb = TokenBox(token, det.box, det.confidence)
        if plate_box is not None and badge_box is not None:
            if _nearer(det.box, plate_box.box, badge_box.box):
                plate_tokens.append(tb)
            else:
                badge_tokens.append(tb)
        elif badge_box is not None:
            badge_tokens.append(tb)
        else:
            plate_tokens.append(tb)

    plate = None
    if plate_box is not None:
        if not plate_tokens:
            raise NoParse("plate-type box without character tokens")
        layout = cluster_rows(plate_tokens, row_split_factor=row_split_factor)
        plate = parse_plate(layout, vocab.token(plate_box.class_id), mode)
    elif plate_tokens:
        raise NoParse("character tokens without a plate-type detection")

    card = None
    badge = None
    if badge_box is not None:
        badge = badge_class_of(vocab.token(badge_box.class_id))
        card = assemble_card(badge_tokens, badge)

    link = check_badge_link(plate, card) if plate is not None and card is not None else None
    return SceneReading(plate, card, badge, link)
