"""Class vocabulary, box geometry, and canonical plate/badge values.

Everything in this module is immutable and validated at construction, so
downstream stages can assume well-formed values.  The class universe is
configuration-driven: a tab-separated class-map file assigns every
detector class id a name, a kind, and (for character and type classes)
a payload value.  Two maps ship with the package: the 69-class Korean
map used throughout, and a 36-class Latin alphanumeric map.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import (
    DuplicateId,
    DuplicateName,
    InvalidPlate,
    InvalidToken,
    MalformedClassEntry,
    MissingDigit,
    NonDenseIds,
    NotRomanizable,
    OutOfRange,
    UnknownKind,
)

EDGE_EPSILON = 1e-6

# Hangul usable in the middle slot of private-vehicle plates, in the
# customary dictionary order, plus the three rental-fleet syllables.
PRIVATE_HANGUL = (
    "가", "나", "다", "라", "마",
    "거", "너", "더", "러", "머", "버", "서", "어", "저",
    "고", "노", "도", "로", "모", "보", "소", "오", "조",
    "구", "누", "두", "루", "무", "부", "수", "우", "주",
)
RENTAL_HANGUL = ("허", "하", "호")
REGIONS = (
    "강원", "경기", "경남", "경북", "광주", "대구", "대전", "부산", "서울",
    "세종", "울산", "인천", "전남", "전북", "제주", "충남", "충북",
)

# Revised-Romanization transliterations, used for class names and for the
# secondary (log-friendly) plate rendering.
HANGUL_ROMAN = {
    "가": "ga", "나": "na", "다": "da", "라": "ra", "마": "ma",
    "거": "geo", "너": "neo", "더": "deo", "러": "reo", "머": "meo",
    "버": "beo", "서": "seo", "어": "eo", "저": "jeo",
    "고": "go", "노": "no", "도": "do", "로": "ro", "모": "mo",
    "보": "bo", "소": "so", "오": "o", "조": "jo",
    "구": "gu", "누": "nu", "두": "du", "루": "ru", "무": "mu",
    "부": "bu", "수": "su", "우": "u", "주": "ju",
    "허": "heo", "하": "ha", "호": "ho",
}
REGION_ROMAN = {
    "강원": "Gangwon", "경기": "Gyeonggi", "경남": "Gyeongnam",
    "경북": "Gyeongbuk", "광주": "Gwangju", "대구": "Daegu",
    "대전": "Daejeon", "부산": "Busan", "서울": "Seoul", "세종": "Sejong",
    "울산": "Ulsan", "인천": "Incheon", "전남": "Jeonnam",
    "전북": "Jeonbuk", "제주": "Jeju", "충남": "Chungnam", "충북": "Chungbuk",
}

# Latin characters allowed in alphanumeric mode; I and O are excluded
# because plates substitute 1 and 0 for them.
ALNUM_LETTERS = tuple(c for c in "ABCDEFGHIJKLMNOPQRSTUVWXYZ" if c not in "IO")


class TokenKind(str, enum.Enum):
    VEHICLE = "vehicle"
    PLATE_TYPE = "plate-type"
    BADGE_TYPE = "badge-type"
    DIGIT = "digit"
    HANGUL_PRIVATE = "hangul-private"
    HANGUL_RENTAL = "hangul-rental"
    REGION = "region"
    ALNUM = "alnum"


CHARACTER_KINDS = frozenset({
    TokenKind.DIGIT,
    TokenKind.HANGUL_PRIVATE,
    TokenKind.HANGUL_RENTAL,
    TokenKind.REGION,
    TokenKind.ALNUM,
})

PLATE_CLASS_VALUES = ("white", "electric", "green")
BADGE_CLASS_VALUES = ("white", "yellow", "brown", "legacy")


class BadgeClass(str, enum.Enum):
    """Access-badge colour; white = disabled person, yellow = guardian or
    welfare institution, brown = disabled person of national merit."""

    WHITE = "white"
    YELLOW = "yellow"
    BROWN = "brown"


HOLDER_BADGE = {
    "disabled": BadgeClass.WHITE,
    "guardian": BadgeClass.YELLOW,
    "institution": BadgeClass.YELLOW,
    "national_merit": BadgeClass.BROWN,
}


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in normalized center form (cx, cy, w, h).

    All coordinates are fractions of the image dimensions; the box must
    fit the unit square up to a 1e-6 tolerance.
    """

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise OutOfRange(f"box extent must be positive, got w={self.w} h={self.h}")
        for lo, hi, axis in (
            (self.cx - self.w / 2, self.cx + self.w / 2, "x"),
            (self.cy - self.h / 2, self.cy + self.h / 2, "y"),
        ):
            if lo < -EDGE_EPSILON or hi > 1 + EDGE_EPSILON:
                raise OutOfRange(f"box leaves the unit square on {axis}: [{lo}, {hi}]")

    def corners(self) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) corner form."""
        return (
            self.cx - self.w / 2,
            self.cy - self.h / 2,
            self.cx + self.w / 2,
            self.cy + self.h / 2,
        )

    @classmethod
    def from_corners(cls, x0: float, y0: float, x1: float, y1: float) -> "BBox":
        return cls((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)

    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class ClassToken:
    """One detector class: a name, a kind, and an optional payload value.

    Payloads: digits carry the int 0-9, Hangul kinds the syllable, regions
    the Korean region string, alnum a single Latin character or digit.
    Plate-type and badge-type classes may carry a semantic colour value so
    the pipeline stays vocabulary-driven rather than name-driven.
    """

    name: str
    kind: TokenKind
    value: object = None

    def __post_init__(self):
        if not isinstance(self.kind, TokenKind):
            raise UnknownKind(f"unknown token kind: {self.kind!r}")
        if not self.name:
            raise InvalidToken("token name must be non-empty")
        k, v = self.kind, self.value
        if k is TokenKind.DIGIT:
            if not (isinstance(v, int) and 0 <= v <= 9):
                raise InvalidToken(f"digit token needs a value in 0..9, got {v!r}")
        elif k is TokenKind.HANGUL_PRIVATE:
            if v not in PRIVATE_HANGUL:
                raise InvalidToken(f"{v!r} is not a private-plate Hangul character")
        elif k is TokenKind.HANGUL_RENTAL:
            if v not in RENTAL_HANGUL:
                raise InvalidToken(f"{v!r} is not a rental-plate Hangul character")
        elif k is TokenKind.REGION:
            if v not in REGIONS:
                raise InvalidToken(f"{v!r} is not a known region")
        elif k is TokenKind.ALNUM:
            ok = isinstance(v, str) and len(v) == 1 and (v in ALNUM_LETTERS or v.isdigit())
            if not ok:
                raise InvalidToken(f"alnum token needs a single A-Z (no I/O) or 0-9 char, got {v!r}")
        elif k is TokenKind.PLATE_TYPE:
            if v is not None and v not in PLATE_CLASS_VALUES:
                raise InvalidToken(f"plate-type value must be one of {PLATE_CLASS_VALUES}, got {v!r}")
        elif k is TokenKind.BADGE_TYPE:
            if v is not None and v not in BADGE_CLASS_VALUES:
                raise InvalidToken(f"badge-type value must be one of {BADGE_CLASS_VALUES}, got {v!r}")
        elif v is not None:
            raise InvalidToken(f"{k.value} tokens carry no value, got {v!r}")

    @property
    def is_character(self) -> bool:
        return self.kind in CHARACTER_KINDS

    def text(self) -> str:
        """The character this token contributes to a plate/card string."""
        if self.kind is TokenKind.DIGIT:
            return str(self.value)
        if self.is_character:
            return str(self.value)
        raise InvalidToken(f"{self.name} ({self.kind.value}) has no text form")


def badge_class_of(token: ClassToken) -> BadgeClass | None:
    """Badge colour of a badge-type token; None for legacy badge classes."""
    if token.kind is not TokenKind.BADGE_TYPE:
        raise InvalidToken(f"{token.name} is not a badge-type token")
    if token.value in (None, "legacy"):
        return None
    return BadgeClass(token.value)


class ClassVocabulary:
    """Ordered, validated mapping between class ids and tokens.

    Ids must be dense over 0..N-1 and names unique; entry order follows
    the source file.  With ``require_digits`` (the default for plate
    pipelines) all ten digit classes must be present.
    """

    def __init__(self, entries: list[tuple[int, ClassToken]], *, require_digits: bool = True):
        by_id: dict[int, ClassToken] = {}
        by_name: dict[str, int] = {}
        for class_id, token in entries:
            if class_id in by_id:
                raise DuplicateId(f"class id {class_id} defined twice")
            if token.name in by_name:
                raise DuplicateName(f"class name {token.name!r} defined twice")
            by_id[class_id] = token
            by_name[token.name] = class_id
        if require_digits:
            digits = {t.value for t in by_id.values() if t.kind is TokenKind.DIGIT}
            missing = sorted(set(range(10)) - digits)
            if missing:
                raise MissingDigit(f"digit classes missing from vocabulary: {missing}")
        if by_id and set(by_id) != set(range(len(by_id))):
            raise NonDenseIds(f"class ids must cover 0..{len(by_id) - 1} without gaps")
        self._entries = tuple(entries)
        self._by_id = by_id
        self._by_name = by_name
        self._by_value = {}
        for class_id, token in entries:
            self._by_value.setdefault((token.kind, token.value), class_id)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    @property
    def entries(self) -> tuple[tuple[int, ClassToken], ...]:
        return self._entries

    def token(self, class_id: int) -> ClassToken:
        try:
            return self._by_id[class_id]
        except KeyError:
            raise KeyError(f"class id {class_id} not in vocabulary") from None

    def __contains__(self, class_id: int) -> bool:
        return class_id in self._by_id

    def id_of(self, name: str) -> int:
        return self._by_name[name]

    def id_for(self, kind: TokenKind, value) -> int:
        """Class id of the first entry with this kind/value payload."""
        return self._by_value[(kind, value)]

    def ids_of_kind(self, kind: TokenKind) -> list[int]:
        return [i for i, t in self._entries if t.kind is kind]

    def digit_id(self, digit: int) -> int:
        return self.id_for(TokenKind.DIGIT, digit)


def parse_class_map(text: str, *, require_digits: bool = True) -> ClassVocabulary:
    """Parse class-map text: ``<id>\\t<name>\\t<kind>[\\t<value>]`` per line.

    Blank lines and lines starting with ``#`` are ignored.
    """
    entries: list[tuple[int, ClassToken]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) not in (3, 4):
            raise MalformedClassEntry(f"line {lineno}: expected 3 or 4 tab-separated fields")
        try:
            class_id = int(fields[0])
        except ValueError:
            raise MalformedClassEntry(f"line {lineno}: class id {fields[0]!r} is not an integer") from None
        if class_id < 0:
            raise MalformedClassEntry(f"line {lineno}: class id must be non-negative")
        try:
            kind = TokenKind(fields[2])
        except ValueError:
            raise UnknownKind(f"line {lineno}: unknown kind {fields[2]!r}") from None
        value: object = fields[3] if len(fields) == 4 else None
        if kind is TokenKind.DIGIT and value is not None:
            try:
                value = int(value)
            except ValueError:
                raise MalformedClassEntry(f"line {lineno}: digit value {value!r} is not an integer") from None
        entries.append((class_id, ClassToken(fields[1], kind, value)))
    return ClassVocabulary(entries, require_digits=require_digits)


def load_vocabulary(path: str | Path, *, require_digits: bool = True) -> ClassVocabulary:
    """Load and validate a class-map file."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_class_map(text, require_digits=require_digits)


def _packaged_map(name: str, *, require_digits: bool = True) -> ClassVocabulary:
    text = resources.files("shine.data").joinpath(name).read_text(encoding="utf-8")
    return parse_class_map(text, require_digits=require_digits)


def default_korean_vocabulary() -> ClassVocabulary:
    """The shipped 69-class Korean map (vehicle, plate/badge types,
    digits, 35 Hangul, 15 regions)."""
    return _packaged_map("korean_69.classes")


def full_korean_vocabulary() -> ClassVocabulary:
    """Like the default map but with all 17 regions (71 classes)."""
    return _packaged_map("korean_71.classes")


def alnum_vocabulary() -> ClassVocabulary:
    """The shipped 36-class Latin map for alphanumeric plates."""
    return _packaged_map("alnum_36.classes")


@dataclass(frozen=True)
class Detection:
    """One class-labelled box with confidence - the detector's output unit."""

    class_id: int
    box: BBox
    confidence: float

    def __post_init__(self):
        if self.class_id < 0:
            raise OutOfRange(f"class id must be non-negative, got {self.class_id}")
        if not (0.0 <= self.confidence <= 1.0):
            raise OutOfRange(f"confidence must be in [0, 1], got {self.confidence}")


GENERIC_TAG = "generic-alnum"
KOREAN_TAGS = ("a", "b", "c", "d", "e")


@dataclass(frozen=True)
class PlateFormat:
    """Static description of one plate layout family."""

    tag: str
    leading_digits: int
    rows: int
    region_required: bool
    plate_class: str | None  # plate-type payload value; None in generic mode

    def __post_init__(self):
        if self.tag not in KOREAN_TAGS and self.tag != GENERIC_TAG:
            raise InvalidPlate(f"unknown format tag {self.tag!r}")
        if self.leading_digits not in (2, 3):
            raise InvalidPlate("leading digit count must be 2 or 3")
        if self.rows not in (1, 2):
            raise InvalidPlate("row count must be 1 or 2")
        if self.tag == "a" and (self.leading_digits != 3 or self.rows != 1):
            raise InvalidPlate("format a is single-row with 3 leading digits")
        if self.tag == "d" and (self.rows != 2 or self.plate_class != "green"):
            raise InvalidPlate("format d is a two-row green plate")
        if self.tag == "e" and (not self.region_required or self.rows != 2):
            raise InvalidPlate("format e is a two-row regional plate")
        if self.region_required and self.tag != "e":
            raise InvalidPlate(f"format {self.tag} carries no region")


_FORMATS = {
    "a": PlateFormat("a", 3, 1, False, "white"),
    "b": PlateFormat("b", 2, 1, False, "electric"),
    "c": PlateFormat("c", 2, 1, False, "white"),
    "d": PlateFormat("d", 2, 2, False, "green"),
    "e": PlateFormat("e", 2, 2, True, "green"),
}


def plate_format(tag: str, *, leading_digits: int | None = None) -> PlateFormat:
    """The canonical PlateFormat for a tag; generic needs the digit count."""
    if tag == GENERIC_TAG:
        if leading_digits not in (2, 3):
            raise InvalidPlate("generic format needs leading_digits of 2 or 3")
        return PlateFormat(GENERIC_TAG, leading_digits, 1, False, None)
    try:
        return _FORMATS[tag]
    except KeyError:
        raise InvalidPlate(f"unknown format tag {tag!r}") from None


@dataclass(frozen=True)
class CanonicalPlate:
    """A parsed, format-classified plate number in canonical form.

    ``rendering`` joins the populated fields with single ASCII spaces:
    ``[region] leading middle serial``.
    """

    tag: str
    leading: str
    middle: str
    serial: str
    region: str | None = None

    def __post_init__(self):
        if self.tag not in KOREAN_TAGS and self.tag != GENERIC_TAG:
            raise InvalidPlate(f"unknown format tag {self.tag!r}")
        if not (self.leading.isdigit() and len(self.leading) in (2, 3)):
            raise InvalidPlate(f"leading group must be 2-3 digits, got {self.leading!r}")
        if not (self.serial.isdigit() and len(self.serial) == 4):
            raise InvalidPlate(f"serial must be exactly 4 digits, got {self.serial!r}")
        if len(self.middle) != 1:
            raise InvalidPlate(f"middle slot holds one character, got {self.middle!r}")
        if self.tag == GENERIC_TAG:
            if not (self.middle in ALNUM_LETTERS or self.middle.isdigit()):
                raise InvalidPlate(f"generic middle slot must be alphanumeric, got {self.middle!r}")
        elif self.middle not in PRIVATE_HANGUL and self.middle not in RENTAL_HANGUL:
            raise InvalidPlate(f"middle slot must be a plate Hangul character, got {self.middle!r}")
        expected_leading = 3 if self.tag == "a" else 2
        if self.tag != GENERIC_TAG and len(self.leading) != expected_leading:
            raise InvalidPlate(f"format {self.tag} takes {expected_leading} leading digits")
        if self.tag == "e":
            if self.region not in REGIONS:
                raise InvalidPlate(f"format e requires a region, got {self.region!r}")
        elif self.region is not None:
            raise InvalidPlate(f"format {self.tag} carries no region")

    @property
    def rendering(self) -> str:
        parts = [] if self.region is None else [self.region]
        parts += [self.leading, self.middle, self.serial]
        return " ".join(parts)

    @property
    def format(self) -> PlateFormat:
        return plate_format(self.tag, leading_digits=len(self.leading))


def render_canonical(plate: CanonicalPlate) -> str:
    """Canonical space-separated string; injective over valid plates."""
    return plate.rendering


def romanize(token: ClassToken) -> str:
    """Fixed transliteration of a Hangul or region token."""
    if token.kind in (TokenKind.HANGUL_PRIVATE, TokenKind.HANGUL_RENTAL):
        return HANGUL_ROMAN[token.value]
    if token.kind is TokenKind.REGION:
        return REGION_ROMAN[token.value]
    raise NotRomanizable(f"{token.name} ({token.kind.value}) has no romanization")


def render_romanized(plate: CanonicalPlate) -> str:
    """Secondary, log-friendly rendering with the middle slot romanized."""
    middle = HANGUL_ROMAN.get(plate.middle, plate.middle)
    parts = [] if plate.region is None else [REGION_ROMAN[plate.region]]
    parts += [plate.leading, middle, plate.serial]
    return " ".join(parts)
