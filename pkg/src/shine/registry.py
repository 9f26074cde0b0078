"""The central registry: plate-card-badge links, verification, audit log.

The registry file is UTF-8 text with one JSON object per line
(``plate``, ``card``, ``badge_class``, ``holder``); the event log is an
append-only JSON-lines file.  Plate strings are compared after Unicode
NFC normalization and whitespace collapsing, so encoding variants of the
same plate cannot cause spurious mismatches.

Registry snapshots are immutable and therefore safe for any number of
concurrent readers; replacing a snapshot is a single atomic reference
swap.  Event-log appends write one record per OS write call, which keeps
concurrent appends from interleaving bytes.
"""

from __future__ import annotations

import json
import os
import threading
import unicodedata
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterator

from .domain import BadgeClass, HOLDER_BADGE
from .errors import DuplicatePlate, MalformedRecord, StorageFailure

HOLDERS = tuple(HOLDER_BADGE)

REASON_LINKED = "linked"
REASON_MISMATCH = "mismatch"
REASON_UNREGISTERED = "unregistered"
REASON_NO_BADGE = "no-badge"
REASONS = (REASON_LINKED, REASON_MISMATCH, REASON_UNREGISTERED, REASON_NO_BADGE)

Clock = Callable[[], str]


def rfc3339_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def normalize_plate(plate: str) -> str:
    """NFC normalization plus whitespace canonicalization."""
    return " ".join(unicodedata.normalize("NFC", plate).split())


def plate_serial(plate: str) -> str | None:
    """The trailing 4-digit group of a canonical plate string, if any."""
    tail = plate.rsplit(" ", 1)[-1]
    return tail if len(tail) == 4 and tail.isdigit() else None


@dataclass(frozen=True)
class BadgeRecord:
    """One registry entry linking a plate to its badge card."""

    plate: str
    card: str
    badge_class: BadgeClass
    holder: str

    def __post_init__(self):
        if not self.plate.strip():
            raise MalformedRecord("plate must be non-empty")
        if not (len(self.card) == 4 and self.card.isdigit()):
            raise MalformedRecord(f"card must be 4 digits, got {self.card!r}")
        if self.holder not in HOLDER_BADGE:
            raise MalformedRecord(f"unknown holder {self.holder!r}")
        if HOLDER_BADGE[self.holder] is not self.badge_class:
            raise MalformedRecord(
                f"holder {self.holder!r} carries a {HOLDER_BADGE[self.holder].value} "
                f"badge, not {self.badge_class.value}"
            )

    def to_json_line(self) -> str:
        obj = {
            "plate": self.plate,
            "card": self.card,
            "badge_class": self.badge_class.value,
            "holder": self.holder,
        }
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"


_RECORD_KEYS = {"plate", "card", "badge_class", "holder"}


def _record_from_obj(obj: dict, where: str) -> BadgeRecord:
    if not isinstance(obj, dict) or set(obj) != _RECORD_KEYS:
        raise MalformedRecord(f"{where}: expected exactly the fields {sorted(_RECORD_KEYS)}")
    try:
        badge = BadgeClass(obj["badge_class"])
    except ValueError:
        raise MalformedRecord(f"{where}: unknown badge class {obj['badge_class']!r}") from None
    if not isinstance(obj["plate"], str) or not isinstance(obj["card"], str) \
            or not isinstance(obj["holder"], str):
        raise MalformedRecord(f"{where}: plate, card and holder must be strings")
    return BadgeRecord(normalize_plate(obj["plate"]), obj["card"], badge, obj["holder"])


class Registry:
    """Immutable plate-keyed index of badge records."""

    def __init__(self, records: list[BadgeRecord]):
        index: dict[str, BadgeRecord] = {}
        for record in records:
            if record.plate in index:
                raise DuplicatePlate(f"plate {record.plate!r} registered twice")
            index[record.plate] = record
        self._index = index

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, plate: str) -> bool:
        return normalize_plate(plate) in self._index

    def get(self, plate: str) -> BadgeRecord | None:
        return self._index.get(normalize_plate(plate))

    def records(self) -> list[BadgeRecord]:
        return list(self._index.values())

    def save(self, path: str | Path) -> None:
        text = "".join(r.to_json_line() for r in self._index.values())
        try:
            Path(path).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise StorageFailure(f"cannot write registry: {exc}") from exc


def load_registry(path: str | Path) -> Registry:
    """Load and index a registry file; duplicate plates are rejected."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageFailure(f"cannot read registry: {exc}") from exc
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            raise MalformedRecord(f"line {lineno}: not a JSON object") from None
        records.append(_record_from_obj(obj, f"line {lineno}"))
    return Registry(records)


@dataclass(frozen=True)
class Decision:
    """Outcome of one verification query."""

    verdict: str  # granted | denied
    reason: str  # linked | mismatch | unregistered | no-badge
    plate: str
    ts: str

    def __post_init__(self):
        if self.verdict not in ("granted", "denied"):
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.reason not in REASONS:
            raise ValueError(f"unknown reason {self.reason!r}")
        if (self.verdict == "granted") != (self.reason == REASON_LINKED):
            raise ValueError("verdict granted if and only if reason is linked")

    @property
    def granted(self) -> bool:
        return self.verdict == "granted"


def verify(
    registry: Registry,
    plate: str,
    card: str | None,
    *,
    clock: Clock = rfc3339_now,
) -> Decision:
    """Authorize a plate/card pair against the registry.

    No card at all means no badge was shown; an unknown plate is
    unregistered; a known plate grants only when the presented card equals
    the stored one.
    """
    plate = normalize_plate(plate)
    ts = clock()
    if card is None:
        return Decision("denied", REASON_NO_BADGE, plate, ts)
    record = registry.get(plate)
    if record is None:
        return Decision("denied", REASON_UNREGISTERED, plate, ts)
    if record.card == card:
        return Decision("granted", REASON_LINKED, plate, ts)
    return Decision("denied", REASON_MISMATCH, plate, ts)


@dataclass(frozen=True)
class SignageMessage:
    led: str  # green | red
    display: str
    audio: str


_SIGNAGE = {
    REASON_LINKED: SignageMessage(
        "green", "Welcome", "Welcome. Accessible parking authorized."
    ),
    REASON_MISMATCH: SignageMessage(
        "red", "Warning: badge not linked to this vehicle",
        "Warning. The displayed badge is not linked to this vehicle.",
    ),
    REASON_UNREGISTERED: SignageMessage(
        "red", "Warning: vehicle not registered",
        "Warning. This vehicle is not registered for accessible parking.",
    ),
    REASON_NO_BADGE: SignageMessage(
        "red", "Warning: no access badge displayed",
        "Warning. No access badge is displayed on this vehicle.",
    ),
}


def signage_message(decision: Decision) -> SignageMessage:
    """LED colour plus display/audio text; total over all four reasons."""
    return _SIGNAGE[decision.reason]


@dataclass(frozen=True)
class EventRecord:
    """One audited verification, as appended to the site log."""

    ts: str
    site: str
    plate: str
    card: str | None
    verdict: str
    reason: str
    advisory_serial_mismatch: bool

    def to_json_line(self) -> str:
        obj = {
            "ts": self.ts,
            "site": self.site,
            "plate": self.plate,
            "card": self.card,
            "verdict": self.verdict,
            "reason": self.reason,
            "advisory_serial_mismatch": self.advisory_serial_mismatch,
        }
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"

    @classmethod
    def from_json_line(cls, line: str) -> "EventRecord":
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            raise MalformedRecord("event line is not JSON") from None
        try:
            return cls(
                ts=obj["ts"],
                site=obj["site"],
                plate=obj["plate"],
                card=obj["card"],
                verdict=obj["verdict"],
                reason=obj["reason"],
                advisory_serial_mismatch=obj["advisory_serial_mismatch"],
            )
        except (KeyError, TypeError):
            raise MalformedRecord("event line misses required fields") from None


def event_for(decision: Decision, site: str, card: str | None) -> EventRecord:
    """Build the audit record for a decision; flags the advisory
    serial/card mismatch without ever affecting the verdict."""
    serial = plate_serial(decision.plate)
    advisory = card is not None and serial is not None and card != serial
    return EventRecord(
        decision.ts, site, decision.plate, card,
        decision.verdict, decision.reason, advisory,
    )


class EventLog:
    """Append-only JSON-lines event log with atomic per-record appends."""

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._lock = threading.Lock()
        try:
            self._fd = os.open(self._path, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
        except OSError as exc:
            raise StorageFailure(f"cannot open event log: {exc}") from exc

    def append(self, event: EventRecord) -> None:
        data = event.to_json_line().encode("utf-8")
        try:
            # One write() call on an O_APPEND descriptor; the lock guards
            # against short writes being interleaved from this process.
            with self._lock:
                os.write(self._fd, data)
        except OSError as exc:
            raise StorageFailure(f"cannot append event: {exc}") from exc

    def close(self) -> None:
        os.close(self._fd)

    def __enter__(self) -> "EventLog":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def append_event(log: EventLog, event: EventRecord) -> None:
    log.append(event)


def read_events(path: str | Path) -> Iterator[EventRecord]:
    """Parse an event log back, in append order."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageFailure(f"cannot read event log: {exc}") from exc
    for line in text.splitlines():
        if line.strip():
            yield EventRecord.from_json_line(line)
