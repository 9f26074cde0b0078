"""Deterministic detector stand-in: renders plate/badge scenes as boxes,
perturbs them with seeded noise, and drives end-to-end scenarios.

Scene geometry mimics the real plate families proportionally (European
520x110, compact 335x155 and 335x170 faces) on a square default canvas.
The layout constants are chosen so that, at jitter sigma <= 0.15 with
displacements clipped at 1.75 sigma, no character ordering or row split
can flip: character spacing exceeds the worst-case paired displacement
and row gaps stay on the correct side of the clustering threshold.  That
bound is what makes the zero-noise and low-jitter round trips exact.
"""

from __future__ import annotations

import threading
from collections import Counter
from dataclasses import dataclass, replace

from .assembler import assemble_scene
from .domain import (
    BadgeClass,
    BBox,
    CanonicalPlate,
    ClassVocabulary,
    Detection,
    GENERIC_TAG,
    RENTAL_HANGUL,
    TokenKind,
)
from .errors import AngleOutOfRange, CanvasTooSmall, DomainError, OutOfRange, WireError
from .labels import LabeledImage, rotate_boxes
from .registry import (
    Clock,
    Decision,
    EventLog,
    Registry,
    BadgeRecord,
    event_for,
    rfc3339_now,
    verify,
)
from .rng import SplitMix64, mix64
from .wire import VerifyRequest, WireClient, encode, VerifyResponse

DEFAULT_CANVAS = (1024, 1024)

# Real plate faces in millimetres, as width/height aspect ratios.
_PLATE_ASPECT = {
    "a": 520 / 110,
    "b": 520 / 110,
    "c": 335 / 155,
    "d": 335 / 170,
    "e": 335 / 170,
    GENERIC_TAG: 520 / 110,
}

_PLATE_WIDTH_FRACTION = 0.42   # plate width as a fraction of canvas width
_PLATE_CENTER_Y = 5 / 6        # centered in the lower canvas third
_PLATE_INNER = 0.88            # glyph row span as a fraction of plate width
_CHAR_ASPECT = 0.8             # character box width / height
_REGION_ASPECT = 1.5           # region tokens are two syllables wide
_SINGLE_ROW_CHAR = 0.75        # char height cap, fraction of plate height
_TWO_ROW_CHAR = 0.30
_CHAR_PER_SPACING = 1.35       # char height cap, multiple of slot spacing

_CARD_WIDTH_FRACTION = 0.2     # badge width as a fraction of canvas width
_CARD_ASPECT = 1.586
_CARD_CENTER_Y = 1 / 6         # upper canvas third
_CARD_DIGIT_HEIGHT = 0.24      # digit height, fraction of card height
_CARD_DIGIT_SPAN = 0.8         # digit row span, fraction of card width

_VEHICLE_BOX = (0.5, 0.55, 0.92, 0.86)

# Gaussian jitter displacements are clipped here so the robustness bound
# above is a guarantee, not a probability.
JITTER_CLIP_SIGMAS = 1.75

ANGLE_GRID = tuple(float(a) for a in range(-60, 61, 5))


@dataclass(frozen=True)
class BadgeSpec:
    """A badge on the windshield: colour, shown digits, rotation."""

    badge_class: BadgeClass
    digits: str
    angle_deg: float = 0.0

    def __post_init__(self):
        if abs(self.angle_deg) > 60:
            raise AngleOutOfRange(f"badges rotate at most 60 degrees, got {self.angle_deg}")
        if not (len(self.digits) == 4 and self.digits.isdigit()):
            raise OutOfRange(f"badge number must be 4 digits, got {self.digits!r}")


@dataclass(frozen=True)
class SceneSpec:
    """Ground truth for one rendered scene."""

    plate: CanonicalPlate
    badge: BadgeSpec | None = None
    canvas: tuple[int, int] = DEFAULT_CANVAS


@dataclass(frozen=True)
class NoiseParams:
    """Seeded detector-imperfection model; output is a pure function of
    the seed and the input boxes."""

    jitter_sigma: float = 0.0     # center jitter, fraction of box height
    dropout_prob: float = 0.0
    confusion_prob: float = 0.0   # relabel within the same token kind
    spurious_rate: float = 0.0    # expected extra boxes per scene
    confidence_mean: float = 0.95
    confidence_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("dropout_prob", "confusion_prob"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise OutOfRange(f"{name} must be in [0, 1], got {p}")
        if self.jitter_sigma < 0 or self.spurious_rate < 0 or self.confidence_sigma < 0:
            raise OutOfRange("noise magnitudes must be non-negative")
        if not (0.0 <= self.confidence_mean <= 1.0):
            raise OutOfRange(f"confidence mean must be in [0, 1], got {self.confidence_mean}")


def _glyph_rows(plate: CanonicalPlate) -> list[list[tuple[str, object]]]:
    digits = lambda s: [("digit", int(c)) for c in s]
    middle = [("middle", plate.middle)]
    if plate.tag == "d":
        return [digits(plate.leading) + middle, digits(plate.serial)]
    if plate.tag == "e":
        return [[("region", plate.region)] + digits(plate.leading),
                middle + digits(plate.serial)]
    return [digits(plate.leading) + middle + digits(plate.serial)]


def _middle_class(vocab: ClassVocabulary, plate: CanonicalPlate) -> int:
    if plate.tag == GENERIC_TAG:
        if plate.middle.isdigit():
            return vocab.digit_id(int(plate.middle))
        return vocab.id_for(TokenKind.ALNUM, plate.middle)
    kind = TokenKind.HANGUL_RENTAL if plate.middle in RENTAL_HANGUL else TokenKind.HANGUL_PRIVATE
    return vocab.id_for(kind, plate.middle)


def _plate_type_class(vocab: ClassVocabulary, plate: CanonicalPlate) -> int:
    value = plate.format.plate_class
    if value is None:
        return vocab.ids_of_kind(TokenKind.PLATE_TYPE)[0]
    return vocab.id_for(TokenKind.PLATE_TYPE, value)


def render_scene(
    spec: SceneSpec, vocab: ClassVocabulary, *, image_id: str = "scene"
) -> tuple[LabeledImage, list[Detection]]:
    """Deterministic layout of one scene.

    Returns the ground truth and the same boxes as confidence-1.0
    detections (vehicle, plate type, plate characters in reading order,
    then badge type and badge digits left to right).
    """
    width, height = spec.canvas
    if width < 2 or height < 2:
        raise CanvasTooSmall(f"canvas {width}x{height} cannot hold a scene")
    boxes: list[tuple[int, BBox]] = []

    boxes.append((vocab.ids_of_kind(TokenKind.VEHICLE)[0], BBox(*_VEHICLE_BOX)))

    plate = spec.plate
    plate_w = _PLATE_WIDTH_FRACTION * width
    plate_h = plate_w / _PLATE_ASPECT[plate.tag]
    boxes.append((
        _plate_type_class(vocab, plate),
        BBox(0.5, _PLATE_CENTER_Y, plate_w / width, plate_h / height),
    ))

    rows = _glyph_rows(plate)
    spacings = [_PLATE_INNER * plate_w / len(row) for row in rows]
    height_cap = _SINGLE_ROW_CHAR if len(rows) == 1 else _TWO_ROW_CHAR
    char_h = min(height_cap * plate_h, _CHAR_PER_SPACING * min(spacings))
    if char_h < 2.0:
        raise CanvasTooSmall(f"canvas {width}x{height} leaves characters under 2 px")
    plate_cy = _PLATE_CENTER_Y * height
    row_centers = [plate_cy] if len(rows) == 1 else [plate_cy - char_h, plate_cy + char_h]
    for row, spacing, row_cy in zip(rows, spacings, row_centers):
        for slot, (role, value) in enumerate(row):
            cx = 0.5 * width + (slot - (len(row) - 1) / 2) * spacing
            box_w = (_REGION_ASPECT if role == "region" else _CHAR_ASPECT) * char_h
            if role == "digit":
                class_id = vocab.digit_id(value)
            elif role == "region":
                class_id = vocab.id_for(TokenKind.REGION, value)
            else:
                class_id = _middle_class(vocab, plate)
            boxes.append((class_id, BBox(cx / width, row_cy / height,
                                         box_w / width, char_h / height)))

    if spec.badge is not None:
        badge = spec.badge
        card_w = _CARD_WIDTH_FRACTION * width
        card_h = card_w / _CARD_ASPECT
        digit_h = _CARD_DIGIT_HEIGHT * card_h
        if digit_h < 2.0:
            raise CanvasTooSmall(f"canvas {width}x{height} leaves badge digits under 2 px")
        spacing = _CARD_DIGIT_SPAN * card_w / 4
        group: list[BBox] = [BBox(0.5, _CARD_CENTER_Y, card_w / width, card_h / height)]
        for slot, _ in enumerate(badge.digits):
            cx = 0.5 * width + (slot - 1.5) * spacing
            group.append(BBox(cx / width, _CARD_CENTER_Y,
                              _CHAR_ASPECT * digit_h / width, digit_h / height))
        if badge.angle_deg:
            group = rotate_boxes(group, badge.angle_deg, (0.5, _CARD_CENTER_Y))
        boxes.append((vocab.id_for(TokenKind.BADGE_TYPE, badge.badge_class.value), group[0]))
        for digit, box in zip(badge.digits, group[1:]):
            boxes.append((vocab.digit_id(int(digit)), box))

    labeled = LabeledImage(image_id, tuple(boxes), width, height)
    detections = [Detection(cid, box, 1.0) for cid, box in boxes]
    return labeled, detections


def _clamp(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


def perturb(
    dets: list[Detection], params: NoiseParams, vocab: ClassVocabulary
) -> list[Detection]:
    """Seeded noise pipeline: jitter centers, drop boxes, relabel within
    kind, add spurious boxes, then sample confidences."""
    rng = SplitMix64(params.seed)
    survivors: list[tuple[int, BBox]] = []
    for det in dets:
        box = det.box
        if params.jitter_sigma > 0:
            sigma = params.jitter_sigma * box.h
            clip = JITTER_CLIP_SIGMAS * sigma
            dx = _clamp(rng.gauss(0.0, sigma), -clip, clip)
            dy = _clamp(rng.gauss(0.0, sigma), -clip, clip)
            box = BBox(
                _clamp(box.cx + dx, box.w / 2, 1 - box.w / 2),
                _clamp(box.cy + dy, box.h / 2, 1 - box.h / 2),
                box.w,
                box.h,
            )
        if params.dropout_prob > 0 and rng.random() < params.dropout_prob:
            continue
        class_id = det.class_id
        if params.confusion_prob > 0 and rng.random() < params.confusion_prob:
            peers = [i for i in vocab.ids_of_kind(vocab.token(class_id).kind) if i != class_id]
            if peers:
                class_id = rng.choice(peers)
        survivors.append((class_id, box))
    if params.spurious_rate > 0:
        for _ in range(rng.poisson(params.spurious_rate)):
            w = 0.02 + rng.random() * 0.08
            h = 0.02 + rng.random() * 0.08
            cx = w / 2 + rng.random() * (1 - w)
            cy = h / 2 + rng.random() * (1 - h)
            survivors.append((rng.below(len(vocab)), BBox(cx, cy, w, h)))
    out = []
    for class_id, box in survivors:
        if params.confidence_sigma > 0:
            conf = _clamp(rng.gauss(params.confidence_mean, params.confidence_sigma), 0.0, 1.0)
        else:
            conf = params.confidence_mean
        out.append(Detection(class_id, box, conf))
    return out


@dataclass(frozen=True)
class LatencyModel:
    """Modeled per-stage milliseconds (accumulated, never slept).

    ``detect_ms`` defaults to the measured single-picture inference time
    of the fastest compared detector; every value is a knob.
    """

    detect_ms: float = 12.63
    assemble_ms: float = 0.8
    verify_ms: float = 1.5

    def scene_latency(self, has_badge: bool) -> float:
        # Full-frame pass, plate zoom, and a badge zoom when one is shown.
        passes = 3 if has_badge else 2
        return passes * self.detect_ms + self.assemble_ms + self.verify_ms


@dataclass(frozen=True)
class ScenarioVehicle:
    """One simulated arrival and its expected outcome."""

    spec: SceneSpec
    authorized: bool
    expected_reason: str
    record: BadgeRecord | None


_HOLDER_FOR_BADGE = {
    BadgeClass.WHITE: ("disabled",),
    BadgeClass.YELLOW: ("guardian", "institution"),
    BadgeClass.BROWN: ("national_merit",),
}


def _random_plate(rng: SplitMix64, tags, hangul, regions) -> CanonicalPlate:
    tag = rng.choice(tags)
    leading = "".join(str(rng.below(10)) for _ in range(3 if tag == "a" else 2))
    serial = "".join(str(rng.below(10)) for _ in range(4))
    region = rng.choice(regions) if tag == "e" else None
    return CanonicalPlate(tag, leading, rng.choice(hangul), serial, region)


def _different_digits(rng: SplitMix64, not_this: str) -> str:
    while True:
        candidate = "".join(str(rng.below(10)) for _ in range(4))
        if candidate != not_this:
            return candidate


def generate_population(
    n: int,
    authorized_fraction: float,
    seed: int,
    vocab: ClassVocabulary,
    *,
    canvas: tuple[int, int] = DEFAULT_CANVAS,
) -> tuple[list[ScenarioVehicle], list[BadgeRecord]]:
    """Seeded vehicle population plus the registry records that make the
    requested fraction authorized.

    Unauthorized vehicles split evenly between showing no badge, an
    unregistered plate, and a badge whose card mismatches the registry.
    """
    if not (0.0 <= authorized_fraction <= 1.0):
        raise OutOfRange(f"authorized fraction must be in [0, 1], got {authorized_fraction}")
    rng = SplitMix64(seed)
    tags = "abcde"
    hangul = [t.value for _, t in vocab
              if t.kind in (TokenKind.HANGUL_PRIVATE, TokenKind.HANGUL_RENTAL)]
    regions = [t.value for _, t in vocab if t.kind is TokenKind.REGION]
    vehicles: list[ScenarioVehicle] = []
    records: list[BadgeRecord] = []
    used: set[str] = set()
    for _ in range(n):
        plate = _random_plate(rng, tags, hangul, regions)
        while plate.rendering in used:
            plate = _random_plate(rng, tags, hangul, regions)
        used.add(plate.rendering)
        badge_class = rng.choice((BadgeClass.WHITE, BadgeClass.YELLOW, BadgeClass.BROWN))
        holder = rng.choice(_HOLDER_FOR_BADGE[badge_class])
        angle = rng.choice(ANGLE_GRID)
        authorized = rng.random() < authorized_fraction
        if authorized:
            # A slice of real badges carries a number unrelated to the
            # plate serial; the link check is advisory, so these grant.
            card = plate.rendering and (
                _different_digits(rng, plate.serial) if rng.random() < 0.1 else plate.serial
            )
            records.append(BadgeRecord(plate.rendering, card, badge_class, holder))
            vehicles.append(ScenarioVehicle(
                SceneSpec(plate, BadgeSpec(badge_class, card, angle), canvas),
                True, "linked", records[-1],
            ))
            continue
        mode = rng.below(3)
        if mode == 0:
            vehicles.append(ScenarioVehicle(SceneSpec(plate, None, canvas),
                                            False, "no-badge", None))
        elif mode == 1:
            vehicles.append(ScenarioVehicle(
                SceneSpec(plate, BadgeSpec(badge_class, plate.serial, angle), canvas),
                False, "unregistered", None,
            ))
        else:
            stored = _different_digits(rng, plate.serial)
            record = BadgeRecord(plate.rendering, stored, badge_class, holder)
            records.append(record)
            vehicles.append(ScenarioVehicle(
                SceneSpec(plate, BadgeSpec(badge_class, plate.serial, angle), canvas),
                False, "mismatch", record,
            ))
    return vehicles, records


@dataclass(frozen=True)
class VehicleOutcome:
    """Per-vehicle results, kept when a scenario runs with collection on."""

    index: int
    plate_expected: str
    plate_read: str | None
    card: str | None
    verdict: str | None
    reason: str | None
    response: bytes | None
    error: str | None
    latency_ms: float


@dataclass(frozen=True)
class ScenarioReport:
    """Aggregates of one scenario run; counts always sum to n_vehicles."""

    n_vehicles: int
    granted: int
    denied: int
    failures: int
    reason_counts: dict[str, int]
    decision_accuracy: float
    plate_read_accuracy: float
    latency_mean_ms: float
    latency_p95_ms: float
    outcomes: tuple[VehicleOutcome, ...] | None = None


def _p95(values: list[float]) -> float:
    ordered = sorted(values)
    index = max(0, -(-len(ordered) * 95 // 100) - 1)  # ceil(0.95 n) - 1
    return ordered[index]


def run_scenario(
    n: int,
    *,
    registry: Registry | None = None,
    authorized_fraction: float = 0.5,
    noise: NoiseParams = NoiseParams(),
    latency: LatencyModel = LatencyModel(),
    seed: int = 0,
    vocab: ClassVocabulary,
    canvas: tuple[int, int] = DEFAULT_CANVAS,
    endpoint: str | tuple[str, int] | None = None,
    concurrency: int = 1,
    event_log: EventLog | None = None,
    clock: Clock = rfc3339_now,
    site: str = "sim-0",
    collect_outcomes: bool = False,
) -> ScenarioReport:
    """Simulate ``n`` arrivals end to end: render, perturb, assemble, verify.

    With ``endpoint`` the verification round-trips through the wire client
    (``concurrency`` parallel connections); otherwise the registry is
    queried in process.  ``registry=None`` builds one from the generated
    population.  Scene generation and noise derive deterministically from
    ``seed`` and ``noise.seed``; wire errors and unreadable scenes count
    as failures rather than aborting.
    """
    vehicles, records = generate_population(
        n, authorized_fraction, seed, vocab, canvas=canvas
    )
    if registry is None:
        registry = Registry(records)

    plate_reads: list[str | None] = []
    cards: list[str | None] = []
    badges: list[BadgeClass | None] = []
    read_errors: list[str | None] = []
    latencies: list[float] = []
    for index, vehicle in enumerate(vehicles):
        _, truth_dets = render_scene(vehicle.spec, vocab)
        dets = perturb(truth_dets, replace(noise, seed=mix64(noise.seed + index)), vocab)
        latencies.append(latency.scene_latency(vehicle.spec.badge is not None))
        try:
            reading = assemble_scene(dets, vocab)
            plate_reads.append(reading.plate.rendering if reading.plate else None)
            cards.append(reading.card)
            badges.append(reading.badge)
            read_errors.append(None)
        except DomainError as exc:
            plate_reads.append(None)
            cards.append(None)
            badges.append(None)
            read_errors.append(exc.code)

    verdicts: list[str | None] = [None] * n
    reasons: list[str | None] = [None] * n
    responses: list[bytes | None] = [None] * n
    wire_errors: list[str | None] = [None] * n

    def resolve_in_process(index: int) -> None:
        decision = verify(registry, plate_reads[index], cards[index], clock=clock)
        if event_log is not None:
            event_log.append(event_for(decision, site, cards[index]))
        verdicts[index] = decision.verdict
        reasons[index] = decision.reason
        responses[index] = encode(
            VerifyResponse(decision.verdict, decision.reason, plate_reads[index])
        )

    def resolve_over_wire(worker: int, indices: list[int]) -> None:
        try:
            client = WireClient(endpoint)
        except WireError as exc:
            for index in indices:
                wire_errors[index] = exc.code
            return
        with client:
            for index in indices:
                badge = badges[index]
                request = VerifyRequest(
                    site=f"{site}/{worker}",
                    ts=clock(),
                    plate=plate_reads[index],
                    card=cards[index],
                    badge_class=badge.value if badge is not None and cards[index] is not None else None,
                )
                try:
                    response = client.verify(request)
                except WireError as exc:
                    wire_errors[index] = exc.code
                    continue
                verdicts[index] = response.verdict
                reasons[index] = response.reason
                responses[index] = encode(response)

    readable = [i for i in range(n) if read_errors[i] is None and plate_reads[i] is not None]
    unreadable = [i for i in range(n) if i not in set(readable)]
    for index in unreadable:
        if read_errors[index] is None:
            read_errors[index] = "NoParse"
    if endpoint is None:
        for index in readable:
            resolve_in_process(index)
    else:
        workers = max(1, concurrency)
        batches: list[list[int]] = [[] for _ in range(workers)]
        for position, index in enumerate(readable):
            batches[position % workers].append(index)
        threads = [
            threading.Thread(target=resolve_over_wire, args=(w, batch))
            for w, batch in enumerate(batches) if batch
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    granted = denied = failures = 0
    correct = 0
    plate_correct = 0
    reason_counts: Counter = Counter()
    for index, vehicle in enumerate(vehicles):
        if plate_reads[index] == vehicle.spec.plate.rendering:
            plate_correct += 1
        if verdicts[index] is None:
            failures += 1
            continue
        reason_counts[reasons[index]] += 1
        if verdicts[index] == "granted":
            granted += 1
        else:
            denied += 1
        if (verdicts[index] == "granted") == vehicle.authorized:
            correct += 1

    outcomes = None
    if collect_outcomes:
        outcomes = tuple(
            VehicleOutcome(
                index=index,
                plate_expected=vehicles[index].spec.plate.rendering,
                plate_read=plate_reads[index],
                card=cards[index],
                verdict=verdicts[index],
                reason=reasons[index],
                response=responses[index],
                error=read_errors[index] or wire_errors[index],
                latency_ms=latencies[index],
            )
            for index in range(n)
        )
    return ScenarioReport(
        n_vehicles=n,
        granted=granted,
        denied=denied,
        failures=failures,
        reason_counts=dict(reason_counts),
        decision_accuracy=correct / n if n else 0.0,
        plate_read_accuracy=plate_correct / n if n else 0.0,
        latency_mean_ms=sum(latencies) / n if n else 0.0,
        latency_p95_ms=_p95(latencies) if latencies else 0.0,
        outcomes=outcomes,
    )


def format_report(report: ScenarioReport) -> str:
    """Human-readable scenario summary (stable field order)."""
    lines = [
        f"vehicles          {report.n_vehicles}",
        f"granted           {report.granted}",
        f"denied            {report.denied}",
        f"failures          {report.failures}",
        f"decision accuracy {report.decision_accuracy:.4f}",
        f"plate accuracy    {report.plate_read_accuracy:.4f}",
        f"latency mean ms   {report.latency_mean_ms:.2f}",
        f"latency p95 ms    {report.latency_p95_ms:.2f}",
    ]
    for reason in sorted(report.reason_counts):
        lines.append(f"reason {reason:<12} {report.reason_counts[reason]}")
    return "\n".join(lines) + "\n"
