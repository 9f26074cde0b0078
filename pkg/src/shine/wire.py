"""Edge-to-central verification protocol: framing, server, client.

Frames are single LF-terminated UTF-8 JSON lines with a fixed field
order and no extra whitespace, so any byte stream splits unambiguously
at LF and equal messages encode to identical bytes.  Decoding is strict:
unknown fields, reordered fields, version drift or non-canonical byte
encodings are rejected, which keeps cross-implementation conformance
testable.

The server answers each accepted request with exactly one response and
one event-log append, in order, per connection.  The client sends one
frame, awaits one frame, and fails closed on timeout.
"""

from __future__ import annotations

import json
import os
import socket
import threading
from dataclasses import dataclass

from .errors import (
    BindFailure,
    ConnectionRefused,
    MalformedFrame,
    ProtocolError,
    SchemaViolation,
    UnsupportedVersion,
    WireError,
    WireTimeout,
)
from .registry import Clock, EventLog, Registry, event_for, rfc3339_now, verify

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_MS = 2000.0
TIMEOUT_ENV_VAR = "SHINE_TIMEOUT_MS"

_BADGE_VALUES = ("white", "yellow", "brown")


@dataclass(frozen=True)
class VerifyRequest:
    """One verification query from an edge site."""

    site: str
    ts: str
    plate: str
    card: str | None
    badge_class: str | None

    def __post_init__(self):
        if not self.plate:
            raise SchemaViolation("plate must be non-empty")
        if (self.card is None) != (self.badge_class is None):
            raise SchemaViolation("card and badge_class must be null together")
        if self.card is not None and not (len(self.card) == 4 and self.card.isdigit()):
            raise SchemaViolation(f"card must be 4 digits, got {self.card!r}")
        if self.badge_class is not None and self.badge_class not in _BADGE_VALUES:
            raise SchemaViolation(f"unknown badge class {self.badge_class!r}")


@dataclass(frozen=True)
class VerifyResponse:
    """The central side's decision, echoing the queried plate."""

    verdict: str
    reason: str
    plate: str

    def __post_init__(self):
        if self.verdict not in ("granted", "denied"):
            raise SchemaViolation(f"unknown verdict {self.verdict!r}")
        if self.reason not in ("linked", "mismatch", "unregistered", "no-badge"):
            raise SchemaViolation(f"unknown reason {self.reason!r}")
        if (self.verdict == "granted") != (self.reason == "linked"):
            raise SchemaViolation("verdict granted if and only if reason is linked")


@dataclass(frozen=True)
class ErrorFrame:
    """Answer to an undecodable request; never a decision."""

    code: str


Message = VerifyRequest | VerifyResponse | ErrorFrame

_REQUEST_KEYS = ("v", "type", "site", "ts", "plate", "card", "badge_class")
_RESPONSE_KEYS = ("v", "type", "verdict", "reason", "plate")
_ERROR_KEYS = ("v", "type", "code")


def encode(msg: Message) -> bytes:
    """One canonical LF-terminated frame; equal messages yield equal bytes."""
    if isinstance(msg, VerifyRequest):
        obj = {
            "v": PROTOCOL_VERSION,
            "type": "verify",
            "site": msg.site,
            "ts": msg.ts,
            "plate": msg.plate,
            "card": msg.card,
            "badge_class": msg.badge_class,
        }
    elif isinstance(msg, VerifyResponse):
        obj = {
            "v": PROTOCOL_VERSION,
            "type": "decision",
            "verdict": msg.verdict,
            "reason": msg.reason,
            "plate": msg.plate,
        }
    elif isinstance(msg, ErrorFrame):
        obj = {"v": PROTOCOL_VERSION, "type": "error", "code": msg.code}
    else:
        raise TypeError(f"not a wire message: {type(msg).__name__}")
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")).encode("utf-8") + b"\n"


def decode(data: bytes) -> Message:
    """Parse and validate one frame; the exact canonical form is required."""
    if not data.endswith(b"\n") or data.count(b"\n") != 1:
        raise MalformedFrame("frame must be a single LF-terminated line")
    try:
        pairs = json.loads(data[:-1].decode("utf-8"), object_pairs_hook=lambda p: p)
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise MalformedFrame("frame is not valid UTF-8 JSON") from None
    if not isinstance(pairs, list):
        raise MalformedFrame("frame must be a JSON object")
    obj = dict(pairs)
    version = obj.get("v")
    if "v" in obj and version != PROTOCOL_VERSION:
        raise UnsupportedVersion(f"protocol version {version!r} is not supported")
    keys = tuple(k for k, _ in pairs)
    frame_type = obj.get("type")
    if frame_type == "verify":
        if keys != _REQUEST_KEYS:
            raise SchemaViolation(f"request fields must be exactly {_REQUEST_KEYS}")
        if not all(isinstance(obj[k], str) for k in ("site", "ts", "plate")):
            raise SchemaViolation("site, ts and plate must be strings")
        msg: Message = VerifyRequest(
            obj["site"], obj["ts"], obj["plate"], obj["card"], obj["badge_class"]
        )
    elif frame_type == "decision":
        if keys != _RESPONSE_KEYS:
            raise SchemaViolation(f"response fields must be exactly {_RESPONSE_KEYS}")
        msg = VerifyResponse(obj["verdict"], obj["reason"], obj["plate"])
    elif frame_type == "error":
        if keys != _ERROR_KEYS:
            raise SchemaViolation(f"error fields must be exactly {_ERROR_KEYS}")
        if not isinstance(obj["code"], str):
            raise SchemaViolation("error code must be a string")
        msg = ErrorFrame(obj["code"])
    else:
        raise SchemaViolation(f"unknown frame type {frame_type!r}")
    if encode(msg) != bytes(data):
        raise MalformedFrame("frame is not in canonical encoding")
    return msg


def parse_endpoint(endpoint: str | tuple[str, int]) -> tuple[str, int]:
    if isinstance(endpoint, tuple):
        return endpoint
    host, _, port = endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {endpoint!r}")
    return host, int(port)


def resolve_timeout_ms(timeout_ms: float | None = None) -> float:
    if timeout_ms is not None:
        return float(timeout_ms)
    env = os.environ.get(TIMEOUT_ENV_VAR)
    if env:
        try:
            return float(env)
        except ValueError:
            raise ValueError(f"{TIMEOUT_ENV_VAR} must be numeric, got {env!r}") from None
    return DEFAULT_TIMEOUT_MS


class WireServer:
    """Framed TCP server over a registry snapshot.

    Connections are handled concurrently; within one connection requests
    are processed strictly in order.  A request that fails to decode is
    answered with an error frame and the connection closes without an
    event-log record.
    """

    def __init__(
        self,
        registry: Registry,
        host: str = "127.0.0.1",
        port: int = 0,
        *,
        event_log: EventLog | None = None,
        clock: Clock = rfc3339_now,
    ):
        self._registry = registry
        self._event_log = event_log
        self._clock = clock
        try:
            self._listener = socket.create_server((host, port))
        except OSError as exc:
            raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc
        self._listener.settimeout(0.1)  # lets the accept loop observe stop()
        self._address = self._listener.getsockname()[:2]
        self._stopping = threading.Event()
        self._accept_thread: threading.Thread | None = None
        self._conns: set[socket.socket] = set()
        self._conns_lock = threading.Lock()

    @property
    def address(self) -> tuple[str, int]:
        return self._address

    @property
    def endpoint(self) -> str:
        return f"{self._address[0]}:{self._address[1]}"

    def replace_registry(self, registry: Registry) -> None:
        """Atomically swap the snapshot; in-flight readers keep the old one."""
        self._registry = registry

    def start(self) -> "WireServer":
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        return self

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            with self._conns_lock:
                self._conns.add(conn)
            threading.Thread(target=self._serve_connection, args=(conn,), daemon=True).start()

    def _serve_connection(self, conn: socket.socket) -> None:
        try:
            with conn, conn.makefile("rb") as reader:
                for line in reader:
                    try:
                        msg = decode(line)
                        if not isinstance(msg, VerifyRequest):
                            raise SchemaViolation("server accepts verify frames only")
                    except WireError as exc:
                        conn.sendall(encode(ErrorFrame(exc.code)))
                        return
                    registry = self._registry
                    decision = verify(registry, msg.plate, msg.card, clock=self._clock)
                    if self._event_log is not None:
                        self._event_log.append(event_for(decision, msg.site, msg.card))
                    response = VerifyResponse(decision.verdict, decision.reason, msg.plate)
                    conn.sendall(encode(response))
        except OSError:
            pass  # peer vanished; nothing to answer
        finally:
            with self._conns_lock:
                self._conns.discard(conn)

    def stop(self) -> None:
        self._stopping.set()
        self._listener.close()
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=2)
        with self._conns_lock:
            conns = list(self._conns)
        for conn in conns:
            try:
                conn.close()
            except OSError:
                pass

    def __enter__(self) -> "WireServer":
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()


def serve(
    registry: Registry,
    endpoint: str | tuple[str, int],
    *,
    event_log: EventLog | None = None,
    clock: Clock = rfc3339_now,
) -> WireServer:
    """Bind and start a verification server; returns the running server."""
    host, port = parse_endpoint(endpoint)
    return WireServer(registry, host, port, event_log=event_log, clock=clock).start()


class WireClient:
    """Single-connection client; one request in flight at a time."""

    def __init__(self, endpoint: str | tuple[str, int], timeout_ms: float | None = None):
        host, port = parse_endpoint(endpoint)
        timeout = resolve_timeout_ms(timeout_ms) / 1000.0
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except ConnectionRefusedError as exc:
            raise ConnectionRefused(f"{host}:{port} refused the connection") from exc
        except socket.timeout as exc:
            raise WireTimeout(f"connecting to {host}:{port} timed out") from exc
        except OSError as exc:
            raise ConnectionRefused(f"cannot reach {host}:{port}: {exc}") from exc
        self._buffer = bytearray()

    def _read_frame(self) -> bytes:
        while True:
            newline = self._buffer.find(b"\n")
            if newline >= 0:
                frame = bytes(self._buffer[: newline + 1])
                del self._buffer[: newline + 1]
                return frame
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout as exc:
                raise WireTimeout("no response before the timeout") from exc
            except OSError as exc:
                raise ProtocolError(f"connection broke mid-response: {exc}") from exc
            if not chunk:
                raise ProtocolError("server closed the connection mid-exchange")
            self._buffer.extend(chunk)

    def verify(self, request: VerifyRequest) -> VerifyResponse:
        """Send one frame, await one frame, validate the plate echo."""
        try:
            self._sock.sendall(encode(request))
        except socket.timeout as exc:
            raise WireTimeout("send timed out") from exc
        except OSError as exc:
            raise ProtocolError(f"cannot send request: {exc}") from exc
        frame = self._read_frame()
        try:
            msg = decode(frame)
        except WireError as exc:
            raise ProtocolError(f"undecodable response frame: {exc}") from exc
        if isinstance(msg, ErrorFrame):
            raise ProtocolError(f"server rejected the request: {msg.code}")
        if not isinstance(msg, VerifyResponse):
            raise ProtocolError("server answered with a non-decision frame")
        if msg.plate != request.plate:
            raise ProtocolError(
                f"response echoes plate {msg.plate!r}, expected {request.plate!r}"
            )
        return msg

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self) -> "WireClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def client_verify(
    endpoint: str | tuple[str, int],
    request: VerifyRequest,
    timeout_ms: float | None = None,
) -> VerifyResponse:
    """One-shot connect/verify/close."""
    with WireClient(endpoint, timeout_ms) as client:
        return client.verify(request)
