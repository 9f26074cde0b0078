"""Exception types and the CLI exit-code contract.

Exit codes:

===== ==============================================================
code  meaning
===== ==============================================================
0     success (a *denied* verification is still a successful query)
1     domain error (bad vocabulary, labels, scene, registry record)
2     usage error (bad flags/arguments; produced by argparse)
3     I/O error (missing, unreadable or unwritable files)
4     protocol error (bad frames, timeouts, unreachable endpoints)
===== ==============================================================

Every exception carries a machine-readable ``code`` string; the CLI
reports it and maps the class to exactly one exit code via ``exit_code``.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_PROTOCOL = 4


class ShineError(Exception):
    """Base class of every error raised by this package."""

    code = "Error"
    exit_code = EXIT_DOMAIN


class DomainError(ShineError):
    """Invalid domain input: the query itself is well-formed but wrong."""

    exit_code = EXIT_DOMAIN


# --- vocabulary ------------------------------------------------------------

class DuplicateName(DomainError):
    code = "DuplicateName"


class DuplicateId(DomainError):
    """Duplicate identifier (class id in a vocabulary, image id in a split)."""

    code = "DuplicateId"


class UnknownKind(DomainError):
    code = "UnknownKind"


class MissingDigit(DomainError):
    """A plate-parsing vocabulary must define all ten digit classes."""

    code = "MissingDigit"


class NonDenseIds(DomainError):
    """Class ids must cover 0..N-1 without gaps."""

    code = "NonDenseIds"


class MalformedClassEntry(DomainError):
    code = "MalformedClassEntry"


class InvalidToken(DomainError):
    """Token value inconsistent with its kind."""

    code = "InvalidToken"


class NotRomanizable(DomainError):
    code = "NotRomanizable"


class InvalidPlate(DomainError):
    """Canonical plate fields violate the format invariants."""

    code = "InvalidPlate"


# --- labels ----------------------------------------------------------------

class MalformedLine(DomainError):
    code = "MalformedLine"


class OutOfRange(DomainError):
    """Numeric field outside its allowed range (box coordinate, confidence)."""

    code = "OutOfRange"


class MissingDimensions(DomainError):
    code = "MissingDimensions"


class UnknownClassName(DomainError):
    code = "UnknownClassName"


class UnknownClassId(DomainError):
    code = "UnknownClassId"


class MalformedDocument(DomainError):
    code = "MalformedDocument"


class EmptyInput(DomainError):
    code = "EmptyInput"


class AngleOutOfRange(DomainError):
    code = "AngleOutOfRange"


# --- assembler -------------------------------------------------------------

class AmbiguousRows(DomainError):
    """Token geometry yields more than the two rows any plate format allows."""

    code = "AmbiguousRows"


class NoParse(DomainError):
    """Token sequence matches no plate grammar."""

    code = "NoParse"


class WrongDigitCount(DomainError):
    code = "WrongDigitCount"


class FormatConflict(DomainError):
    """Tokens are individually valid but contradict every single format."""

    code = "FormatConflict"


class NonDigitToken(DomainError):
    code = "NonDigitToken"


# --- registry --------------------------------------------------------------

class DuplicatePlate(DomainError):
    code = "DuplicatePlate"


class MalformedRecord(DomainError):
    code = "MalformedRecord"


class StorageFailure(ShineError):
    """Underlying file could not be written or read."""

    code = "StorageFailure"
    exit_code = EXIT_IO


# --- simulator -------------------------------------------------------------

class CanvasTooSmall(DomainError):
    code = "CanvasTooSmall"


# --- wire protocol ---------------------------------------------------------

class WireError(ShineError):
    exit_code = EXIT_PROTOCOL


class MalformedFrame(WireError):
    code = "MalformedFrame"


class UnsupportedVersion(WireError):
    code = "UnsupportedVersion"


class SchemaViolation(WireError):
    code = "SchemaViolation"


class BindFailure(WireError):
    code = "BindFailure"


class ProtocolError(WireError):
    """Peer broke the request/response contract (bad echo, bad frame type)."""

    code = "ProtocolError"


class WireTimeout(WireError):
    code = "Timeout"


class ConnectionRefused(WireError):
    code = "ConnectionRefused"
