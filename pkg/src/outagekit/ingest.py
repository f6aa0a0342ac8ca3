"""Parsing, validation and event grouping of raw outage records.

Input files follow a fixed comma-separated schema::

    record_id,occurred_at,restored_at,customers,device,lat,lon,major_storm

Timestamps are integer minutes since an arbitrary epoch. Malformed rows are
never dropped silently: each one lands in the :class:`ValidationReport` with
its line number and a reason code.
"""

from __future__ import annotations

import csv
import enum
import io
import re
from dataclasses import asdict, dataclass, field
from typing import BinaryIO, Iterable, TextIO

from .errors import ParseError

CSV_COLUMNS = (
    "record_id",
    "occurred_at",
    "restored_at",
    "customers",
    "device",
    "lat",
    "lon",
    "major_storm",
)

DEFAULT_QUIET_GAP = 720


class DeviceType(str, enum.Enum):
    SUBSTATION_BREAKER = "SubstationBreaker"
    RECLOSER = "Recloser"
    FUSED_DISC = "FusedDisc"
    TRANSFORMER = "Transformer"
    FUSED_CUTOUT = "FusedCutout"
    OTHER = "Other"

    @classmethod
    def parse(cls, label: str) -> "DeviceType":
        """Case- and punctuation-insensitive lookup; unknown labels become OTHER."""
        key = re.sub(r"[^a-z0-9]", "", label.lower())
        return _DEVICE_LOOKUP.get(key, cls.OTHER)


_DEVICE_LOOKUP = {re.sub(r"[^a-z0-9]", "", d.value.lower()): d for d in DeviceType}


@dataclass(frozen=True)
class FailureRecord:
    record_id: str
    occurred_at: int
    restored_at: int
    customers: int
    device: DeviceType = DeviceType.OTHER
    latitude: float | None = None
    longitude: float | None = None
    major_storm: bool = False

    def __post_init__(self) -> None:
        if self.restored_at < self.occurred_at:
            raise ValueError(f"{self.record_id}: restored_at before occurred_at")
        if self.customers < 1:
            raise ValueError(f"{self.record_id}: customers must be >= 1")

    @property
    def duration(self) -> int:
        return self.restored_at - self.occurred_at


@dataclass
class ValidationReport:
    accepted: int = 0
    rejected: int = 0
    rejection_reasons: list[tuple[int, str]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.accepted + self.rejected

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rejection_reasons"] = [
            {"line": line, "reason": reason} for line, reason in self.rejection_reasons
        ]
        return d


class _RowError(Exception):
    def __init__(self, code: str):
        self.code = code


def _parse_int(text: str, code: str) -> int:
    text = text.strip()
    if not re.fullmatch(r"[+-]?\d+", text):
        raise _RowError(code)
    return int(text)


def _parse_coord(text: str, limit: float, code: str) -> float | None:
    text = text.strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        raise _RowError(code) from None
    if not -limit <= value <= limit:
        raise _RowError(code)
    return value


def _parse_flag(text: str) -> bool:
    text = text.strip().lower()
    if text == "true":
        return True
    if text == "false":
        return False
    raise _RowError("BAD_STORM_FLAG")


def _parse_row(row: list[str]) -> FailureRecord:
    if not any(cell.strip() for cell in row):
        raise _RowError("EMPTY_ROW")
    if len(row) != len(CSV_COLUMNS):
        raise _RowError("FIELD_COUNT")
    rid, occ, rest, cust, device, lat, lon, storm = row
    rid = rid.strip()
    if not rid:
        raise _RowError("EMPTY_ID")
    occurred = _parse_int(occ, "BAD_TIMESTAMP")
    restored = _parse_int(rest, "BAD_TIMESTAMP")
    if restored < occurred:
        raise _RowError("NEGATIVE_DURATION")
    customers = _parse_int(cust, "BAD_CUSTOMERS")
    if customers < 1:
        raise _RowError("BAD_CUSTOMERS")
    return FailureRecord(
        record_id=rid,
        occurred_at=occurred,
        restored_at=restored,
        customers=customers,
        device=DeviceType.parse(device),
        latitude=_parse_coord(lat, 90.0, "BAD_LATITUDE"),
        longitude=_parse_coord(lon, 180.0, "BAD_LONGITUDE"),
        major_storm=_parse_flag(storm),
    )


def _as_text(stream: BinaryIO | TextIO) -> TextIO:
    probe = stream.read(0)
    if isinstance(probe, bytes):
        try:
            return io.StringIO(stream.read().decode("utf-8-sig"))
        except UnicodeDecodeError as exc:
            raise ParseError(f"input is not UTF-8: {exc}") from None
    return stream  # type: ignore[return-value]


def parse_outage_csv(
    stream: BinaryIO | TextIO,
) -> tuple[list[FailureRecord], ValidationReport]:
    """Parse an outage CSV into records plus a validation report.

    Raises :class:`ParseError` when the header is missing or does not match
    the schema; every other problem is confined to the offending row.
    """
    reader = csv.reader(_as_text(stream))
    header = next(reader, None)
    if header is None:
        raise ParseError("missing header: input is empty")
    header = [h.strip().lstrip("﻿").lower() for h in header]
    if tuple(header) != CSV_COLUMNS:
        raise ParseError(
            "missing or malformed header; expected " + ",".join(CSV_COLUMNS)
        )

    records: list[FailureRecord] = []
    report = ValidationReport()
    seen: set[str] = set()
    for row in reader:
        line = reader.line_num
        try:
            rec = _parse_row(row)
            if rec.record_id in seen:
                raise _RowError("DUPLICATE_ID")
        except _RowError as err:
            report.rejected += 1
            report.rejection_reasons.append((line, err.code))
            continue
        seen.add(rec.record_id)
        records.append(rec)
        report.accepted += 1
    return records, report


def _fmt_coord(value: float | None) -> str:
    return "" if value is None else repr(value)


def write_outage_csv(records: Iterable[FailureRecord], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(
            [
                r.record_id,
                r.occurred_at,
                r.restored_at,
                r.customers,
                r.device.value,
                _fmt_coord(r.latitude),
                _fmt_coord(r.longitude),
                "true" if r.major_storm else "false",
            ]
        )


def _sort_key(r: FailureRecord) -> tuple:
    return (r.occurred_at, r.restored_at, r.record_id)


def group_into_events(
    records: Iterable[FailureRecord], quiet_gap: int = DEFAULT_QUIET_GAP
) -> list[list[FailureRecord]]:
    """Split records into events separated by quiet periods.

    A new event starts when the next failure occurs more than ``quiet_gap``
    minutes after the previous one and nothing from the current event is
    still waiting for repair. Records with and without the storm declaration
    are grouped separately, since an event carries a single flag.
    """
    if quiet_gap < 0:
        raise ValueError("quiet_gap must be non-negative")
    records = list(records)
    events: list[list[FailureRecord]] = []
    for flag in (False, True):
        subset = sorted((r for r in records if r.major_storm == flag), key=_sort_key)
        current: list[FailureRecord] = []
        last_occ = latest_rest = 0
        for r in subset:
            if current:
                gap = r.occurred_at - last_occ
                pending = latest_rest > r.occurred_at
                if gap > quiet_gap and not pending:
                    events.append(current)
                    current = []
            if not current:
                latest_rest = r.restored_at
            current.append(r)
            last_occ = r.occurred_at
            latest_rest = max(latest_rest, r.restored_at)
        if current:
            events.append(current)
    events.sort(key=lambda ev: _sort_key(ev[0]) + (ev[0].major_storm,))
    return events
