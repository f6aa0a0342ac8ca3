"""File formats and batch steps shared by the command-line tools.

All writers produce deterministic bytes: JSON is written with sorted keys and
floats use Python's shortest round-trip repr.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import dependence as dep
from .dependence import CategoryLabel, ClusterRegion, JointGrid, RankedSample
from .errors import OutageError, ParseError
from .events import DEFAULT_STEP, EXTREME_FLOOR, MODERATE_FLOOR, FailureEvent, SeverityClass, build_event
from .ingest import DEFAULT_QUIET_GAP, DeviceType, FailureRecord, group_into_events

log = logging.getLogger(__name__)

EVENTS_FORMAT = "outagekit.events/1"
SEVERITY_ORDER = (SeverityClass.MODERATE, SeverityClass.SEVERE, SeverityClass.EXTREME)
LABEL_COLUMNS = ("event_id", "record_id", "severity", "category", "customers", "duration", "speed_y", "device")


# -- serialization helpers ---------------------------------------------------


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -- events file -------------------------------------------------------------


def _record_to_dict(r: FailureRecord) -> dict:
    return {
        "record_id": r.record_id,
        "occurred_at": r.occurred_at,
        "restored_at": r.restored_at,
        "customers": r.customers,
        "device": r.device.value,
        "lat": r.latitude,
        "lon": r.longitude,
        "major_storm": r.major_storm,
    }


def _record_from_dict(d: dict) -> FailureRecord:
    return FailureRecord(
        record_id=str(d["record_id"]),
        occurred_at=int(d["occurred_at"]),
        restored_at=int(d["restored_at"]),
        customers=int(d["customers"]),
        device=DeviceType.parse(d.get("device", "Other")),
        latitude=d.get("lat"),
        longitude=d.get("lon"),
        major_storm=bool(d["major_storm"]),
    )


@dataclass
class EventParams:
    quiet_gap: int = DEFAULT_QUIET_GAP
    step: int = DEFAULT_STEP
    moderate_floor: int = MODERATE_FLOOR
    extreme_floor: int = EXTREME_FLOOR


def build_events(records: Sequence[FailureRecord], params: EventParams) -> list[FailureEvent]:
    groups = group_into_events(records, params.quiet_gap)
    return [
        build_event(f"E{i:04d}", g, params.step, params.moderate_floor, params.extreme_floor)
        for i, g in enumerate(groups, start=1)
    ]


def events_document(events: Sequence[FailureEvent], params: EventParams) -> dict:
    return {
        "format": EVENTS_FORMAT,
        "params": vars(params),
        "events": [
            {
                "event_id": ev.event_id,
                "severity": ev.severity.value,
                "major_storm": ev.major_storm,
                "n_records": len(ev.records),
                "split_time": ev.partition.split_time,
                "peak_value": ev.pending.peak_value,
                "stage1_ids": sorted(ev.partition.stage1_ids),
                "stage2_ids": sorted(ev.partition.stage2_ids),
                "records": [_record_to_dict(r) for r in ev.records],
            }
            for ev in events
        ],
    }


def load_events(path: Path) -> tuple[list[FailureEvent], EventParams]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != EVENTS_FORMAT:
        raise ParseError(f"{path}: not an events file (format {EVENTS_FORMAT!r} expected)")
    params = EventParams(**doc.get("params", {}))
    events = []
    for e in doc["events"]:
        ev = build_event(
            e["event_id"],
            [_record_from_dict(r) for r in e["records"]],
            params.step,
            params.moderate_floor,
            params.extreme_floor,
        )
        if ev.severity.value != e["severity"] or ev.partition.split_time != e["split_time"]:
            raise ParseError(f"{path}: event {ev.event_id} is inconsistent with its records")
        events.append(ev)
    return events, params


def analysable(events: Sequence[FailureEvent]) -> list[FailureEvent]:
    return [ev for ev in events if ev.severity is not SeverityClass.SPORADIC]


# -- analysis ----------------------------------------------------------------


@dataclass
class AnalysisParams:
    x_bins: int = dep.DEFAULT_X_BINS
    y_bins: int = dep.DEFAULT_Y_BINS
    threshold_frac: float = dep.THRESHOLD_FRAC
    folds: int = dep.FOLDS
    large_threshold: int = dep.LARGE_THRESHOLD
    fast_quantile: float = dep.FAST_QUANTILE
    prolonged_quantile: float = dep.PROLONGED_QUANTILE
    confidence: float = dep.CONFIDENCE
    seed: int = 0

    def category_kwargs(self) -> dict:
        return dict(
            large_threshold=self.large_threshold,
            fast_quantile=self.fast_quantile,
            prolonged_quantile=self.prolonged_quantile,
        )


@dataclass
class EventAnalysis:
    event: FailureEvent
    samples: list[RankedSample]
    labels: dict[str, CategoryLabel]
    grid: JointGrid
    clusters: list[ClusterRegion] = field(default_factory=list)
    error: str | None = None


def analyze_event(ev: FailureEvent, p: AnalysisParams) -> EventAnalysis:
    """Rank, bin, cluster and label the Stage-1 failures of one event."""
    samples = dep.rank_recovery_speed(ev.stage1_records)
    labels = dep.assign_categories(samples, **p.category_kwargs())
    grid = dep.estimate_joint(samples, p.x_bins, p.y_bins, folds=p.folds, seed=p.seed)
    out = EventAnalysis(ev, samples, labels, grid)
    try:
        out.clusters = dep.extract_clusters(
            samples,
            p.threshold_frac,
            p.folds,
            p.x_bins,
            p.y_bins,
            seed=p.seed,
            confidence=p.confidence,
            **p.category_kwargs(),
        )
    except OutageError as exc:
        out.error = exc.code
        log.warning("event %s: %s", ev.event_id, exc)
    return out


def by_severity(items, key=lambda x: x.event.severity) -> dict[SeverityClass, list]:
    out: dict[SeverityClass, list] = {}
    for it in items:
        out.setdefault(key(it), []).append(it)
    return {s: out[s] for s in SEVERITY_ORDER if s in out}


def labels_rows(analyses: Sequence[EventAnalysis]) -> list[tuple]:
    rows = []
    for a in analyses:
        for s in a.samples:
            rows.append(
                (
                    a.event.event_id,
                    s.record_id,
                    a.event.severity.value,
                    a.labels[s.record_id].value,
                    s.size_x,
                    s.duration,
                    s.speed_y,
                    s.device.value,
                )
            )
    return rows


@dataclass
class LabelRow:
    event_id: str
    record_id: str
    severity: SeverityClass
    category: CategoryLabel
    customers: int
    duration: int
    speed_y: float
    device: DeviceType

    def sample(self) -> RankedSample:
        return RankedSample(self.record_id, self.customers, self.speed_y, self.duration, device=self.device)


def load_labels(path: Path) -> list[LabelRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != LABEL_COLUMNS:
            raise ParseError(f"{path}: not a labels file")
        rows = []
        for row in reader:
            if not row:
                continue
            try:
                rows.append(
                    LabelRow(
                        row[0],
                        row[1],
                        SeverityClass(row[2]),
                        CategoryLabel(row[3]),
                        int(row[4]),
                        int(row[5]),
                        float(row[6]),
                        DeviceType.parse(row[7]),
                    )
                )
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{path}:{reader.line_num}: {exc}") from None
    return rows
