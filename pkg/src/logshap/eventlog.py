"""Event log data model, XES/CSV serialization and variant computation.

Only the ``concept:name`` and ``time:timestamp`` attributes of the XES
standard are understood. Everything else is ignored on read and never
written.
"""

from __future__ import annotations

import csv
import io
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Sequence
from xml.sax.saxutils import quoteattr

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class LogError(ValueError):
    """Domain error raised for invalid logs (e.g. empty where non-empty is required)."""


class XESParseError(LogError):
    """Malformed XML document."""


class XESSchemaError(LogError):
    """Well-formed XML that violates the supported XES subset."""


@dataclass(frozen=True)
class Event:
    case_id: str
    activity: str
    timestamp: int

    def __post_init__(self) -> None:
        if not self.activity:
            raise LogError(f"event in case {self.case_id!r} has an empty activity")


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple[Event, ...]

    def __post_init__(self) -> None:
        if not self.events:
            raise LogError(f"trace {self.case_id!r} is empty")
        last = None
        for e in self.events:
            if e.case_id != self.case_id:
                raise LogError(f"event of case {e.case_id!r} inside trace {self.case_id!r}")
            if last is not None and e.timestamp < last:
                raise LogError(f"timestamps decrease in trace {self.case_id!r}")
            last = e.timestamp

    @property
    def activities(self) -> tuple[str, ...]:
        return tuple(e.activity for e in self.events)

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class EventLog:
    traces: tuple[Trace, ...]

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    @classmethod
    def from_sequences(cls, sequences: Iterable[Sequence[str]], prefix: str = "c") -> "EventLog":
        """Build a log from activity sequences, using per-trace counters as timestamps."""
        traces = []
        for i, seq in enumerate(sequences):
            cid = f"{prefix}{i}"
            traces.append(Trace(cid, tuple(Event(cid, a, t) for t, a in enumerate(seq))))
        return cls(tuple(traces))

    def sequences(self) -> list[tuple[str, ...]]:
        return [t.activities for t in self.traces]


@dataclass(frozen=True)
class Variant:
    activity_sequence: tuple[str, ...]
    count: int


def variants(log: EventLog) -> list[Variant]:
    """Distinct activity sequences, most frequent first, ties in lexicographic order."""
    if len(log) == 0:
        raise LogError("cannot compute variants of an empty log")
    counts = Counter(t.activities for t in log.traces)
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [Variant(seq, n) for seq, n in ordered]


# --- XES ---------------------------------------------------------------------


def _ms_to_iso(ms: int) -> str:
    # split before converting; float division can lose the millisecond
    secs, rem = divmod(ms, 1000)
    dt = datetime.fromtimestamp(secs, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S") + f".{rem:03d}+00:00"


def _iso_to_ms(value: str) -> int:
    text = value.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    delta = dt - _EPOCH
    return (delta.days * 86_400 + delta.seconds) * 1000 + delta.microseconds // 1000


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _string_attr(elem: ET.Element, key: str) -> str | None:
    for child in elem:
        if _local(child.tag) == "string" and child.get("key") == key:
            return child.get("value")
    return None


def parse_xes(document: str) -> EventLog:
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        line, col = exc.position
        raise XESParseError(f"malformed XES at line {line}, column {col}: {exc}") from exc
    if _local(root.tag) != "log":
        raise XESSchemaError(f"root element is <{_local(root.tag)}>, expected <log>")

    traces = []
    for index, trace_elem in enumerate(c for c in root if _local(c.tag) == "trace"):
        case_id = _string_attr(trace_elem, "concept:name")
        if case_id is None:
            case_id = str(index)
        events = []
        for pos, ev in enumerate(c for c in trace_elem if _local(c.tag) == "event"):
            activity = _string_attr(ev, "concept:name")
            if not activity:
                raise XESSchemaError(f"event {pos} of trace {case_id!r} has no concept:name")
            ts = pos
            for child in ev:
                if _local(child.tag) == "date" and child.get("key") == "time:timestamp":
                    try:
                        ts = _iso_to_ms(child.get("value", ""))
                    except ValueError as exc:
                        raise XESSchemaError(
                            f"bad time:timestamp on event {pos} of trace {case_id!r}"
                        ) from exc
            events.append(Event(case_id, activity, ts))
        if not events:
            raise XESSchemaError(f"trace {case_id!r} has no events")
        try:
            traces.append(Trace(case_id, tuple(events)))
        except LogError as exc:
            raise XESSchemaError(str(exc)) from exc
    return EventLog(tuple(traces))


def write_xes(log: EventLog) -> str:
    out = io.StringIO()
    out.write('<?xml version="1.0" encoding="UTF-8"?>\n')
    out.write('<log xes.version="1.0" xmlns="http://www.xes-standard.org/">\n')
    for trace in log.traces:
        out.write("  <trace>\n")
        out.write(f'    <string key="concept:name" value={quoteattr(trace.case_id)}/>\n')
        for e in trace.events:
            out.write("    <event>\n")
            out.write(f'      <string key="concept:name" value={quoteattr(e.activity)}/>\n')
            out.write(f'      <date key="time:timestamp" value="{_ms_to_iso(e.timestamp)}"/>\n')
            out.write("    </event>\n")
        out.write("  </trace>\n")
    out.write("</log>\n")
    return out.getvalue()


# --- CSV ---------------------------------------------------------------------

CSV_HEADER = ("case", "activity", "timestamp")


def read_csv(text: str) -> EventLog:
    """Read ``case,activity,timestamp`` rows. Traces keep first-appearance order."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_HEADER:
        raise XESSchemaError(f"CSV header must be {','.join(CSV_HEADER)}")
    grouped: dict[str, list[Event]] = {}
    for lineno, row in enumerate(reader, start=2):
        try:
            ts = int(row["timestamp"])
        except (TypeError, ValueError) as exc:
            raise XESSchemaError(f"line {lineno}: timestamp is not an integer") from exc
        grouped.setdefault(row["case"], []).append(Event(row["case"], row["activity"], ts))
    return EventLog(tuple(Trace(cid, tuple(evs)) for cid, evs in grouped.items()))


def write_csv(log: EventLog) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for trace in log.traces:
        for e in trace.events:
            writer.writerow((e.case_id, e.activity, e.timestamp))
    return out.getvalue()
