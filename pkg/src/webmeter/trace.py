"""Browser-session event traces: the vocabulary every measurement consumes.

A trace is one participant session: an ordered, timestamped sequence of
browser events bracketed by BrowserStartup and BrowserShutdown. Event
timestamps are integer milliseconds since session start. Traces are
immutable after parsing and safe to share across workers.

File format: UTF-8, one JSON object per line. Line 1 is a header record
{"formatVersion": 1, "participantId": ..., "ageGroup": ...}; every other
line is an event record {"t": ..., "kind": ..., <kind fields>}. Lines that
are blank or start with "#" are ignored. Unknown fields are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields as dc_fields
from typing import Iterator

FORMAT_VERSION = 1

AGE_GROUPS = ("19-24", "25-34", "35-44", "45-54", "55-65", "65+")

DISPOSITIONS = ("same-tab", "new-tab", "new-window")
SHARE_PLATFORMS = ("facebook", "twitter", "reddit")
SHARE_ACTIONS = ("post", "reshare", "favorite", "comment", "vote")
SHARE_AUDIENCES = ("public", "restricted", "unknown")


class TraceError(ValueError):
    """Base class for trace parsing failures."""


class MalformedRecord(TraceError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class OutOfOrderTimestamp(TraceError):
    def __init__(self, line: int, t: int, prev: int):
        super().__init__(f"line {line}: t={t} is earlier than preceding t={prev}")
        self.line = line


class DanglingReference(TraceError):
    def __init__(self, line: int, ref: str):
        super().__init__(f"line {line}: reference to unknown or closed {ref}")
        self.line = line
        self.ref = ref


@dataclass(frozen=True)
class TraceEvent:
    t: int


@dataclass(frozen=True)
class BrowserStartup(TraceEvent):
    systemClockMs: int


@dataclass(frozen=True)
class SystemClockChange(TraceEvent):
    deltaMs: int


@dataclass(frozen=True)
class AddressBarEntry(TraceEvent):
    tabId: int
    url: str


@dataclass(frozen=True)
class PageLoad(TraceEvent):
    tabId: int
    windowId: int
    url: str
    httpReferrer: str | None = None


@dataclass(frozen=True)
class HistoryStateUpdate(TraceEvent):
    tabId: int
    newUrl: str


@dataclass(frozen=True)
class LinkClick(TraceEvent):
    sourceTabId: int
    targetUrl: str
    disposition: str


@dataclass(frozen=True)
class TabOpened(TraceEvent):
    tabId: int
    windowId: int


@dataclass(frozen=True)
class TabActivated(TraceEvent):
    windowId: int
    tabId: int


@dataclass(frozen=True)
class TabClosed(TraceEvent):
    tabId: int


@dataclass(frozen=True)
class WindowFocusChanged(TraceEvent):
    # windowId None means no browser window has focus.
    windowId: int | None


@dataclass(frozen=True)
class WindowClosed(TraceEvent):
    windowId: int


@dataclass(frozen=True)
class InputActivity(TraceEvent):
    pass


@dataclass(frozen=True)
class ScrollPosition(TraceEvent):
    tabId: int
    depthPercent: int


@dataclass(frozen=True)
class LinkVisible(TraceEvent):
    tabId: int
    url: str
    areaPx: int


@dataclass(frozen=True)
class LinkHidden(TraceEvent):
    tabId: int
    url: str


@dataclass(frozen=True)
class SocialShare(TraceEvent):
    platform: str
    action: str
    audience: str
    reshare: bool
    url: str | None = None


@dataclass(frozen=True)
class BrowserShutdown(TraceEvent):
    pass


EVENT_KINDS: dict[str, type[TraceEvent]] = {
    cls.__name__: cls
    for cls in (
        BrowserStartup, SystemClockChange, AddressBarEntry, PageLoad,
        HistoryStateUpdate, LinkClick, TabOpened, TabActivated, TabClosed,
        WindowFocusChanged, WindowClosed, InputActivity, ScrollPosition,
        LinkVisible, LinkHidden, SocialShare, BrowserShutdown,
    )
}

# Fields serialized only when present; absent means "no value".
_OMIT_WHEN_NONE = {
    (PageLoad, "httpReferrer"),
    (SocialShare, "url"),
}

_ENUM_FIELDS = {
    (LinkClick, "disposition"): DISPOSITIONS,
    (SocialShare, "platform"): SHARE_PLATFORMS,
    (SocialShare, "action"): SHARE_ACTIONS,
    (SocialShare, "audience"): SHARE_AUDIENCES,
}

# Canonical wire order: t, kind, then the kind's declared fields.
_FIELD_ORDER = {
    BrowserStartup: ("systemClockMs",),
    SystemClockChange: ("deltaMs",),
    AddressBarEntry: ("tabId", "url"),
    PageLoad: ("tabId", "windowId", "url", "httpReferrer"),
    HistoryStateUpdate: ("tabId", "newUrl"),
    LinkClick: ("sourceTabId", "targetUrl", "disposition"),
    TabOpened: ("tabId", "windowId"),
    TabActivated: ("windowId", "tabId"),
    TabClosed: ("tabId",),
    WindowFocusChanged: ("windowId",),
    WindowClosed: ("windowId",),
    InputActivity: (),
    ScrollPosition: ("tabId", "depthPercent"),
    LinkVisible: ("tabId", "url", "areaPx"),
    LinkHidden: ("tabId", "url"),
    SocialShare: ("platform", "action", "url", "audience", "reshare"),
    BrowserShutdown: (),
}


@dataclass(frozen=True)
class Trace:
    """One participant session."""

    participantId: str
    ageGroup: str = "unknown"
    events: tuple[TraceEvent, ...] = ()

    @property
    def start_ms(self) -> int:
        return self.events[0].t if self.events else 0

    @property
    def end_ms(self) -> int:
        return self.events[-1].t if self.events else 0

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class Violation:
    """A broken trace invariant. eventIndex is None for trace-level rules."""

    rule: str
    eventIndex: int | None
    detail: str

    def __str__(self) -> str:
        where = "header" if self.eventIndex is None else f"event {self.eventIndex}"
        return f"{self.rule} at {where}: {self.detail}"


def _check_int(value, line: int, name: str) -> int:
    # bool is an int subclass; a JSON true/false here is still malformed.
    if not isinstance(value, int) or isinstance(value, bool):
        raise MalformedRecord(line, f"field {name!r} must be an integer")
    return value


def _check_str(value, line: int, name: str) -> str:
    if not isinstance(value, str):
        raise MalformedRecord(line, f"field {name!r} must be a string")
    return value


def _event_from_record(record: dict, line: int) -> TraceEvent:
    kind = record.get("kind")
    if not isinstance(kind, str) or kind not in EVENT_KINDS:
        raise MalformedRecord(line, f"unknown event kind {kind!r}")
    cls = EVENT_KINDS[kind]
    declared = _FIELD_ORDER[cls]
    allowed = {"t", "kind", *declared}
    for key in record:
        if key not in allowed:
            raise MalformedRecord(line, f"unknown field {key!r} for {kind}")
    t = _check_int(record.get("t"), line, "t")
    if t < 0:
        raise MalformedRecord(line, "field 't' must be >= 0")

    kwargs: dict = {"t": t}
    for name in declared:
        optional = (cls, name) in _OMIT_WHEN_NONE
        nullable = cls is WindowFocusChanged and name == "windowId"
        if name not in record:
            if optional:
                kwargs[name] = None
                continue
            raise MalformedRecord(line, f"missing field {name!r} for {kind}")
        value = record[name]
        if value is None:
            if nullable or optional:
                kwargs[name] = None
                continue
            raise MalformedRecord(line, f"field {name!r} may not be null")
        if (cls, name) in _ENUM_FIELDS:
            value = _check_str(value, line, name)
            if value not in _ENUM_FIELDS[(cls, name)]:
                raise MalformedRecord(line, f"bad {name} value {value!r}")
        elif name == "reshare":
            if not isinstance(value, bool):
                raise MalformedRecord(line, f"field {name!r} must be a boolean")
        elif name in ("url", "newUrl", "targetUrl", "httpReferrer"):
            value = _check_str(value, line, name)
        else:
            value = _check_int(value, line, name)
        kwargs[name] = value

    if cls is ScrollPosition and not 0 <= kwargs["depthPercent"] <= 100:
        raise MalformedRecord(line, "depthPercent must be within [0, 100]")
    if cls is LinkVisible and kwargs["areaPx"] < 0:
        raise MalformedRecord(line, "areaPx must be >= 0")
    return cls(**kwargs)


def _significant_lines(text: str) -> Iterator[tuple[int, str]]:
    for number, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield number, line


def parse_trace(data: bytes | str) -> Trace:
    """Parse the line-delimited trace format.

    Raises MalformedRecord, OutOfOrderTimestamp, or DanglingReference.
    Session bracketing (startup first, shutdown last) is not enforced here;
    validate_trace reports it, so partial captures can still be linted.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    header: dict | None = None
    events: list[TraceEvent] = []
    prev_t: int | None = None
    refs = _ReferenceTracker()

    for number, line in _significant_lines(text):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(number, f"invalid JSON ({exc.msg})") from exc
        if not isinstance(record, dict):
            raise MalformedRecord(number, "record must be a JSON object")

        if header is None:
            unknown = set(record) - {"formatVersion", "participantId", "ageGroup"}
            if unknown:
                raise MalformedRecord(number, f"unknown header field {sorted(unknown)[0]!r}")
            if record.get("formatVersion") != FORMAT_VERSION:
                raise MalformedRecord(number, "header must declare formatVersion 1")
            participant = _check_str(record.get("participantId"), number, "participantId")
            if not participant:
                raise MalformedRecord(number, "participantId must be non-empty")
            age = record.get("ageGroup", "unknown")
            if age not in AGE_GROUPS and age != "unknown":
                raise MalformedRecord(number, f"bad ageGroup {age!r}")
            header = {"participantId": participant, "ageGroup": age}
            continue

        event = _event_from_record(record, number)
        if prev_t is not None and event.t < prev_t:
            raise OutOfOrderTimestamp(number, event.t, prev_t)
        prev_t = event.t
        problem = refs.observe(event)
        if problem is not None:
            raise DanglingReference(number, problem)
        events.append(event)

    if header is None:
        raise MalformedRecord(1, "missing header record")
    return Trace(header["participantId"], header["ageGroup"], tuple(events))


def _record_for(event: TraceEvent) -> dict:
    cls = type(event)
    record: dict = {"t": event.t, "kind": cls.__name__}
    for name in _FIELD_ORDER[cls]:
        value = getattr(event, name)
        if value is None and (cls, name) in _OMIT_WHEN_NONE:
            continue
        record[name] = value
    return record


def serialize_trace(trace: Trace) -> bytes:
    """Canonical bytes; parse_trace(serialize_trace(x)) == x."""
    lines = [
        json.dumps(
            {
                "formatVersion": FORMAT_VERSION,
                "participantId": trace.participantId,
                "ageGroup": trace.ageGroup,
            },
            separators=(",", ":"),
        )
    ]
    lines.extend(json.dumps(_record_for(e), separators=(",", ":")) for e in trace.events)
    return ("\n".join(lines) + "\n").encode("utf-8")


class _ReferenceTracker:
    """Tracks tab/window lifecycles.

    Windows have no open event of their own: the first TabOpened naming a
    windowId creates it. Closing a window closes its remaining tabs, and
    ids are never reused within a session.
    """

    def __init__(self):
        self.open_tabs: dict[int, int] = {}  # tabId -> windowId
        self.open_windows: set[int] = set()
        self.seen_tabs: set[int] = set()
        self.seen_windows: set[int] = set()

    def observe(self, event: TraceEvent) -> str | None:
        if isinstance(event, TabOpened):
            if event.tabId in self.seen_tabs:
                return f"tab {event.tabId} (id reused)"
            if event.windowId in self.seen_windows and event.windowId not in self.open_windows:
                return f"window {event.windowId} (closed)"
            self.open_windows.add(event.windowId)
            self.seen_windows.add(event.windowId)
            self.open_tabs[event.tabId] = event.windowId
            self.seen_tabs.add(event.tabId)
            return None
        if isinstance(event, TabClosed):
            if event.tabId not in self.open_tabs:
                return f"tab {event.tabId}"
            del self.open_tabs[event.tabId]
            return None
        if isinstance(event, WindowClosed):
            if event.windowId not in self.open_windows:
                return f"window {event.windowId}"
            self.open_windows.discard(event.windowId)
            for tab in [t for t, w in self.open_tabs.items() if w == event.windowId]:
                del self.open_tabs[tab]
            return None
        if isinstance(event, TabActivated):
            if event.windowId not in self.open_windows:
                return f"window {event.windowId}"
            if event.tabId not in self.open_tabs:
                return f"tab {event.tabId}"
            if self.open_tabs[event.tabId] != event.windowId:
                return f"tab {event.tabId} (not in window {event.windowId})"
            return None
        if isinstance(event, PageLoad):
            if event.tabId not in self.open_tabs:
                return f"tab {event.tabId}"
            if event.windowId not in self.open_windows:
                return f"window {event.windowId}"
            return None
        if isinstance(event, (AddressBarEntry, HistoryStateUpdate, ScrollPosition,
                              LinkVisible, LinkHidden)):
            tab = event.tabId
            if tab not in self.open_tabs:
                return f"tab {tab}"
            return None
        if isinstance(event, LinkClick):
            if event.sourceTabId not in self.open_tabs:
                return f"tab {event.sourceTabId}"
            return None
        if isinstance(event, WindowFocusChanged):
            if event.windowId is not None and event.windowId not in self.open_windows:
                return f"window {event.windowId}"
            return None
        return None


def validate_trace(trace: Trace) -> list[Violation]:
    """Lint any Trace; empty result means every invariant holds."""
    violations: list[Violation] = []
    if trace.ageGroup not in AGE_GROUPS and trace.ageGroup != "unknown":
        violations.append(Violation("BadAgeGroup", None, f"ageGroup {trace.ageGroup!r}"))
    events = trace.events
    if not events:
        violations.append(Violation("EmptySession", None, "trace has no events"))
        return violations

    if not isinstance(events[0], BrowserStartup):
        violations.append(Violation("MissingStartup", 0, "first event must be BrowserStartup"))
    if not isinstance(events[-1], BrowserShutdown):
        violations.append(
            Violation("UnterminatedSession", len(events) - 1, "last event must be BrowserShutdown")
        )

    refs = _ReferenceTracker()
    prev_t: int | None = None
    for index, event in enumerate(events):
        if prev_t is not None and event.t < prev_t:
            violations.append(
                Violation("OutOfOrderTimestamp", index, f"t={event.t} after t={prev_t}")
            )
        prev_t = event.t
        if index > 0 and isinstance(event, BrowserStartup):
            violations.append(Violation("MisplacedStartup", index, "session already started"))
        if index < len(events) - 1 and isinstance(event, BrowserShutdown):
            violations.append(Violation("MisplacedShutdown", index, "events follow shutdown"))
        if isinstance(event, ScrollPosition) and not 0 <= event.depthPercent <= 100:
            violations.append(
                Violation("ValueRange", index, f"depthPercent {event.depthPercent}")
            )
        if isinstance(event, LinkVisible) and event.areaPx < 0:
            violations.append(Violation("ValueRange", index, f"areaPx {event.areaPx}"))
        problem = refs.observe(event)
        if problem is not None:
            violations.append(Violation("DanglingReference", index, problem))
    return violations
