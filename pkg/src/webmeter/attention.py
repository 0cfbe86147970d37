"""Attention measures per visit, and the error statistics built on them.

Four measures of how long a user attended to a page visit:

- webscience: time the visit's tab is the active tab of the focused window
  while the user is active. The activity clock pauses when no InputActivity
  has occurred for the idle threshold; a trace containing no InputActivity
  at all has input uninstrumented and counts as always active.
- dwell: stopTime - startTime.
- load_interval: time from visit start to the next page load in any tab,
  capped at 30 minutes, undefined when no later load exists.
- simple: dwell minus spans where the tab is inactive or the window is
  unfocused, ignoring idleness.

Error metrics compare each measure m against webscience per visit:
e = |a_ws - a_m| / a_ws * 100 and d = (a_ws - a_m) / a_ws * -100, so a
negative d means the method underestimated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import median

from .chronology import monotonic_timestamps
from .navigation import PageVisit
from .trace import (
    InputActivity,
    PageLoad,
    TabActivated,
    TabClosed,
    TabOpened,
    Trace,
    WindowClosed,
    WindowFocusChanged,
)

IDLE_THRESHOLD_MS = 15000
LOAD_INTERVAL_CAP_MS = 1_800_000

METHODS = ("webscience", "dwell", "load_interval", "simple")

HISTOGRAM_BIN_LOWER_BOUNDS = tuple(range(-100, 150, 10))
HISTOGRAM_LABELS = tuple(str(b) for b in HISTOGRAM_BIN_LOWER_BOUNDS) + (">150",)


class UnknownMethod(ValueError):
    pass


class ZeroBaseline(ValueError):
    pass


@dataclass(frozen=True)
class AttentionComparison:
    pageId: int
    method: str
    a_ms: int
    e_pct: float
    d_pct: float


def error_pct(a_ws: int, a_m: int) -> float:
    if a_ws == 0:
        raise ZeroBaseline("attention baseline is zero")
    return abs(a_ws - a_m) / a_ws * 100


def signed_diff(a_ws: int, a_m: int) -> float:
    if a_ws == 0:
        raise ZeroBaseline("attention baseline is zero")
    return (a_ws - a_m) / a_ws * -100


Interval = tuple[int, int]  # [start, stop), study-clock ms


def _merge(intervals: list[Interval]) -> list[Interval]:
    out: list[Interval] = []
    for start, stop in sorted(intervals):
        if stop <= start:
            continue
        if out and start <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], stop))
        else:
            out.append((start, stop))
    return out


def _overlap_ms(a: list[Interval], b: list[Interval]) -> int:
    total = 0
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if lo < hi:
            total += hi - lo
        if a[i][1] <= b[j][1]:
            i += 1
        else:
            j += 1
    return total


def _active_user_intervals(trace: Trace, idle_threshold: int) -> list[Interval]:
    """Study-clock spans where the user counts as active."""
    stamps = monotonic_timestamps(trace)
    if not stamps:
        return []
    session = (stamps[0], stamps[-1])
    inputs = [
        stamps[i] for i, e in enumerate(trace.events) if isinstance(e, InputActivity)
    ]
    if not inputs:
        return [session]
    spans = [(x, x + idle_threshold) for x in inputs]
    return _merge([(max(s, session[0]), min(e, session[1])) for s, e in spans])


def focused_tab_segments(trace: Trace) -> list[tuple[int, int, int]]:
    """(start, stop, tabId) spans where tabId is the focused window's active tab.

    The first window created receives focus implicitly; afterwards only
    WindowFocusChanged and WindowClosed move it.
    """
    stamps = monotonic_timestamps(trace)
    segments: list[tuple[int, int, int]] = []
    focused: int | None = None
    saw_window = False
    active_tab: dict[int, int | None] = {}
    tab_window: dict[int, int] = {}

    current: int | None = None
    since = stamps[0] if stamps else 0

    def flush(now: int, new_tab: int | None) -> None:
        nonlocal current, since
        if new_tab == current:
            return
        if current is not None and now > since:
            segments.append((since, now, current))
        current = new_tab
        since = now

    for index, event in enumerate(trace.events):
        now = stamps[index]
        if isinstance(event, TabOpened):
            tab_window[event.tabId] = event.windowId
            if event.windowId not in active_tab:
                active_tab[event.windowId] = None
                if not saw_window:
                    focused = event.windowId
                    saw_window = True
        elif isinstance(event, TabActivated):
            active_tab[event.windowId] = event.tabId
        elif isinstance(event, TabClosed):
            window = tab_window.pop(event.tabId, None)
            if window is not None and active_tab.get(window) == event.tabId:
                active_tab[window] = None
        elif isinstance(event, WindowFocusChanged):
            focused = event.windowId
        elif isinstance(event, WindowClosed):
            active_tab.pop(event.windowId, None)
            for tab in [t for t, w in tab_window.items() if w == event.windowId]:
                del tab_window[tab]
            if focused == event.windowId:
                focused = None
        flush(now, active_tab.get(focused) if focused is not None else None)
    if stamps:
        flush(stamps[-1], None)
    return segments


def attention_measure(
    method: str, trace: Trace, visits: list[PageVisit]
) -> dict[int, int | None]:
    """Per-visit attention in ms; None where the method yields no value."""
    if method not in METHODS:
        raise UnknownMethod(f"unknown attention method {method!r}")
    if method == "dwell":
        return {v.pageId: v.stopTime - v.startTime for v in visits}

    if method == "load_interval":
        stamps = monotonic_timestamps(trace)
        loads = sorted(
            stamps[i] for i, e in enumerate(trace.events) if isinstance(e, PageLoad)
        )
        out: dict[int, int | None] = {}
        for visit in visits:
            nxt = next((t for t in loads if t > visit.startTime), None)
            if nxt is None:
                out[visit.pageId] = None
            else:
                out[visit.pageId] = min(nxt - visit.startTime, LOAD_INTERVAL_CAP_MS)
        return out

    segments = focused_tab_segments(trace)
    by_tab: dict[int, list[Interval]] = {}
    for start, stop, tab in segments:
        by_tab.setdefault(tab, []).append((start, stop))
    result: dict[int, int | None] = {}
    if method == "simple":
        for visit in visits:
            spans = by_tab.get(visit.tabId, [])
            result[visit.pageId] = _overlap_ms(
                spans, [(visit.startTime, visit.stopTime)]
            )
        return result

    # webscience: focused-tab spans further intersected with user activity
    active = _active_user_intervals(trace, IDLE_THRESHOLD_MS)
    for visit in visits:
        spans = _merge(
            [
                (max(s, visit.startTime), min(e, visit.stopTime))
                for s, e in by_tab.get(visit.tabId, [])
            ]
        )
        result[visit.pageId] = _overlap_ms(spans, active)
    return result


@dataclass
class ComparisonResult:
    rows: list[AttentionComparison]
    zeroBaseline: int  # visits with zero webscience attention, excluded
    missing: dict[str, int]  # per method: visits that yielded no value


def compare_visits(trace: Trace, visits: list[PageVisit]) -> ComparisonResult:
    """Build per-visit comparisons of every method against webscience.

    Also fills each visit's attentionDurationMs with the webscience value.
    """
    values = {m: attention_measure(m, trace, visits) for m in METHODS}
    rows: list[AttentionComparison] = []
    zero = 0
    missing = {m: 0 for m in METHODS}
    for visit in visits:
        a_ws = values["webscience"][visit.pageId]
        visit.attentionDurationMs = a_ws
        if a_ws == 0:
            zero += 1
            continue
        for method in METHODS:
            a_m = values[method][visit.pageId]
            if a_m is None:
                missing[method] += 1
                continue
            rows.append(
                AttentionComparison(
                    pageId=visit.pageId,
                    method=method,
                    a_ms=a_m,
                    e_pct=error_pct(a_ws, a_m),
                    d_pct=signed_diff(a_ws, a_m),
                )
            )
    return ComparisonResult(rows, zero, missing)


def histogram_label(d_pct: float) -> str:
    if d_pct >= 150:
        return ">150"
    bound = max(-100, math.floor(d_pct / 10) * 10)
    return str(int(bound))


@dataclass
class MethodStats:
    count: int = 0
    proportions: dict[int, float] = field(default_factory=dict)  # e >= threshold
    medianE: float | None = None
    medianEByAge: dict[str, float] = field(default_factory=dict)
    histogram: dict[str, int] = field(default_factory=dict)


@dataclass
class ErrorReport:
    methods: dict[str, MethodStats]
    thresholds: tuple[int, ...]


def error_stats(
    comparisons: list[AttentionComparison],
    thresholds: tuple[int, ...] = (1, 10, 25),
    ageGroups: list[str] | None = None,
) -> ErrorReport:
    """Threshold proportions, medians (overall and by age), d histograms.

    ageGroups, when given, is parallel to comparisons: the age-group label
    of the participant each row came from.
    """
    if ageGroups is not None and len(ageGroups) != len(comparisons):
        raise ValueError("ageGroups must parallel comparisons")
    methods: dict[str, MethodStats] = {}
    per_age: dict[str, dict[str, list[float]]] = {}
    for i, row in enumerate(comparisons):
        stats = methods.setdefault(
            row.method,
            MethodStats(histogram={label: 0 for label in HISTOGRAM_LABELS}),
        )
        stats.count += 1
        stats.histogram[histogram_label(row.d_pct)] += 1
        age = ageGroups[i] if ageGroups is not None else "unknown"
        per_age.setdefault(row.method, {}).setdefault(age, []).append(row.e_pct)
    for method, stats in methods.items():
        errors = [e for errs in per_age[method].values() for e in errs]
        stats.medianE = median(errors)
        stats.proportions = {
            t: sum(1 for e in errors if e >= t) / len(errors) for t in thresholds
        }
        stats.medianEByAge = {
            age: median(errs) for age, errs in sorted(per_age[method].items())
        }
    return ErrorReport(methods, tuple(thresholds))
