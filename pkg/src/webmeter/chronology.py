"""Study clock and idle-aware task scheduling.

The study clock syncs with the system clock once, at browser startup, and
then advances with the session's own monotonic event times; later shifts
of the system clock never move it. The scheduler fires recurring tasks at
approximately regular intervals, preferring moments when the user is not
producing input.
"""

from __future__ import annotations

from bisect import bisect_right

from .trace import BrowserStartup, InputActivity, Trace


class BadConfig(ValueError):
    pass


def monotonic_timestamps(trace: Trace) -> list[int]:
    """Study timestamp for each event, indexed by event position.

    The first timestamp equals the BrowserStartup system clock reading;
    every later one is offset by the event's monotonic session time.
    SystemClockChange events have no effect.
    """
    if not trace.events:
        return []
    first = trace.events[0]
    base = first.systemClockMs if isinstance(first, BrowserStartup) else 0
    origin = first.t
    return [base + (event.t - origin) for event in trace.events]


def schedule_idle_tasks(
    trace: Trace,
    intervalMs: int,
    idleThresholdMs: int = 15000,
    maxDeferralMs: int | None = None,
) -> list[int]:
    """Session times (ms) at which a recurring task fires.

    A task comes due every intervalMs after the previous firing and runs at
    the first moment the user has produced no input for idleThresholdMs,
    but never more than maxDeferralMs late. Consecutive firings are
    therefore separated by [intervalMs, intervalMs + maxDeferralMs].
    """
    if maxDeferralMs is None:
        maxDeferralMs = intervalMs // 2
    for name, value in (
        ("intervalMs", intervalMs),
        ("idleThresholdMs", idleThresholdMs),
        ("maxDeferralMs", maxDeferralMs),
    ):
        if value <= 0:
            raise BadConfig(f"{name} must be > 0, got {value}")
    if not trace.events:
        return []

    inputs = [e.t for e in trace.events if isinstance(e, InputActivity)]
    start, end = trace.start_ms, trace.end_ms
    firings: list[int] = []
    due = start + intervalMs
    while due <= end:
        at = _first_idle_at(inputs, due, idleThresholdMs)
        at = min(at, due + maxDeferralMs)
        if at > end:
            break
        firings.append(at)
        due = at + intervalMs
    return firings


def _first_idle_at(inputs: list[int], due: int, thresholdMs: int) -> int:
    # Input at x blocks idleness for moments [x, x + thresholdMs).
    at = due
    start = max(0, bisect_right(inputs, due) - 1)
    for x in inputs[start:]:
        if x > at:
            break
        if x > at - thresholdMs:
            at = x + thresholdMs
    return at
