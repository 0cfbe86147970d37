import random

import pytest

from webmeter.chronology import BadConfig, monotonic_timestamps, schedule_idle_tasks
from webmeter.trace import (
    BrowserShutdown,
    BrowserStartup,
    InputActivity,
    SystemClockChange,
    Trace,
)
from test_trace import random_trace


def session(events) -> Trace:
    return Trace("p", "unknown", tuple(events))


def test_timestamps_without_clock_changes():
    trace = session([
        BrowserStartup(0, systemClockMs=1_000_000),
        InputActivity(250),
        BrowserShutdown(900),
    ])
    assert monotonic_timestamps(trace) == [1_000_000, 1_000_250, 1_000_900]


def clock_twins(deltas: list[tuple[int, int]]) -> tuple[Trace, Trace]:
    """Same session with and without SystemClockChange events injected."""
    base = [
        BrowserStartup(0, systemClockMs=5_000_000),
        InputActivity(10_000),
        InputActivity(40_000),
        BrowserShutdown(90_000),
    ]
    shifted = list(base)
    for t, delta in sorted(deltas):
        shifted.append(SystemClockChange(t, deltaMs=delta))
    shifted.sort(key=lambda e: e.t)
    return session(base), session(shifted)


def test_clock_shift_changes_nothing_downstream():
    plain, shifted = clock_twins([(20_000, -3_600_000)])
    expected = monotonic_timestamps(plain)
    got = monotonic_timestamps(shifted)
    clockless = [
        ts for ts, e in zip(got, shifted.events) if not isinstance(e, SystemClockChange)
    ]
    assert clockless == expected


def test_cancelling_shifts_equal_no_shift():
    plain, shifted = clock_twins([(20_000, 7_200_000), (50_000, -7_200_000)])
    got = [
        ts
        for ts, e in zip(monotonic_timestamps(shifted), shifted.events)
        if not isinstance(e, SystemClockChange)
    ]
    assert got == monotonic_timestamps(plain)


def test_timestamps_non_decreasing_on_random_traces():
    for seed in range(50):
        trace = random_trace(seed)
        stamps = monotonic_timestamps(trace)
        assert stamps[0] == trace.events[0].systemClockMs
        assert all(b >= a for a, b in zip(stamps, stamps[1:]))


# --- scheduler ---------------------------------------------------------------


def idle_session(duration_ms: int) -> Trace:
    return session([BrowserStartup(0, systemClockMs=1), BrowserShutdown(duration_ms)])


def test_fully_idle_fires_every_interval():
    trace = idle_session(300_000)
    assert schedule_idle_tasks(trace, 60_000) == [60_000, 120_000, 180_000, 240_000, 300_000]


def test_continuous_input_defers_every_firing():
    events = [BrowserStartup(0, systemClockMs=1)]
    events += [InputActivity(t) for t in range(1_000, 300_000, 1_000)]
    events.append(BrowserShutdown(300_000))
    trace = session(events)
    firings = schedule_idle_tasks(trace, 60_000, idleThresholdMs=15_000, maxDeferralMs=10_000)
    assert firings == [70_000, 140_000, 210_000, 280_000]


def test_bad_config_rejected():
    trace = idle_session(10_000)
    with pytest.raises(BadConfig):
        schedule_idle_tasks(trace, 0)
    with pytest.raises(BadConfig):
        schedule_idle_tasks(trace, 60_000, idleThresholdMs=-1)
    with pytest.raises(BadConfig):
        schedule_idle_tasks(trace, 60_000, maxDeferralMs=0)


def brute_force_schedule(inputs, end, interval, threshold, max_deferral):
    """Millisecond-by-millisecond replay of the scheduling rule."""
    inputs = sorted(inputs)
    firings = []
    due = interval
    blocked_until = -1
    idx = 0
    for now in range(0, end + 1):
        while idx < len(inputs) and inputs[idx] <= now:
            blocked_until = max(blocked_until, inputs[idx] + threshold)
            idx += 1
        idle = now >= blocked_until
        if now >= due and (idle or now >= due + max_deferral):
            firings.append(now)
            due = now + interval
    return firings


def test_mixed_traces_match_brute_force_oracle():
    for seed in range(30):
        rng = random.Random(seed)
        end = rng.randrange(60_000, 400_000)
        inputs = sorted(rng.randrange(0, end) for _ in range(rng.randrange(0, 60)))
        interval = rng.choice([30_000, 60_000, 45_000])
        threshold = rng.choice([5_000, 15_000])
        max_deferral = rng.choice([10_000, 30_000, interval // 2])
        events = [BrowserStartup(0, systemClockMs=1)]
        events += [InputActivity(t) for t in inputs]
        events.append(BrowserShutdown(end))
        trace = session(events)
        got = schedule_idle_tasks(trace, interval, threshold, max_deferral)
        want = brute_force_schedule(inputs, end, interval, threshold, max_deferral)
        assert got == want, f"seed {seed}: {got} != {want}"


def test_firing_count_and_spacing_invariants():
    for seed in range(40):
        rng = random.Random(1000 + seed)
        end = rng.randrange(120_000, 900_000)
        events = [BrowserStartup(0, systemClockMs=1)]
        events += sorted(
            (InputActivity(rng.randrange(0, end)) for _ in range(rng.randrange(0, 200))),
            key=lambda e: e.t,
        )
        events.append(BrowserShutdown(end))
        trace = session(events)
        interval, max_deferral = 60_000, 30_000
        firings = schedule_idle_tasks(trace, interval, maxDeferralMs=max_deferral)
        for a, b in zip(firings, firings[1:]):
            assert interval <= b - a <= interval + max_deferral
        assert len(firings) <= end // interval + 1
        assert len(firings) >= end // (interval + max_deferral)