"""Deterministic synthetic browsing-session generator.

Sessions are produced from behavioral personas by a small named RNG so
that the same (persona, seed) pair always yields byte-identical traces,
on any platform. Generated traces pass `validate_trace` cleanly and are
meant to exercise the replay pipeline end to end: multi-tab navigation,
idle gaps, link exposure spans, and social shares.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

from .trace import (
    AGE_GROUPS,
    SHARE_ACTIONS,
    SHARE_AUDIENCES,
    SHARE_PLATFORMS,
    AddressBarEntry,
    BrowserShutdown,
    BrowserStartup,
    InputActivity,
    LinkClick,
    LinkHidden,
    LinkVisible,
    PageLoad,
    ScrollPosition,
    SocialShare,
    TabActivated,
    TabOpened,
    Trace,
    TraceEvent,
    serialize_trace,
)

RNG_ID = "splitmix64-v1"

# Comment line embedded after the header when a generated trace is
# written out, so files record which generator produced them. Parsers
# skip comment lines, so the annotation is invisible to replay.
RNG_COMMENT = b"# rng: " + RNG_ID.encode("ascii")

IDLE_THRESHOLD_MS = 15_000

DEFAULT_PANEL_SEED = 20210118
DEFAULT_PANEL_SIZE = 600


class BadPersona(ValueError):
    """A persona field is missing, unknown, or out of range."""


class BadMix(ValueError):
    """A persona mixture's weights are invalid."""


_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Tiny portable RNG (the splitmix64 finalizer over a Weyl sequence).

    Integer-only state and outputs keep the stream identical across
    platforms and Python versions, which the determinism guarantees of
    this module depend on.
    """

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def fraction(self) -> float:
        return self.next_u64() / 2.0**64

    def randrange(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randrange needs a positive bound")
        # multiply-shift bounding; the modulo bias at 64 bits is far
        # below anything the statistical tests can resolve
        return (self.next_u64() * n) >> 64

    def randint(self, a: int, b: int) -> int:
        return a + self.randrange(b - a + 1)

    def choice(self, seq):
        return seq[self.randrange(len(seq))]

    def chance(self, p: float) -> bool:
        return self.fraction() < p


def derive_seed(seed: int, index: int) -> int:
    """Per-trace seed for panel member `index`, mixed from the panel seed."""
    s = SplitMix64((seed ^ ((index + 1) * 0x9E3779B97F4A7C15)) & _MASK64)
    return s.next_u64()


@dataclass(frozen=True)
class Persona:
    """Behavioral parameters for one simulated participant archetype."""

    ageGroup: str
    meanTabs: float
    tabSwitchRatePerMin: float
    idleFraction: float
    sessionMinutes: int
    linkClickRatePerMin: float
    newTabProbability: float
    referrerTrimProbability: float

    def __post_init__(self) -> None:
        if self.ageGroup not in AGE_GROUPS:
            raise BadPersona(f"unknown ageGroup {self.ageGroup!r}")
        if self.meanTabs < 1:
            raise BadPersona("meanTabs must be >= 1")
        if self.tabSwitchRatePerMin < 0:
            raise BadPersona("tabSwitchRatePerMin must be >= 0")
        if not 0.0 <= self.idleFraction <= 1.0:
            raise BadPersona("idleFraction must be within [0, 1]")
        if self.sessionMinutes < 1:
            raise BadPersona("sessionMinutes must be >= 1")
        if self.linkClickRatePerMin < 0:
            raise BadPersona("linkClickRatePerMin must be >= 0")
        if not 0.0 <= self.newTabProbability <= 1.0:
            raise BadPersona("newTabProbability must be within [0, 1]")
        if not 0.0 <= self.referrerTrimProbability <= 1.0:
            raise BadPersona("referrerTrimProbability must be within [0, 1]")


_PERSONA_FIELDS = tuple(f.name for f in fields(Persona))


def persona_from_dict(data: dict) -> Persona:
    if not isinstance(data, dict):
        raise BadPersona("persona must be a JSON object")
    extra = set(data) - set(_PERSONA_FIELDS) - {"weight"}
    if extra:
        raise BadPersona(f"unknown persona fields: {sorted(extra)}")
    missing = set(_PERSONA_FIELDS) - set(data)
    if missing:
        raise BadPersona(f"missing persona fields: {sorted(missing)}")
    kwargs = {}
    for name in _PERSONA_FIELDS:
        value = data[name]
        if name == "ageGroup":
            if not isinstance(value, str):
                raise BadPersona("ageGroup must be a string")
        elif name == "sessionMinutes":
            if isinstance(value, bool) or not isinstance(value, int):
                raise BadPersona("sessionMinutes must be an integer")
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise BadPersona(f"{name} must be numeric")
            value = float(value)
        kwargs[name] = value
    return Persona(**kwargs)


def persona_to_dict(persona: Persona) -> dict:
    return {name: getattr(persona, name) for name in _PERSONA_FIELDS}


def load_persona_mix(text: str) -> list[tuple[Persona, float]]:
    """Parse a JSON persona-mixture file.

    The file holds either a single persona object or a list of them;
    each entry may carry an optional "weight". When no weights appear,
    the mixture is uniform. Explicit weights must sum to 1.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BadPersona(f"persona file is not valid JSON: {exc}") from None
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list) or not data:
        raise BadPersona("persona file must hold an object or non-empty list")
    entries = []
    weighted = any(isinstance(item, dict) and "weight" in item for item in data)
    for item in data:
        persona = persona_from_dict(item)
        if weighted:
            if "weight" not in item:
                raise BadMix("either every persona carries a weight or none does")
            w = item["weight"]
            if isinstance(w, bool) or not isinstance(w, (int, float)) or w < 0:
                raise BadMix("weight must be a non-negative number")
            entries.append((persona, float(w)))
        else:
            entries.append((persona, 1.0 / len(data)))
    check_mix(entries)
    return entries


def check_mix(personaMix) -> None:
    if not personaMix:
        raise BadMix("empty persona mixture")
    total = 0.0
    for _, weight in personaMix:
        if weight < 0:
            raise BadMix("mixture weights must be non-negative")
        total += weight
    if abs(total - 1.0) > 1e-9:
        raise BadMix(f"mixture weights sum to {total!r}, expected 1")


# Six archetypes spanning the age buckets. Tab-switching intensity,
# parallel-tab count, and new-tab appetite all fall with age while the
# idle share stays constant, so dwell-style baselines degrade most for
# the youngest archetype and least for the oldest.
DEFAULT_PERSONAS: tuple[tuple[Persona, float], ...] = tuple(
    (
        Persona(
            ageGroup=age,
            meanTabs=tabs,
            tabSwitchRatePerMin=switch,
            idleFraction=0.15,
            sessionMinutes=60,
            linkClickRatePerMin=1.5,
            newTabProbability=newtab,
            referrerTrimProbability=0.2,
        ),
        1.0 / 6.0,
    )
    for age, tabs, switch, newtab in (
        ("19-24", 5.0, 6.0, 0.40),
        ("25-34", 4.0, 5.0, 0.34),
        ("35-44", 4.0, 4.0, 0.28),
        ("45-54", 3.0, 3.0, 0.22),
        ("55-65", 3.0, 2.0, 0.16),
        ("65+", 2.0, 1.0, 0.10),
    )
)


# Site pool visited by simulated users. The tracked half mirrors the
# study category lists used in tests; the untracked half exists so the
# anonymity path (count without naming) gets exercised.
_TRACKED_DOMAINS = (
    "news-site.test",
    "daily-news.test",
    "world-news.co.uk",
    "health-info.test",
    "wellness-hub.test",
    "misinfo-hub.test",
    "hoax-central.test",
    "link-aggregator.test",
    "fact-checker.test",
    "web-portal.test",
    "search-engine.test",
    "social-net.test",
    "webmail-service.test",
)
_UNTRACKED_DOMAINS = (
    "blog-una.test",
    "forum-dua.test",
    "shop-tiga.test",
    "wiki-empat.test",
    "photo-lima.test",
)
_PATHS = ("/", "/home", "/read/1", "/read/2", "/read/3", "/item?id=7", "/about")

_URL_POOL = tuple(
    ("https" if i % 2 else "http") + "://" + domain + path
    for i, domain in enumerate(_TRACKED_DOMAINS + _UNTRACKED_DOMAINS)
    for path in _PATHS
)

_LINK_AREAS = (900, 1600, 3600, 8100, 20000)


def _pick_url(rng: SplitMix64, avoid: str | None) -> str:
    for _ in range(8):
        url = rng.choice(_URL_POOL)
        if url != avoid:
            return url
    return _URL_POOL[(_URL_POOL.index(avoid) + 1) % len(_URL_POOL)]


def _origin(url: str) -> str:
    scheme, rest = url.split("://", 1)
    return scheme + "://" + rest.split("/", 1)[0] + "/"


def _arrival_gap(rng: SplitMix64, ratePerMin: float, fireShare: float) -> int:
    # arrivals are only placed inside heartbeat phases, so the mean gap
    # shrinks by the phase share to keep the whole-session rate on target
    mean = fireShare * 60_000.0 / ratePerMin
    lo = max(1, int(mean * 0.5))
    hi = max(lo, int(mean * 1.5))
    return rng.randint(lo, hi)


_NEVER = 1 << 62


def generate_session(persona: Persona, seed: int, participantId: str | None = None) -> Trace:
    """Simulate one browsing session for `persona`.

    The same (persona, seed) pair always produces the same trace. The
    result validates cleanly and starts at session time 0.
    """
    rng = SplitMix64(seed)
    if participantId is None:
        participantId = f"synth-{seed & _MASK64:016x}"
    durMs = persona.sessionMinutes * 60_000
    tabCap = max(1, int(round(persona.meanTabs)))
    instrumentInput = persona.idleFraction > 0

    events: list[TraceEvent] = []
    clock0 = 1_600_000_000_000 + rng.randrange(200_000_000) * 1000
    events.append(BrowserStartup(0, clock0))
    events.append(TabOpened(0, 1, 1))
    events.append(TabActivated(0, 1, 1))
    firstUrl = _pick_url(rng, None)
    events.append(AddressBarEntry(0, 1, firstUrl))
    events.append(PageLoad(0, 1, 1, firstUrl, None))

    tabs = [1]
    tabUrl = {1: firstUrl}
    focused = 1
    nextTabId = 2
    pendingLoadTabs: set[int] = set()
    # one-shot timed emissions (page loads, link hides), kept sorted
    pending: list[tuple[int, int, tuple]] = []
    pendingSeq = 0

    def push_pending(t: int, payload: tuple) -> None:
        nonlocal pendingSeq
        pending.append((t, pendingSeq, payload))
        pendingSeq += 1
        pending.sort()

    switchRate = persona.tabSwitchRatePerMin
    clickRate = persona.linkClickRatePerMin
    # arrivals can only fire inside heartbeat phases; the idle-threshold
    # tail of each gap counts as active time for the attention measure
    # but offers no firing opportunity, so the spacing scales by the
    # expected phase share of the cycle rather than by 1 - idleFraction
    if instrumentInput:
        expGap = 90_000.0
        expPhase = max(
            (expGap - IDLE_THRESHOLD_MS) / persona.idleFraction - expGap,
            30_000.0,
        )
        fireShare = expPhase / (expPhase + expGap)
    else:
        fireShare = 1.0

    nextSwitch = _arrival_gap(rng, switchRate, fireShare) if switchRate > 0 else _NEVER
    nextClick = _arrival_gap(rng, clickRate, fireShare) if clickRate > 0 else _NEVER
    nextScroll = rng.randint(8_000, 45_000)
    nextShare = rng.randint(240_000, 720_000)

    def fire_load(t: int, payload: tuple) -> None:
        nonlocal focused
        kind = payload[0]
        if kind == "load":
            _, tabId, url, referrer, activate = payload
            if tabId not in tabs:  # tab vanished meanwhile; drop the load
                pendingLoadTabs.discard(tabId)
                return
            events.append(PageLoad(t, tabId, 1, url, referrer))
            tabUrl[tabId] = url
            pendingLoadTabs.discard(tabId)
            if activate and focused != tabId:
                events.append(TabActivated(t, 1, tabId))
                focused = tabId
            maybe_exposure(t, tabId)
        elif kind == "hide":
            _, tabId, url = payload
            if tabId in tabs:
                events.append(LinkHidden(t, tabId, url))

    def maybe_exposure(t: int, tabId: int) -> None:
        if not rng.chance(0.3):
            return
        linkUrl = _pick_url(rng, tabUrl.get(tabId))
        area = rng.choice(_LINK_AREAS)
        showAt = t + rng.randint(200, 1_500)
        hideAt = showAt + rng.randint(300, 5_000)
        if showAt >= durMs:
            return
        push_pending(showAt, ("show", tabId, linkUrl, area))
        push_pending(min(hideAt, durMs - 1), ("hide", tabId, linkUrl))

    def do_click(t: int) -> bool:
        nonlocal nextTabId
        src = focused
        if src in pendingLoadTabs:
            return False
        current = tabUrl.get(src)
        target = _pick_url(rng, current)
        openNew = (
            len(tabs) < tabCap
            and tabCap > 1
            and rng.chance(persona.newTabProbability)
        )
        referrer = current
        if referrer is not None and rng.chance(persona.referrerTrimProbability):
            referrer = _origin(referrer)
        delay = rng.randint(100, 600)
        if openNew:
            events.append(LinkClick(t, src, target, "new-tab"))
            newId = nextTabId
            nextTabId += 1
            events.append(TabOpened(t, newId, 1))
            tabs.append(newId)
            pendingLoadTabs.add(newId)
            push_pending(t + delay, ("load", newId, target, referrer, True))
        else:
            events.append(LinkClick(t, src, target, "same-tab"))
            pendingLoadTabs.add(src)
            push_pending(t + delay, ("load", src, target, referrer, False))
        return True

    def do_switch(t: int) -> bool:
        nonlocal focused
        if len(tabs) < 2:
            return False
        others = [tabId for tabId in tabs if tabId != focused]
        target = rng.choice(others)
        events.append(TabActivated(t, 1, target))
        focused = target
        return True

    def fire_show(t: int, payload: tuple) -> None:
        _, tabId, url, area = payload
        if tabId in tabs:
            events.append(LinkVisible(t, tabId, url, area))

    phaseStart = 0
    while phaseStart < durMs:
        if instrumentInput:
            gapLen = rng.randint(60_000, 120_000)
            activeLen = max(
                int((gapLen - IDLE_THRESHOLD_MS) / persona.idleFraction) - gapLen,
                30_000,
            )
        else:
            gapLen = 0
            activeLen = durMs
        phaseEnd = min(phaseStart + activeLen, durMs)

        nextBeat = phaseStart if instrumentInput else _NEVER
        lastBeat = phaseStart
        while True:
            duePending = pending[0][0] if pending else _NEVER
            t = min(nextBeat, nextSwitch, nextClick, nextScroll, nextShare, duePending)
            if t >= phaseEnd or t >= durMs:
                break
            if duePending == t:
                _, _, payload = pending.pop(0)
                if payload[0] == "show":
                    fire_show(t, payload)
                else:
                    fire_load(t, payload)
            elif nextBeat == t:
                events.append(InputActivity(t))
                lastBeat = t
                nextBeat = t + rng.randint(3_000, 9_000)
            elif nextSwitch == t:
                if do_switch(t):
                    nextSwitch = t + _arrival_gap(rng, switchRate, fireShare)
                else:
                    nextSwitch = t + 2_000
            elif nextClick == t:
                if do_click(t):
                    nextClick = t + _arrival_gap(rng, clickRate, fireShare)
                else:
                    nextClick = t + 1_000
            elif nextScroll == t:
                events.append(ScrollPosition(t, focused, rng.randint(5, 100)))
                nextScroll = t + rng.randint(8_000, 45_000)
            else:
                url = tabUrl.get(focused)
                events.append(
                    SocialShare(
                        t,
                        rng.choice(SHARE_PLATFORMS),
                        rng.choice(SHARE_ACTIONS),
                        rng.choice(SHARE_AUDIENCES),
                        rng.chance(0.3),
                        None if url is None or rng.chance(0.15) else url,
                    )
                )
                nextShare = t + rng.randint(240_000, 720_000)

        if not instrumentInput:
            break
        # user walks away after the last heartbeat; pending loads land
        # before the gap, timed arrivals are pushed past it
        gapBase = lastBeat
        while pending and pending[0][0] < gapBase + gapLen:
            t, _, payload = pending.pop(0)
            t = min(t, durMs - 1)
            if payload[0] == "show":
                fire_show(t, payload)
            else:
                fire_load(t, payload)
        phaseStart = gapBase + gapLen
        # shifting by the gap length (not clamping) keeps the active-time
        # spacing of each arrival stream, so realized rates stay on target
        if nextSwitch < phaseStart:
            nextSwitch += gapLen
        if nextClick < phaseStart:
            nextClick += gapLen
        if nextScroll < phaseStart:
            nextScroll += gapLen
        if nextShare < phaseStart:
            nextShare += gapLen

    while pending:
        t, _, payload = pending.pop(0)
        if t >= durMs:
            t = durMs - 1
        if payload[0] == "show":
            fire_show(t, payload)
        else:
            fire_load(t, payload)

    events.append(BrowserShutdown(durMs))
    return Trace(
        participantId=participantId,
        ageGroup=persona.ageGroup,
        events=tuple(events),
    )


def generate_panel(personaMix, n: int, seed: int) -> list[Trace]:
    """Generate `n` sessions drawn from a weighted persona mixture.

    Member `i` gets an independent seed derived from (seed, i), so
    panels are reproducible and individual members can be regenerated
    in isolation.
    """
    check_mix(personaMix)
    if n < 0:
        raise BadMix("panel size must be non-negative")
    personas = [p for p, _ in personaMix]
    weights = [w for _, w in personaMix]
    traces = []
    for index in range(n):
        memberSeed = derive_seed(seed, index)
        pick = SplitMix64(memberSeed).fraction()
        cumulative = 0.0
        persona = personas[-1]
        for candidate, weight in zip(personas, weights):
            cumulative += weight
            if pick < cumulative:
                persona = candidate
                break
        traces.append(
            generate_session(
                persona,
                memberSeed,
                participantId=f"panel-{seed & _MASK64:08x}-{index:04d}",
            )
        )
    return traces


def session_bytes(trace: Trace) -> bytes:
    """Serialize a generated trace with the RNG annotation comment."""
    raw = serialize_trace(trace)
    header, rest = raw.split(b"\n", 1)
    return header + b"\n" + RNG_COMMENT + b"\n" + rest
