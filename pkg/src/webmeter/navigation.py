"""Page-visit reconstruction and logical-referrer analysis.

Replays a trace into PageVisit records: one per in-scope page load or
History-API URL change, each carrying the logical referrer (the visit that
generated it, correlated through link clicks across tabs) alongside the
raw HTTP referrer. Also provides the three simpler referrer baselines and
the five-way comparison between each baseline and the logical referrer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from urllib.parse import urlsplit

from .chronology import monotonic_timestamps
from .patterns import ALL_URLS, InvalidUrl, MatchPattern, any_match, normalize_url, parse_pattern
from .trace import (
    AddressBarEntry,
    BrowserShutdown,
    HistoryStateUpdate,
    LinkClick,
    PageLoad,
    ScrollPosition,
    TabClosed,
    TabOpened,
    Trace,
    WindowClosed,
)

# A load is attributed to a click/address entry at most this much earlier.
CORRELATION_WINDOW_MS = 5000

LOAD_ORDER_CAP_MS = 1_800_000  # prior loads older than 30 min are not referrers

TRANSITION_TYPES = ("typed", "link_click", "history_state", "reload", "unknown")

COMPARISON_METHODS = ("load_order", "http_referrer", "history")


class CycleDetected(ValueError):
    pass


@dataclass
class PageVisit:
    pageId: int
    tabId: int
    windowId: int
    url: str  # normalized
    httpReferrer: str | None
    priorPageId: int | None
    transitionType: str
    transitionQualifier: str | None
    startTime: int
    stopTime: int
    maxScrollDepth: int = 0
    attentionDurationMs: int | None = None

    def as_record(self) -> dict:
        return {
            "pageId": self.pageId,
            "tabId": self.tabId,
            "windowId": self.windowId,
            "url": self.url,
            "httpReferrer": self.httpReferrer,
            "priorPageId": self.priorPageId,
            "transitionType": self.transitionType,
            "transitionQualifier": self.transitionQualifier,
            "startTime": self.startTime,
            "stopTime": self.stopTime,
            "maxScrollDepth": self.maxScrollDepth,
            "attentionDurationMs": self.attentionDurationMs,
        }


@dataclass(frozen=True)
class VisitGraph:
    nodes: tuple[PageVisit, ...]
    edges: tuple[tuple[int, int], ...]  # (priorPageId, pageId)


@dataclass
class ComparisonCounts:
    """Five-way partition of visits by baseline-vs-logical referrer agreement.

    partial/noMatch break partialOrNoMatch down by registrable domain.
    """

    neither: int = 0
    onlyOther: int = 0
    onlyWebScience: int = 0
    fullMatch: int = 0
    partialOrNoMatch: int = 0
    partial: int = 0
    noMatch: int = 0

    @property
    def total(self) -> int:
        return (
            self.neither
            + self.onlyOther
            + self.onlyWebScience
            + self.fullMatch
            + self.partialOrNoMatch
        )


def _safe_normalize(url: str | None) -> str | None:
    if url is None:
        return None
    try:
        return normalize_url(url)
    except InvalidUrl:
        return None


@dataclass
class _PendingClick:
    t: int
    sourceTabId: int
    sourceWindowId: int | None
    target: str  # normalized
    disposition: str
    sourceVisit: PageVisit | None  # captured at click time


def track_visits(trace: Trace, scope: list[MatchPattern] | None = None) -> list[PageVisit]:
    """Replay a trace into time-ordered PageVisits within the given scope.

    A visit ends at the next load or history-state update in its tab, at
    tab close, or at browser shutdown. Loads whose URL falls outside the
    scope produce no visit but still terminate the previous one. A scope
    of None admits every URL.
    """
    if scope is None:
        scope = [parse_pattern(ALL_URLS)]
    stamps = monotonic_timestamps(trace)
    visits: list[PageVisit] = []
    open_visit: dict[int, PageVisit | None] = {}
    committed_url: dict[int, str | None] = {}
    tab_window: dict[int, int] = {}
    clicks: list[_PendingClick] = []
    entries: dict[int, tuple[int, str | None]] = {}  # tabId -> (t, normalized url)
    next_id = 1

    def close(tab: int, stop: int) -> None:
        visit = open_visit.get(tab)
        if visit is not None:
            visit.stopTime = stop
            open_visit[tab] = None

    def correlate_click(t: int, tab: int, window: int | None, url: str) -> _PendingClick | None:
        for i in range(len(clicks) - 1, -1, -1):
            c = clicks[i]
            if t - c.t > CORRELATION_WINDOW_MS:
                break
            if c.target != url:
                continue
            if c.disposition == "same-tab":
                ok = tab == c.sourceTabId
            elif c.disposition == "new-tab":
                ok = tab != c.sourceTabId and window == c.sourceWindowId
            else:  # new-window
                ok = tab != c.sourceTabId and window != c.sourceWindowId
            if ok:
                return clicks.pop(i)
        return None

    def navigate(
        t: int,
        ts: int,
        tab: int,
        window: int | None,
        raw_url: str,
        referrer: str | None,
        history: bool,
    ) -> None:
        nonlocal next_id
        replaced = open_visit.get(tab)
        close(tab, ts)
        url = _safe_normalize(raw_url)
        if url is None:
            committed_url[tab] = None
            return

        prior: PageVisit | None = None
        ttype = "unknown"
        qualifier = None
        if history:
            ttype = "history_state"
            prior = replaced
        else:
            click = correlate_click(t, tab, window, url)
            entry = entries.get(tab)
            if click is not None:
                ttype = "link_click"
                prior = click.sourceVisit
            elif entry is not None and t - entry[0] <= CORRELATION_WINDOW_MS and entry[1] == url:
                ttype = "typed"
                qualifier = "from_address_bar"
                del entries[tab]
            elif committed_url.get(tab) == url:
                ttype = "reload"
        committed_url[tab] = url

        if not any_match(scope, url):
            return
        visit = PageVisit(
            pageId=next_id,
            tabId=tab,
            windowId=window if window is not None else -1,
            url=url,
            httpReferrer=referrer,
            priorPageId=prior.pageId if prior is not None else None,
            transitionType=ttype,
            transitionQualifier=qualifier,
            startTime=ts,
            stopTime=ts,
            maxScrollDepth=0,
        )
        next_id += 1
        visits.append(visit)
        open_visit[tab] = visit

    for index, event in enumerate(trace.events):
        ts = stamps[index]
        if isinstance(event, TabOpened):
            tab_window[event.tabId] = event.windowId
            open_visit.setdefault(event.tabId, None)
            committed_url.setdefault(event.tabId, None)
        elif isinstance(event, LinkClick):
            target = _safe_normalize(event.targetUrl)
            if target is not None:
                clicks.append(
                    _PendingClick(
                        t=event.t,
                        sourceTabId=event.sourceTabId,
                        sourceWindowId=tab_window.get(event.sourceTabId),
                        target=target,
                        disposition=event.disposition,
                        sourceVisit=open_visit.get(event.sourceTabId),
                    )
                )
        elif isinstance(event, AddressBarEntry):
            entries[event.tabId] = (event.t, _safe_normalize(event.url))
        elif isinstance(event, PageLoad):
            tab_window[event.tabId] = event.windowId
            navigate(
                event.t, ts, event.tabId, event.windowId, event.url, event.httpReferrer, False
            )
        elif isinstance(event, HistoryStateUpdate):
            navigate(
                event.t, ts, event.tabId, tab_window.get(event.tabId), event.newUrl, None, True
            )
        elif isinstance(event, ScrollPosition):
            visit = open_visit.get(event.tabId)
            if visit is not None:
                visit.maxScrollDepth = max(visit.maxScrollDepth, event.depthPercent)
        elif isinstance(event, TabClosed):
            close(event.tabId, ts)
        elif isinstance(event, WindowClosed):
            for tab, window in tab_window.items():
                if window == event.windowId:
                    close(tab, ts)
        elif isinstance(event, BrowserShutdown):
            for tab in list(open_visit):
                close(tab, ts)
    if stamps:
        for tab in list(open_visit):
            close(tab, stamps[-1])
    return visits


def build_dag(visits: list[PageVisit]) -> VisitGraph:
    """Graph with an edge from each visit to every visit it generated."""
    by_id = {v.pageId: v for v in visits}
    edges = []
    for visit in visits:
        if visit.priorPageId is None:
            continue
        if visit.priorPageId not in by_id:
            raise ValueError(f"unknown priorPageId {visit.priorPageId}")
        edges.append((visit.priorPageId, visit.pageId))

    # Kahn's algorithm; leftovers mean a cycle.
    indegree = {v.pageId: 0 for v in visits}
    for _, dst in edges:
        indegree[dst] += 1
    queue = [pid for pid, deg in indegree.items() if deg == 0]
    seen = 0
    adjacency: dict[int, list[int]] = {v.pageId: [] for v in visits}
    for src, dst in edges:
        adjacency[src].append(dst)
    while queue:
        node = queue.pop()
        seen += 1
        for nxt in adjacency[node]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                queue.append(nxt)
    if seen != len(visits):
        raise CycleDetected("visit graph contains a cycle")
    return VisitGraph(tuple(visits), tuple(edges))


def referrer_baseline(
    method: str, visits: list[PageVisit], capMs: int = LOAD_ORDER_CAP_MS
) -> dict[int, str | None]:
    """Referrer each baseline method would assign, as pageId -> URL."""
    if method not in COMPARISON_METHODS:
        raise ValueError(f"unknown method {method!r}")
    ordered = sorted(visits, key=lambda v: (v.startTime, v.pageId))
    out: dict[int, str | None] = {}
    if method == "load_order":
        previous: PageVisit | None = None
        for visit in ordered:
            if previous is not None and visit.startTime - previous.startTime <= capMs:
                out[visit.pageId] = previous.url
            else:
                out[visit.pageId] = None
            previous = visit
    elif method == "http_referrer":
        for visit in ordered:
            out[visit.pageId] = _safe_normalize(visit.httpReferrer)
    else:  # history: most recent earlier visit with exactly the referrer's URL
        store: dict[str, PageVisit] = {}
        for visit in ordered:
            ref = _safe_normalize(visit.httpReferrer)
            out[visit.pageId] = store[ref].url if ref in store else None
            store[visit.url] = visit
    return out


_MULTI_LABEL_SUFFIXES = frozenset(
    {
        "co.uk", "org.uk", "ac.uk", "gov.uk", "me.uk", "net.uk",
        "com.au", "net.au", "org.au", "co.jp", "ne.jp", "or.jp",
        "co.nz", "org.nz", "com.br", "net.br", "co.in", "co.kr",
        "com.mx", "com.cn", "com.tw", "co.za",
    }
)


def registrable_domain(url: str) -> str | None:
    """Heuristic eTLD+1: last two labels, or three over a known multi-label suffix."""
    host = urlsplit(url).hostname or ""
    labels = host.split(".")
    if len(labels) < 2 or all(part.isdigit() for part in labels):
        return host or None
    if len(labels) >= 3 and ".".join(labels[-2:]) in _MULTI_LABEL_SUFFIXES:
        return ".".join(labels[-3:])
    return ".".join(labels[-2:])


def compare_referrers(visits: list[PageVisit], method: str) -> ComparisonCounts:
    """Partition visits by how a baseline's referrer compares to the logical one."""
    baseline = referrer_baseline(method, visits)
    by_id = {v.pageId: v for v in visits}
    counts = ComparisonCounts()
    for visit in visits:
        logical = (
            by_id[visit.priorPageId].url if visit.priorPageId is not None else None
        )
        other = baseline[visit.pageId]
        if logical is None and other is None:
            counts.neither += 1
        elif logical is None:
            counts.onlyOther += 1
        elif other is None:
            counts.onlyWebScience += 1
        elif logical == other:
            counts.fullMatch += 1
        else:
            counts.partialOrNoMatch += 1
            if registrable_domain(logical) == registrable_domain(other):
                counts.partial += 1
            else:
                counts.noMatch += 1
    return counts
