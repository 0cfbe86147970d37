"""Link exposure, share tracking, link resolution, and study analytics.

Domains are tracked through per-category lists; anything off-list is
"untracked" and only ever tallied, never named. That invariant is
load-bearing: no output of this module may contain domain text outside
the configured lists.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping

from .attention import focused_tab_segments
from .chronology import monotonic_timestamps
from .navigation import PageVisit, registrable_domain
from .patterns import InvalidUrl, normalize_url
from .trace import HistoryStateUpdate, LinkHidden, LinkVisible, PageLoad, SocialShare, Trace

CATEGORIES = (
    "news",
    "health",
    "misinfo",
    "aggregator",
    "factcheck",
    "portal",
    "search",
    "social",
    "webmail",
)

UNTRACKED = "untracked"

MIN_AREA_PX = 2500
MIN_VISIBLE_MS = 1000
MAX_REDIRECT_DEPTH = 10


class OverlappingLists(ValueError):
    pass


class RedirectCycle(ValueError):
    pass


class DepthExceeded(ValueError):
    pass


@dataclass(frozen=True)
class DomainLists:
    """Registrable domains per tracked category; categories are disjoint."""

    categories: Mapping[str, frozenset[str]]

    @classmethod
    def from_csv(cls, text: str) -> "DomainLists":
        out: dict[str, set[str]] = {c: set() for c in CATEGORIES}
        for row in csv.reader(io.StringIO(text)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 2:
                raise ValueError(f"expected category,domain row, got {row!r}")
            category, domain = row[0].strip(), row[1].strip().lower()
            if category not in out:
                raise ValueError(f"unknown category {category!r}")
            out[category].add(domain)
        return cls({c: frozenset(d) for c, d in out.items()})

    def overlapping_domains(self) -> set[str]:
        seen: dict[str, str] = {}
        overlap = set()
        for category, domains in self.categories.items():
            for domain in domains:
                if domain in seen and seen[domain] != category:
                    overlap.add(domain)
                seen.setdefault(domain, category)
        return overlap

    def category_of(self, url: str) -> str | None:
        try:
            domain = registrable_domain(normalize_url(url))
        except InvalidUrl:
            return None
        for category, domains in self.categories.items():
            if domain in domains:
                return category
        return None

    def all_domains(self) -> frozenset[str]:
        return frozenset().union(*self.categories.values()) if self.categories else frozenset()


@dataclass(frozen=True)
class ExposureRecord:
    t: int
    sourceDomain: str | None  # present only for tracked sources
    exposedDomain: str
    sourceCategory: str  # category label or "untracked"
    exposedCategory: str


@dataclass(frozen=True)
class ShareRecord:
    t: int
    platform: str
    action: str
    audience: str
    reshare: bool
    sharedDomain: str
    visitedBefore: bool


def detect_exposures(
    trace: Trace,
    lists: DomainLists,
    minAreaPx: int = MIN_AREA_PX,
    minVisibleMs: int = MIN_VISIBLE_MS,
) -> tuple[list[ExposureRecord], int]:
    """Qualifying link exposures, plus a bare count of untracked targets.

    A link qualifies when shown at areaPx >= minAreaPx and visible for at
    least minVisibleMs while its tab is the active tab of the focused
    window. Untracked targets are only counted; untracked sources yield a
    record labeled "untracked" with no domain text.
    """
    overlap = lists.overlapping_domains()
    if overlap:
        raise OverlappingLists(f"domains in multiple categories: {sorted(overlap)}")

    stamps = monotonic_timestamps(trace)
    shown_spans: dict[int, list[tuple[int, int]]] = {}
    for start, stop, tab in focused_tab_segments(trace):
        shown_spans.setdefault(tab, []).append((start, stop))

    committed: dict[int, str | None] = {}
    open_links: dict[tuple[int, str], tuple[int, int, str | None]] = {}
    # (tabId, url) -> (visible-since stamp, areaPx, source url at that moment)
    candidates: list[tuple[int, int, int, int, str | None, str]] = []

    def finish(tab: int, url: str, hidden_at: int) -> None:
        entry = open_links.pop((tab, url), None)
        if entry is None:
            return
        since, area, source = entry
        candidates.append((since, hidden_at, tab, area, source, url))

    for index, event in enumerate(trace.events):
        now = stamps[index]
        if isinstance(event, PageLoad):
            for tab, url in [k for k in open_links if k[0] == event.tabId]:
                finish(tab, url, now)  # navigation hides the old page's links
            committed[event.tabId] = event.url
        elif isinstance(event, HistoryStateUpdate):
            committed[event.tabId] = event.newUrl
        elif isinstance(event, LinkVisible):
            key = (event.tabId, event.url)
            if key not in open_links:
                open_links[key] = (now, event.areaPx, committed.get(event.tabId))
        elif isinstance(event, LinkHidden):
            finish(event.tabId, event.url, now)
    session_end = stamps[-1] if stamps else 0
    for tab, url in list(open_links):
        finish(tab, url, session_end)

    records: list[ExposureRecord] = []
    untracked = 0
    for since, until, tab, area, source_url, link_url in sorted(candidates):
        if area < minAreaPx:
            continue
        spans = shown_spans.get(tab, [])
        visible = sum(
            min(stop, until) - max(start, since)
            for start, stop in spans
            if min(stop, until) > max(start, since)
        )
        if visible < minVisibleMs:
            continue
        exposed_category = lists.category_of(link_url)
        if exposed_category is None:
            untracked += 1
            continue
        source_category = lists.category_of(source_url) if source_url else None
        records.append(
            ExposureRecord(
                t=since,
                sourceDomain=(
                    registrable_domain(normalize_url(source_url))
                    if source_url is not None and source_category is not None
                    else None
                ),
                exposedDomain=registrable_domain(normalize_url(link_url)),
                sourceCategory=source_category if source_category is not None else UNTRACKED,
                exposedCategory=exposed_category,
            )
        )
    return records, untracked


def track_shares(trace: Trace, lists: DomainLists) -> tuple[list[ShareRecord], int]:
    """Share records for tracked URLs; off-list shares are only counted."""
    stamps = monotonic_timestamps(trace)
    seen_urls: set[str] = set()
    records: list[ShareRecord] = []
    untracked = 0
    for index, event in enumerate(trace.events):
        if isinstance(event, (PageLoad, HistoryStateUpdate)):
            raw = event.url if isinstance(event, PageLoad) else event.newUrl
            try:
                seen_urls.add(normalize_url(raw))
            except InvalidUrl:
                pass
        elif isinstance(event, SocialShare):
            if event.url is None:
                continue
            category = lists.category_of(event.url)
            if category is None:
                untracked += 1
                continue
            normalized = normalize_url(event.url)
            records.append(
                ShareRecord(
                    t=stamps[index],
                    platform=event.platform,
                    action=event.action,
                    audience=event.audience,
                    reshare=event.reshare,
                    sharedDomain=registrable_domain(normalized),
                    visitedBefore=normalized in seen_urls,
                )
            )
    return records, untracked


def resolve_link(
    url: str, redirects: Mapping[str, str], maxDepth: int = MAX_REDIRECT_DEPTH
) -> str:
    """Follow a url->url redirect map to its fixpoint."""
    if maxDepth < 1:
        raise ValueError(f"maxDepth must be >= 1, got {maxDepth}")
    table = {normalize_url(k): v for k, v in redirects.items()}
    current = normalize_url(url)
    seen = {current}
    for _ in range(maxDepth):
        if current not in table:
            return current
        current = normalize_url(table[current])
        if current in seen:
            raise RedirectCycle(f"redirect cycle through {len(seen)} URLs")
        seen.add(current)
    if current in table:
        raise DepthExceeded(f"more than {maxDepth} redirects")
    return current


@dataclass
class StudySummary:
    usersExposed: dict[str, dict[str, int]]  # source -> exposed -> participants
    exposureShare: dict[str, dict[str, float]]  # source -> exposed -> percent
    visitsPerCategory: dict[str, int]  # includes the "untracked" tally
    sharesPerCategory: dict[str, int]


def study_summary(
    records: Mapping[str, list[ExposureRecord]],
    visits: Mapping[str, list[PageVisit]],
    shares: Mapping[str, list[ShareRecord]],
    lists: DomainLists,
) -> StudySummary:
    """Cross-participant exposure matrices plus per-category tallies."""
    users: dict[str, dict[str, set[str]]] = {}
    counts: dict[str, dict[str, int]] = {}
    for participant, recs in records.items():
        for record in recs:
            users.setdefault(record.sourceCategory, {}).setdefault(
                record.exposedCategory, set()
            ).add(participant)
            row = counts.setdefault(record.sourceCategory, {})
            row[record.exposedCategory] = row.get(record.exposedCategory, 0) + 1

    users_exposed = {
        source: {exposed: len(people) for exposed, people in sorted(row.items())}
        for source, row in sorted(users.items())
    }
    share_pct = {}
    for source, row in sorted(counts.items()):
        total = sum(row.values())
        share_pct[source] = {
            exposed: count / total * 100 for exposed, count in sorted(row.items())
        }

    visit_tally = {c: 0 for c in (*CATEGORIES, UNTRACKED)}
    for participant_visits in visits.values():
        for visit in participant_visits:
            category = lists.category_of(visit.url)
            visit_tally[category if category is not None else UNTRACKED] += 1

    share_tally = {c: 0 for c in CATEGORIES}
    for participant_shares in shares.values():
        for record in participant_shares:
            for category, domains in lists.categories.items():
                if record.sharedDomain in domains:
                    share_tally[category] += 1
                    break

    return StudySummary(users_exposed, share_pct, visit_tally, share_tally)


def summary_tables_csv(summary: StudySummary) -> str:
    """Both cross-category matrices as one CSV with a leading table column."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["table", "sourceCategory", *CATEGORIES])
    for source in sorted(summary.usersExposed):
        row = summary.usersExposed[source]
        writer.writerow(["usersExposed", source, *[row.get(c, 0) for c in CATEGORIES]])
    for source in sorted(summary.exposureShare):
        row = summary.exposureShare[source]
        writer.writerow(
            ["exposureShare", source, *[repr(row[c]) if c in row else "0" for c in CATEGORIES]]
        )
    return out.getvalue()


def parse_summary_tables_csv(text: str) -> StudySummary:
    """Inverse of summary_tables_csv (tallies are not part of the matrices)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    columns = header[2:]
    users: dict[str, dict[str, int]] = {}
    share: dict[str, dict[str, float]] = {}
    for row in reader:
        table, source, values = row[0], row[1], row[2:]
        if table == "usersExposed":
            users[source] = {
                c: int(v) for c, v in zip(columns, values) if int(v) != 0
            }
        else:
            share[source] = {
                c: float(v) for c, v in zip(columns, values) if float(v) != 0.0
            }
    return StudySummary(users, share, {}, {})


def classify_page_content(text: str) -> str:
    # Stand-in for a trained content classifier; single fixed label.
    return "unclassified"
