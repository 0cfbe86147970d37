"""Batch command-line front end.

Subcommands cover the whole pipeline: `generate` synthesizes a seeded
panel of traces, `validate` lints trace files, `measure` replays them
into visit tables, `compare` scores the attention and referrer
baselines, `digest` runs the privacy aggregation, and `study` emits the
cross-category tables. Every output is deterministic for fixed inputs
and seed: files are discovered in sorted order, results are merged
sorted by participantId regardless of worker count, and CSV/JSON
writers use fixed field orders and line endings.

Exit codes: 0 success, 1 input traces or digests failed validation,
2 configuration errors (missing files, bad flags).
"""

from __future__ import annotations

import argparse
import csv
import functools
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .attention import (
    HISTOGRAM_LABELS,
    METHODS,
    AttentionComparison,
    attention_measure,
    compare_visits,
    error_stats,
)
from .chronology import monotonic_timestamps
from .exposure import (
    DomainLists,
    detect_exposures,
    study_summary,
    summary_tables_csv,
    track_shares,
)
from .navigation import (
    COMPARISON_METHODS,
    compare_referrers,
    referrer_baseline,
    track_visits,
)
from .patterns import PatternError, parse_pattern_list
from .privacy import (
    AGGREGATION_WINDOW_MS,
    aggregate,
    build_digest,
    parse_schema,
    pseudo_id,
    save_digest,
    validate_digest,
)
from .synth import (
    DEFAULT_PANEL_SIZE,
    DEFAULT_PERSONAS,
    BadMix,
    BadPersona,
    generate_panel,
    load_persona_mix,
    session_bytes,
)
from .trace import TraceError, parse_trace, validate_trace

_MEASURE_COLUMNS = (
    "participantId",
    "ageGroup",
    "pageId",
    "tabId",
    "windowId",
    "url",
    "startTime",
    "stopTime",
    "attention_webscience",
    "attention_dwell",
    "attention_load_interval",
    "attention_simple",
    "maxScrollDepth",
    "priorPageId",
    "transitionType",
    "transitionQualifier",
    "referrer_load_order",
    "referrer_http_referrer",
    "referrer_history",
)

_COMPARE_COLUMNS = (
    "participantId",
    "pageId",
    "method",
    "a_ms",
    "e_pct",
    "d_pct",
    "ageGroup",
)


class ConfigError(Exception):
    pass


@functools.lru_cache(maxsize=8)
def _load_scope(path: str | None):
    if path is None:
        return None
    return parse_pattern_list(Path(path).read_text())


@functools.lru_cache(maxsize=8)
def _load_lists(path: str):
    return DomainLists.from_csv(Path(path).read_text())


def _read_trace(path: str):
    return parse_trace(Path(path).read_bytes())


# ---------------------------------------------------------------- workers
# Top-level functions taking plain-string tasks so a process pool can
# pickle them; each returns primitive data merged by the parent.


def _w_validate(path: str) -> dict:
    problems = []
    participant = None
    try:
        trace = _read_trace(path)
        participant = trace.participantId
        for v in validate_trace(trace):
            problems.append(f"{v.rule} at event {v.eventIndex}: {v.detail}")
    except TraceError as exc:
        problems.append(f"parse: {exc}")
    return {"path": path, "participantId": participant, "problems": problems}


def _w_measure(task: tuple[str, str | None]) -> tuple[str, list[dict]]:
    path, scope_path = task
    trace = _read_trace(path)
    visits = track_visits(trace, _load_scope(scope_path))
    per_method = {m: attention_measure(m, trace, visits) for m in METHODS}
    baselines = {m: referrer_baseline(m, visits) for m in COMPARISON_METHODS}
    rows = []
    for visit in visits:
        row = {
            "participantId": trace.participantId,
            "ageGroup": trace.ageGroup,
            "pageId": visit.pageId,
            "tabId": visit.tabId,
            "windowId": visit.windowId,
            "url": visit.url,
            "startTime": visit.startTime,
            "stopTime": visit.stopTime,
            "maxScrollDepth": visit.maxScrollDepth,
            "priorPageId": visit.priorPageId,
            "transitionType": visit.transitionType,
            "transitionQualifier": visit.transitionQualifier,
        }
        for method in METHODS:
            row[f"attention_{method}"] = per_method[method][visit.pageId]
        for method in COMPARISON_METHODS:
            row[f"referrer_{method}"] = baselines[method][visit.pageId]
        rows.append(row)
    return trace.participantId, rows


def _w_compare(task: tuple[str, str | None]) -> dict:
    path, scope_path = task
    trace = _read_trace(path)
    visits = track_visits(trace, _load_scope(scope_path))
    result = compare_visits(trace, visits)
    rows = [
        (trace.participantId, r.pageId, r.method, r.a_ms, r.e_pct, r.d_pct)
        for r in result.rows
    ]
    referrers = {}
    for method in COMPARISON_METHODS:
        c = compare_referrers(visits, method)
        referrers[method] = (
            c.neither,
            c.onlyOther,
            c.onlyWebScience,
            c.fullMatch,
            c.partialOrNoMatch,
            c.partial,
            c.noMatch,
        )
    return {
        "participantId": trace.participantId,
        "ageGroup": trace.ageGroup,
        "rows": rows,
        "referrers": referrers,
        "zeroBaseline": result.zeroBaseline,
        "missing": dict(result.missing),
    }


def _w_digest(task: tuple[str, str | None, str]) -> tuple[str, dict, int]:
    path, scope_path, lists_path = task
    trace = _read_trace(path)
    lists = _load_lists(lists_path)
    visits = track_visits(trace, _load_scope(scope_path))

    def category(visit):
        got = lists.category_of(visit.url)
        return got if got is not None else "untracked"

    counts = aggregate(visits, category)
    stamps = monotonic_timestamps(trace)
    start = stamps[0] if stamps else 0
    window_start = (start // AGGREGATION_WINDOW_MS) * AGGREGATION_WINDOW_MS
    return trace.participantId, counts, window_start


def _w_study(task: tuple[str, str | None, str]) -> dict:
    path, scope_path, lists_path = task
    trace = _read_trace(path)
    lists = _load_lists(lists_path)
    visits = track_visits(trace, _load_scope(scope_path))
    exposures, untracked_exposures = detect_exposures(trace, lists)
    shares, untracked_shares = track_shares(trace, lists)
    return {
        "participantId": trace.participantId,
        "exposures": exposures,
        "shares": shares,
        "visits": visits,
        "untrackedExposures": untracked_exposures,
        "untrackedShares": untracked_shares,
    }


# ---------------------------------------------------------------- helpers


def _trace_files(directory: str) -> list[str]:
    root = Path(directory)
    if not root.is_dir():
        raise ConfigError(f"trace directory not found: {directory}")
    files = sorted(str(p) for p in root.glob("*.trace"))
    if not files:
        raise ConfigError(f"no .trace files in {directory}")
    return files


def _resolve_workers(args) -> int:
    if args.workers is not None:
        workers = args.workers
    else:
        env = os.environ.get("WEBMETER_WORKERS", "1")
        try:
            workers = int(env)
        except ValueError:
            raise ConfigError(f"WEBMETER_WORKERS is not an integer: {env!r}")
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    return workers


def _map_tasks(fn, tasks, workers: int) -> list:
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (workers * 4))))


def _out_dir(args) -> Path:
    if not args.out:
        raise ConfigError("--out is required for this subcommand")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_file(path: str | None, flag: str) -> str:
    if not path:
        raise ConfigError(f"{flag} is required for this subcommand")
    if not Path(path).is_file():
        raise ConfigError(f"file not found: {path}")
    return path


def _csv_bytes(columns, rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    return buf.getvalue().encode()


def _json_bytes(payload) -> bytes:
    return (json.dumps(payload, indent=2) + "\n").encode()


def _write(path: Path, data: bytes) -> None:
    path.write_bytes(data)


def _emit_rows(out: Path, stem: str, fmt: str, columns, dict_rows) -> Path:
    if fmt == "json":
        target = out / f"{stem}.json"
        _write(target, _json_bytes(dict_rows))
    else:
        target = out / f"{stem}.csv"
        rows = [[r[c] for c in columns] for r in dict_rows]
        _write(target, _csv_bytes(columns, rows))
    return target


# ------------------------------------------------------------- subcommands


def _cmd_generate(args) -> int:
    out = _out_dir(args)
    if args.seed is None:
        raise ConfigError("--seed is required for generate")
    if args.personas:
        mix = load_persona_mix(Path(_require_file(args.personas, "--personas")).read_text())
    else:
        mix = DEFAULT_PERSONAS
    panel = generate_panel(mix, args.count, args.seed)
    for trace in panel:
        _write(out / f"{trace.participantId}.trace", session_bytes(trace))
    print(f"wrote {len(panel)} traces to {out}")
    return 0


def _cmd_validate(args) -> int:
    files = _trace_files(args.traces)
    workers = _resolve_workers(args)
    results = _map_tasks(_w_validate, files, workers)
    bad = 0
    for res in sorted(results, key=lambda r: r["path"]):
        if res["problems"]:
            bad += 1
            for problem in res["problems"]:
                print(f"{res['path']}: {problem}", file=sys.stderr)
    print(f"{len(files) - bad}/{len(files)} traces clean")
    return 1 if bad else 0


def _cmd_measure(args) -> int:
    files = _trace_files(args.traces)
    scope = args.scope and _require_file(args.scope, "--scope")
    out = _out_dir(args)
    workers = _resolve_workers(args)
    results = _map_tasks(_w_measure, [(f, scope) for f in files], workers)
    results.sort(key=lambda item: item[0])
    rows = [row for _, trace_rows in results for row in trace_rows]
    target = _emit_rows(out, "visits", args.format, _MEASURE_COLUMNS, rows)
    print(f"wrote {len(rows)} visits to {target}")
    return 0


def _cmd_compare(args) -> int:
    files = _trace_files(args.traces)
    scope = args.scope and _require_file(args.scope, "--scope")
    out = _out_dir(args)
    workers = _resolve_workers(args)
    results = _map_tasks(_w_compare, [(f, scope) for f in files], workers)
    results.sort(key=lambda r: r["participantId"])

    comparison_rows = []
    for res in results:
        for participant, page, method, a_ms, e, d in res["rows"]:
            comparison_rows.append(
                {
                    "participantId": participant,
                    "pageId": page,
                    "method": method,
                    "a_ms": a_ms,
                    "e_pct": e,
                    "d_pct": d,
                    "ageGroup": res["ageGroup"],
                }
            )
    target = _emit_rows(out, "comparisons", args.format, _COMPARE_COLUMNS, comparison_rows)

    stat_rows = [
        AttentionComparison(r["pageId"], r["method"], r["a_ms"], r["e_pct"], r["d_pct"])
        for r in comparison_rows
    ]
    ages = [r["ageGroup"] for r in comparison_rows]
    report = error_stats(stat_rows, ageGroups=ages)

    prop_rows = []
    for method in METHODS:
        stats = report.methods[method]
        for threshold in report.thresholds:
            prop_rows.append([method, threshold, stats.proportions[threshold]])
    _write(out / "proportions.csv", _csv_bytes(("method", "threshold_pct", "fraction"), prop_rows))

    age_order = []
    for res in results:
        if res["ageGroup"] not in age_order:
            age_order.append(res["ageGroup"])
    age_order.sort()
    median_rows = []
    for method in METHODS:
        by_age = report.methods[method].medianEByAge
        for age in age_order:
            if age in by_age:
                median_rows.append([method, age, by_age[age]])
    _write(out / "medians_by_age.csv", _csv_bytes(("method", "ageGroup", "medianE"), median_rows))

    hist_rows = []
    for method in METHODS:
        histogram = report.methods[method].histogram
        for label in HISTOGRAM_LABELS:
            hist_rows.append([method, label, histogram.get(label, 0)])
    _write(out / "histogram.csv", _csv_bytes(("method", "d_bin", "count"), hist_rows))

    dat_lines = ["# d_bin " + " ".join(METHODS)]
    for label in HISTOGRAM_LABELS:
        cells = " ".join(
            str(report.methods[m].histogram.get(label, 0)) for m in METHODS
        )
        dat_lines.append(f'"{label}" {cells}')
    _write(out / "histogram.dat", ("\n".join(dat_lines) + "\n").encode())

    referrer_rows = []
    for method in COMPARISON_METHODS:
        totals = [0] * 7
        for res in results:
            for i, value in enumerate(res["referrers"][method]):
                totals[i] += value
        referrer_rows.append([method, *totals])
    _write(
        out / "referrers.csv",
        _csv_bytes(
            (
                "method",
                "neither",
                "onlyOther",
                "onlyWebScience",
                "fullMatch",
                "partialOrNoMatch",
                "partial",
                "noMatch",
            ),
            referrer_rows,
        ),
    )

    print(f"wrote {len(comparison_rows)} comparisons to {target}")
    return 0


def _cmd_digest(args) -> int:
    files = _trace_files(args.traces)
    scope = args.scope and _require_file(args.scope, "--scope")
    lists_path = _require_file(args.lists, "--lists")
    schema_path = _require_file(args.schema, "--schema")
    out = _out_dir(args)
    try:
        schema = parse_schema(Path(schema_path).read_text())
    except ValueError as exc:
        raise ConfigError(f"bad schema: {exc}")
    workers = _resolve_workers(args)
    results = _map_tasks(_w_digest, [(f, scope, lists_path) for f in files], workers)
    results.sort(key=lambda item: item[0])

    declared = set(schema.field_map())
    problems = 0
    written = 0
    for participant, counts, window_start in results:
        payload = {k: v for k, v in counts.items() if k in declared}
        dropped = sorted(set(counts) - declared)
        for name in dropped:
            print(
                f"{participant}: category {name!r} not declared in schema, dropped",
                file=sys.stderr,
            )
        digest = build_digest(
            payload,
            schema,
            pseudo_id(schema.studyId, participant),
            (window_start, window_start + AGGREGATION_WINDOW_MS),
        )
        violations = validate_digest(digest, schema)
        if violations:
            problems += 1
            for v in violations:
                print(f"{participant}: {v.field}: {v.problem}", file=sys.stderr)
            continue
        save_digest(out, digest)
        written += 1
    print(f"wrote {written} digests to {out}")
    return 1 if problems else 0


def _cmd_study(args) -> int:
    files = _trace_files(args.traces)
    scope = args.scope and _require_file(args.scope, "--scope")
    lists_path = _require_file(args.lists, "--lists")
    out = _out_dir(args)
    lists = _load_lists(lists_path)
    workers = _resolve_workers(args)
    results = _map_tasks(_w_study, [(f, scope, lists_path) for f in files], workers)
    results.sort(key=lambda r: r["participantId"])

    exposures = {r["participantId"]: r["exposures"] for r in results}
    visits = {r["participantId"]: r["visits"] for r in results}
    shares = {r["participantId"]: r["shares"] for r in results}
    summary = study_summary(exposures, visits, shares, lists)
    _write(out / "study_tables.csv", summary_tables_csv(summary).encode())

    tally_rows = []
    for category in sorted(summary.visitsPerCategory):
        tally_rows.append(["visits", category, summary.visitsPerCategory[category]])
    for category in sorted(summary.sharesPerCategory):
        tally_rows.append(["shares", category, summary.sharesPerCategory[category]])
    untracked_exposures = sum(r["untrackedExposures"] for r in results)
    untracked_shares = sum(r["untrackedShares"] for r in results)
    tally_rows.append(["exposures_untracked_target", "", untracked_exposures])
    tally_rows.append(["shares_untracked_target", "", untracked_shares])
    _write(out / "tallies.csv", _csv_bytes(("kind", "category", "count"), tally_rows))

    print(f"wrote study tables for {len(results)} participants to {out}")
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="webmeter",
        description="Replay browser telemetry traces into attention and exposure reports.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, writes=True):
        p.add_argument("--traces", help="directory of .trace files")
        p.add_argument("--scope", help="match-pattern file limiting collected URLs")
        p.add_argument("--lists", help="domain-category CSV file")
        p.add_argument("--schema", help="study schema JSON file")
        p.add_argument("--seed", type=int, help="generator seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--workers", type=int, help="worker processes (env WEBMETER_WORKERS)")

    p_gen = sub.add_parser("generate", help="synthesize a seeded trace panel")
    common(p_gen)
    p_gen.add_argument("--personas", help="persona mixture JSON file")
    p_gen.add_argument("--count", type=int, default=DEFAULT_PANEL_SIZE, help="panel size")
    p_gen.set_defaults(fn=_cmd_generate)

    p_val = sub.add_parser("validate", help="lint trace files")
    common(p_val, writes=False)
    p_val.set_defaults(fn=_cmd_validate)

    p_meas = sub.add_parser("measure", help="replay traces into visit tables")
    common(p_meas)
    p_meas.set_defaults(fn=_cmd_measure)

    p_cmp = sub.add_parser("compare", help="score attention and referrer baselines")
    common(p_cmp)
    p_cmp.set_defaults(fn=_cmd_compare)

    p_dig = sub.add_parser(
        "digest", aliases=["aggregate"], help="aggregate visits into pseudonymized digests"
    )
    common(p_dig)
    p_dig.set_defaults(fn=_cmd_digest)

    p_study = sub.add_parser("study", help="emit cross-category study tables")
    common(p_study)
    p_study.set_defaults(fn=_cmd_study)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        if args.subcommand in ("validate", "measure", "compare", "digest", "aggregate", "study"):
            if not args.traces:
                raise ConfigError("--traces is required for this subcommand")
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BadPersona, BadMix, PatternError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
