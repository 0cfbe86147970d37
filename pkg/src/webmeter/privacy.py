"""Aggregation, pseudonymous digests, schema validation, deletion, retention.

Data leaves a participant's machine only as aggregate counts packaged into
digests. Every digest is addressed by a per-study pseudonymous ID derived
one-way from a participant secret, so IDs from different studies cannot be
linked. A digest's payload must conform to the study schema, whose every
field carries a declared risk label.

Encryption is modeled as an envelope: each digest names the study key that
would seal it (keyId); actual ciphers are pluggable infrastructure.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

VALUE_TYPES = ("count", "category", "timestamp-bucket")
RISK_LABELS = ("low", "medium", "high")

AGGREGATION_WINDOW_MS = 7 * 86_400_000  # default digest period
RETENTION_DAYS = 730


class EmptyInput(ValueError):
    pass


class UndeclaredField(ValueError):
    def __init__(self, name: str):
        super().__init__(f"field {name!r} is not declared in the study schema")
        self.name = name


class StoreUnreadable(OSError):
    pass


@dataclass(frozen=True)
class SchemaField:
    name: str
    valueType: str
    riskLabel: str


@dataclass(frozen=True)
class StudySchema:
    studyId: str
    fields: tuple[SchemaField, ...]

    def field_map(self) -> dict[str, SchemaField]:
        return {f.name: f for f in self.fields}


def parse_schema(text: str) -> StudySchema:
    raw = json.loads(text)
    study_id = raw.get("studyId")
    if not isinstance(study_id, str) or not study_id:
        raise ValueError("schema must declare a non-empty studyId")
    fields = []
    names = set()
    for item in raw.get("fields", []):
        name = item.get("name")
        value_type = item.get("valueType")
        risk = item.get("riskLabel")
        if not isinstance(name, str) or not name:
            raise ValueError("schema field without a name")
        if name in names:
            raise ValueError(f"duplicate schema field {name!r}")
        if value_type not in VALUE_TYPES:
            raise ValueError(f"field {name!r}: bad valueType {value_type!r}")
        if risk not in RISK_LABELS:
            raise ValueError(f"field {name!r}: bad riskLabel {risk!r}")
        names.add(name)
        fields.append(SchemaField(name, value_type, risk))
    return StudySchema(study_id, tuple(fields))


def schema_to_json(schema: StudySchema) -> str:
    return json.dumps(
        {
            "studyId": schema.studyId,
            "fields": [
                {"name": f.name, "valueType": f.valueType, "riskLabel": f.riskLabel}
                for f in schema.fields
            ],
        },
        separators=(",", ":"),
    )


@dataclass(frozen=True)
class Digest:
    studyId: str
    pseudoId: str
    windowStart: int
    windowEnd: int
    payload: dict
    keyId: str


@dataclass(frozen=True)
class SchemaViolation:
    field: str | None
    problem: str


def aggregate(
    records: Sequence,
    categoryFn: Callable,
    window: tuple[int, int] | None = None,
) -> dict:
    """Category -> count over the records; counts always sum to len(records)."""
    if window is not None:
        start, end = window
        for record in records:
            t = getattr(record, "t", None)
            if t is not None and not start <= t < end:
                raise ValueError(f"record at t={t} outside window [{start}, {end})")
    counts: dict = {}
    for record in records:
        category = categoryFn(record)
        counts[category] = counts.get(category, 0) + 1
    return counts


def pseudo_id(studyId: str, participantSecret: str) -> str:
    """Deterministic keyed one-way ID; unlinkable across studies."""
    if not studyId or not participantSecret:
        raise EmptyInput("studyId and participantSecret must be non-empty")
    mac = hmac.new(participantSecret.encode("utf-8"), studyId.encode("utf-8"), hashlib.sha256)
    return mac.hexdigest()


def study_key_id(studyId: str) -> str:
    return f"{studyId}-k1"


def build_digest(
    aggregates: dict,
    schema: StudySchema,
    pseudoId: str,
    window: tuple[int, int],
) -> Digest:
    declared = schema.field_map()
    for name in aggregates:
        if name not in declared:
            raise UndeclaredField(name)
    start, end = window
    if end <= start:
        raise ValueError("windowEnd must be after windowStart")
    return Digest(
        studyId=schema.studyId,
        pseudoId=pseudoId,
        windowStart=start,
        windowEnd=end,
        payload=dict(sorted(aggregates.items())),
        keyId=study_key_id(schema.studyId),
    )


def validate_digest(digest: Digest, schema: StudySchema) -> list[SchemaViolation]:
    """Conformance check; an empty list means the digest is valid."""
    violations: list[SchemaViolation] = []
    if digest.studyId != schema.studyId:
        violations.append(
            SchemaViolation(None, f"digest studyId {digest.studyId!r} != schema {schema.studyId!r}")
        )
    if digest.windowEnd <= digest.windowStart:
        violations.append(SchemaViolation(None, "windowEnd not after windowStart"))
    declared = schema.field_map()
    for name, value in digest.payload.items():
        field = declared.get(name)
        if field is None:
            violations.append(SchemaViolation(name, "field not declared in schema"))
            continue
        if field.valueType == "count":
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                violations.append(SchemaViolation(name, "count must be a non-negative integer"))
        elif field.valueType == "category":
            if not isinstance(value, str):
                violations.append(SchemaViolation(name, "category must be text"))
        else:  # timestamp-bucket
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                violations.append(
                    SchemaViolation(name, "timestamp-bucket must be a non-negative integer")
                )
    return violations


def digest_to_json(digest: Digest) -> str:
    return json.dumps(
        {
            "studyId": digest.studyId,
            "pseudoId": digest.pseudoId,
            "windowStart": digest.windowStart,
            "windowEnd": digest.windowEnd,
            "payload": dict(sorted(digest.payload.items())),
            "keyId": digest.keyId,
        },
        separators=(",", ":"),
    )


def digest_from_json(text: str) -> Digest:
    raw = json.loads(text)
    return Digest(
        studyId=raw["studyId"],
        pseudoId=raw["pseudoId"],
        windowStart=raw["windowStart"],
        windowEnd=raw["windowEnd"],
        payload=raw["payload"],
        keyId=raw["keyId"],
    )


# --- on-disk digest store ----------------------------------------------------
# Layout: {root}/{studyId}/{pseudoId}/{windowStart}.json


def save_digest(root: Path, digest: Digest) -> Path:
    directory = Path(root) / digest.studyId / digest.pseudoId
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{digest.windowStart}.json"
    path.write_text(digest_to_json(digest), encoding="utf-8")
    return path


def _store_root(root: Path) -> Path:
    root = Path(root)
    if not root.is_dir():
        raise StoreUnreadable(f"digest store {root} is not a readable directory")
    return root


def iter_digests(root: Path) -> Iterator[tuple[Path, Digest]]:
    for path in sorted(_store_root(root).glob("*/*/*.json")):
        try:
            yield path, digest_from_json(path.read_text(encoding="utf-8"))
        except (OSError, ValueError, KeyError) as exc:
            raise StoreUnreadable(f"unreadable digest {path}: {exc}") from exc


def delete_participant(root: Path, pseudoId: str) -> int:
    """Remove every digest for the pseudoId, across studies. Returns count."""
    root = _store_root(root)
    removed = 0
    for directory in sorted(root.glob(f"*/{pseudoId}")):
        if directory.is_dir():
            removed += sum(1 for _ in directory.glob("*.json"))
            shutil.rmtree(directory)
    return removed


def retention_sweep(root: Path, nowMs: int, retentionDays: int = RETENTION_DAYS) -> int:
    """Remove digests whose window ended more than retentionDays ago."""
    cutoff = nowMs - retentionDays * 86_400_000
    removed = 0
    for path, digest in list(iter_digests(root)):
        if digest.windowEnd < cutoff:
            path.unlink()
            removed += 1
    for directory in sorted(Path(root).glob("*/*"), reverse=True):
        if directory.is_dir() and not any(directory.iterdir()):
            directory.rmdir()
    for directory in sorted(Path(root).glob("*"), reverse=True):
        if directory.is_dir() and not any(directory.iterdir()):
            directory.rmdir()
    return removed
