import json
import random
import string

import pytest
from hypothesis import given, strategies as st

from webmeter.privacy import (
    Digest,
    EmptyInput,
    SchemaField,
    StoreUnreadable,
    StudySchema,
    UndeclaredField,
    aggregate,
    build_digest,
    delete_participant,
    digest_from_json,
    digest_to_json,
    iter_digests,
    parse_schema,
    pseudo_id,
    retention_sweep,
    save_digest,
    schema_to_json,
    validate_digest,
)

SCHEMA = StudySchema(
    "study-alpha",
    (
        SchemaField("visitsPerCategory", "count", "low"),
        SchemaField("topCategory", "category", "medium"),
        SchemaField("firstSeenBucket", "timestamp-bucket", "high"),
    ),
)


# --- aggregation --------------------------------------------------------------


class Rec:
    def __init__(self, t, label):
        self.t = t
        self.label = label


def test_aggregate_empty():
    assert aggregate([], lambda r: r.label) == {}


def test_aggregate_single_category():
    records = [Rec(i, "news") for i in range(10)]
    assert aggregate(records, lambda r: r.label) == {"news": 10}


def test_aggregate_matches_independent_recount():
    rng = random.Random(3)
    labels = ["news", "health", "misinfo", "social"]
    records = [Rec(rng.randrange(0, 1000), rng.choice(labels)) for _ in range(500)]
    got = aggregate(records, lambda r: r.label, window=(0, 1000))
    for label in labels:
        assert got.get(label, 0) == len([r for r in records if r.label == label])
    assert sum(got.values()) == len(records)


def test_aggregate_window_precondition():
    with pytest.raises(ValueError):
        aggregate([Rec(5_000, "x")], lambda r: r.label, window=(0, 1000))


@given(st.lists(st.sampled_from("abcd"), max_size=200))
def test_aggregate_conservation(labels):
    records = [Rec(i, label) for i, label in enumerate(labels)]
    counts = aggregate(records, lambda r: r.label)
    assert sum(counts.values()) == len(records)


# --- pseudonymous ids ---------------------------------------------------------


def test_pseudo_id_deterministic_and_study_scoped():
    a = pseudo_id("study-alpha", "secret-1")
    assert a == pseudo_id("study-alpha", "secret-1")
    assert a != pseudo_id("study-beta", "secret-1")
    assert a != pseudo_id("study-alpha", "secret-2")
    assert len(a) == 64
    assert all(c in "0123456789abcdef" for c in a)


def test_pseudo_id_rejects_empty_input():
    with pytest.raises(EmptyInput):
        pseudo_id("", "secret")
    with pytest.raises(EmptyInput):
        pseudo_id("study", "")


def test_pseudo_id_no_collisions_across_random_pairs():
    rng = random.Random(11)
    seen = set()
    for _ in range(10_000):
        study = "".join(rng.choices(string.ascii_lowercase, k=8))
        secret = "".join(rng.choices(string.ascii_letters, k=12))
        seen.add(pseudo_id(study, secret))
    assert len(seen) == 10_000


# --- digests ------------------------------------------------------------------


def test_build_digest_and_round_trip():
    digest = build_digest(
        {"visitsPerCategory": 12, "topCategory": "news"},
        SCHEMA,
        pseudo_id("study-alpha", "secret-1"),
        (0, 7 * 86_400_000),
    )
    assert digest.keyId == "study-alpha-k1"
    again = digest_from_json(digest_to_json(digest))
    assert again == digest
    assert validate_digest(again, SCHEMA) == []


def test_build_digest_empty_payload():
    digest = build_digest({}, SCHEMA, "deadbeef", (0, 1))
    assert digest.payload == {}
    assert validate_digest(digest, SCHEMA) == []


def test_build_digest_rejects_undeclared_field():
    with pytest.raises(UndeclaredField) as err:
        build_digest({"rawUrls": 3}, SCHEMA, "deadbeef", (0, 1))
    assert err.value.name == "rawUrls"
    with pytest.raises(ValueError):
        build_digest({}, SCHEMA, "deadbeef", (5, 5))


def test_validate_digest_value_types():
    digest = Digest("study-alpha", "id", 0, 10, {"visitsPerCategory": "many"}, "study-alpha-k1")
    violations = validate_digest(digest, SCHEMA)
    assert [v.field for v in violations] == ["visitsPerCategory"]
    ok = Digest("study-alpha", "id", 0, 10, {"visitsPerCategory": 3}, "study-alpha-k1")
    assert validate_digest(ok, SCHEMA) == []
    bool_count = Digest("study-alpha", "id", 0, 10, {"visitsPerCategory": True}, "k")
    assert validate_digest(bool_count, SCHEMA) != []


def test_validate_digest_window_and_study():
    bad = Digest("other-study", "id", 10, 10, {}, "k")
    problems = {v.problem for v in validate_digest(bad, SCHEMA)}
    assert len(problems) == 2


def reference_validator(digest: Digest, schema: StudySchema) -> bool:
    """Independent re-implementation used as a differential oracle."""
    if digest.studyId != schema.studyId or digest.windowEnd <= digest.windowStart:
        return False
    allowed = {}
    for f in schema.fields:
        allowed[f.name] = f.valueType
    for key in digest.payload:
        if key not in allowed:
            return False
        value = digest.payload[key]
        kind = allowed[key]
        if kind == "category":
            if type(value) is not str:
                return False
        else:
            if type(value) is not int or value < 0:
                return False
    return True


def test_validator_agrees_with_independent_checker_on_fuzzed_digests():
    rng = random.Random(23)
    values = [0, -1, 7, True, "text", 3.5, None, 10**12]
    names = ["visitsPerCategory", "topCategory", "firstSeenBucket", "mystery"]
    for _ in range(600):
        payload = {
            name: rng.choice(values)
            for name in rng.sample(names, k=rng.randrange(0, len(names) + 1))
        }
        digest = Digest(
            rng.choice(["study-alpha", "study-beta"]),
            "id",
            rng.choice([0, 5]),
            rng.choice([0, 5, 10]),
            payload,
            "k",
        )
        ours = validate_digest(digest, SCHEMA) == []
        theirs = reference_validator(digest, SCHEMA)
        assert ours == theirs, f"disagreement on {digest}"


def test_schema_parsing_round_trip_and_errors():
    text = schema_to_json(SCHEMA)
    assert parse_schema(text) == SCHEMA
    with pytest.raises(ValueError):
        parse_schema(json.dumps({"studyId": "s", "fields": [
            {"name": "a", "valueType": "count", "riskLabel": "low"},
            {"name": "a", "valueType": "count", "riskLabel": "low"},
        ]}))
    with pytest.raises(ValueError):
        parse_schema(json.dumps({"studyId": "s", "fields": [
            {"name": "a", "valueType": "blob", "riskLabel": "low"}]}))
    with pytest.raises(ValueError):
        parse_schema(json.dumps({"studyId": "s", "fields": [
            {"name": "a", "valueType": "count", "riskLabel": "none"}]}))


# --- store --------------------------------------------------------------------


def fill_store(root, count=6, study="study-alpha"):
    digests = []
    for i in range(count):
        digest = Digest(
            studyId=study,
            pseudoId=pseudo_id(study, f"secret-{i % 3}"),
            windowStart=i * 1000,
            windowEnd=i * 1000 + 500,
            payload={"visitsPerCategory": i},
            keyId="k",
        )
        save_digest(root, digest)
        digests.append(digest)
    return digests


def test_store_layout(tmp_path):
    (digest,) = fill_store(tmp_path, count=1)
    expected = tmp_path / digest.studyId / digest.pseudoId / f"{digest.windowStart}.json"
    assert expected.is_file()
    assert [d for _, d in iter_digests(tmp_path)] == [digest]


def test_delete_participant_removes_all_occurrences(tmp_path):
    fill_store(tmp_path, count=9, study="study-alpha")
    fill_store(tmp_path, count=3, study="study-beta")
    target = pseudo_id("study-alpha", "secret-0")
    removed = delete_participant(tmp_path, target)
    assert removed == 3
    for path in tmp_path.rglob("*"):
        assert target not in path.name
        if path.is_file():
            assert target not in path.read_text()
    assert delete_participant(tmp_path, "0" * 64) == 0


def test_retention_sweep_matches_brute_force_filter(tmp_path):
    now = 800 * 86_400_000
    rng = random.Random(5)
    ages = [rng.randrange(0, 1000) for _ in range(30)]  # days before now
    for i, age in enumerate(ages):
        end = now - age * 86_400_000
        save_digest(
            tmp_path,
            Digest("study-alpha", f"{i:064d}", end - 500, end, {}, "k"),
        )
    expected = len([a for a in ages if a > 730])
    assert retention_sweep(tmp_path, now) == expected
    kept = [d for _, d in iter_digests(tmp_path)]
    assert len(kept) == len(ages) - expected
    assert all(d.windowEnd >= now - 730 * 86_400_000 for d in kept)


def test_retention_sweep_fresh_store(tmp_path):
    fill_store(tmp_path)
    assert retention_sweep(tmp_path, 10_000_000) == 0


def test_store_unreadable(tmp_path):
    with pytest.raises(StoreUnreadable):
        delete_participant(tmp_path / "missing", "x")
    with pytest.raises(StoreUnreadable):
        list(iter_digests(tmp_path / "missing"))
    bad = tmp_path / "study" / "pid"
    bad.mkdir(parents=True)
    (bad / "1.json").write_text("{not json")
    with pytest.raises(StoreUnreadable):
        list(iter_digests(tmp_path))
