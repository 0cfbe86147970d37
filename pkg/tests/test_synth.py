"""Generator tests: determinism, validity, and statistical fidelity."""

from __future__ import annotations

import json
import math

import pytest

from webmeter.attention import _active_user_intervals, compare_visits
from webmeter.navigation import COMPARISON_METHODS, compare_referrers, track_visits
from webmeter.synth import (
    DEFAULT_PANEL_SEED,
    DEFAULT_PERSONAS,
    RNG_ID,
    BadMix,
    BadPersona,
    Persona,
    SplitMix64,
    derive_seed,
    generate_panel,
    generate_session,
    load_persona_mix,
    persona_from_dict,
    persona_to_dict,
    session_bytes,
)
from webmeter.trace import (
    LinkClick,
    TabActivated,
    TabOpened,
    parse_trace,
    serialize_trace,
    validate_trace,
)

LINEAR = Persona(
    ageGroup="65+",
    meanTabs=1.0,
    tabSwitchRatePerMin=0.0,
    idleFraction=0.0,
    sessionMinutes=45,
    linkClickRatePerMin=3.0,
    newTabProbability=0.0,
    referrerTrimProbability=0.0,
)

BUSY = Persona(
    ageGroup="25-34",
    meanTabs=3.0,
    tabSwitchRatePerMin=4.0,
    idleFraction=0.15,
    sessionMinutes=90,
    linkClickRatePerMin=1.5,
    newTabProbability=0.3,
    referrerTrimProbability=0.2,
)


def test_splitmix64_reference_outputs():
    # published outputs for the all-zero seed
    rng = SplitMix64(0)
    assert [rng.next_u64() for _ in range(3)] == [
        0xE220A8397B1DCDAF,
        0x6E789E6AA1B965F4,
        0x06C45D188009454F,
    ]


def test_splitmix64_helpers_stay_in_range():
    rng = SplitMix64(99)
    for _ in range(2000):
        assert 0 <= rng.fraction() < 1.0
        assert 0 <= rng.randrange(7) < 7
        assert 3 <= rng.randint(3, 5) <= 5


def test_derive_seed_depends_on_both_inputs():
    seeds = {derive_seed(5, i) for i in range(100)}
    assert len(seeds) == 100
    assert derive_seed(5, 0) != derive_seed(6, 0)
    assert derive_seed(5, 1) == derive_seed(5, 1)


def test_session_bytes_identical_for_same_seed():
    a = generate_session(BUSY, 42)
    b = generate_session(BUSY, 42)
    assert serialize_trace(a) == serialize_trace(b)
    assert serialize_trace(a) != serialize_trace(generate_session(BUSY, 43))


def test_generated_sessions_validate_clean():
    for persona in (LINEAR, BUSY):
        for seed in (1, 7, 42):
            trace = generate_session(persona, seed)
            assert validate_trace(trace) == []


def test_session_bytes_carries_rng_annotation_and_reparses():
    trace = generate_session(BUSY, 7)
    raw = session_bytes(trace)
    lines = raw.split(b"\n")
    assert lines[1] == b"# rng: " + RNG_ID.encode()
    reparsed = parse_trace(raw)
    assert serialize_trace(reparsed) == serialize_trace(trace)


def test_idle_fraction_matches_persona():
    persona = Persona(
        ageGroup="35-44",
        meanTabs=2.0,
        tabSwitchRatePerMin=2.0,
        idleFraction=0.5,
        sessionMinutes=120,
        linkClickRatePerMin=1.5,
        newTabProbability=0.2,
        referrerTrimProbability=0.1,
    )
    for seed in (1, 7, 42):
        trace = generate_session(persona, seed)
        duration = trace.events[-1].t - trace.events[0].t
        active = sum(b - a for a, b in _active_user_intervals(trace, 15_000))
        measured = 1.0 - active / duration
        assert 0.45 <= measured <= 0.55


def test_event_rates_match_persona():
    for seed in (1, 7, 99):
        trace = generate_session(BUSY, seed)
        minutes = (trace.events[-1].t - trace.events[0].t) / 60_000
        activations = sum(1 for e in trace.events if isinstance(e, TabActivated)) - 1
        opened = sum(1 for e in trace.events if isinstance(e, TabOpened)) - 1
        switches = (activations - opened) / minutes
        clicks = sum(1 for e in trace.events if isinstance(e, LinkClick)) / minutes
        assert abs(switches - BUSY.tabSwitchRatePerMin) <= 0.1 * BUSY.tabSwitchRatePerMin
        assert abs(clicks - BUSY.linkClickRatePerMin) <= 0.1 * BUSY.linkClickRatePerMin


def test_tab_count_reaches_persona_mean():
    for seed in (1, 7, 42):
        trace = generate_session(BUSY, seed)
        opened = sum(1 for e in trace.events if isinstance(e, TabOpened))
        assert opened == round(BUSY.meanTabs)


def test_degenerate_persona_is_strictly_linear():
    trace = generate_session(LINEAR, 11)
    assert sum(1 for e in trace.events if isinstance(e, TabOpened)) == 1
    assert sum(1 for e in trace.events if isinstance(e, TabActivated)) == 1
    visits = track_visits(trace)
    assert len(visits) > 50
    for i, visit in enumerate(visits):
        expected = visits[i - 1].pageId if i else None
        assert visit.priorPageId == expected
        assert visit.tabId == 1


def test_linear_persona_zero_error_and_full_match():
    trace = generate_session(LINEAR, 2026)
    visits = track_visits(trace)
    result = compare_visits(trace, visits)
    assert result.zeroBaseline == 0
    assert max(r.e_pct for r in result.rows) == 0.0
    for method in COMPARISON_METHODS:
        counts = compare_referrers(visits, method)
        assert counts.neither == 1
        assert counts.fullMatch == len(visits) - 1
        assert counts.onlyOther == 0
        assert counts.onlyWebScience == 0
        assert counts.partialOrNoMatch == 0


def test_panel_deterministic_and_member_regenerable():
    mix = [(LINEAR, 0.5), (BUSY, 0.5)]
    a = generate_panel(mix, 8, 99)
    b = generate_panel(mix, 8, 99)
    assert [serialize_trace(t) for t in a] == [serialize_trace(t) for t in b]
    ids = [t.participantId for t in a]
    assert len(set(ids)) == 8
    # any member can be rebuilt alone from (panel seed, index)
    solo = generate_panel(mix, 8, 99)[5]
    assert serialize_trace(solo) == serialize_trace(a[5])


def test_panel_mixture_counts_within_two_sigma():
    n = 400
    weight = 0.25
    mix = [
        (LINEAR, weight),
        (
            Persona(**{**persona_to_dict(BUSY), "ageGroup": "19-24"}),
            0.75,
        ),
    ]
    for seed in (1, 7, 42):
        panel = generate_panel(mix, n, seed)
        linear_count = sum(1 for t in panel if t.ageGroup == "65+")
        sigma = math.sqrt(n * weight * (1 - weight))
        assert abs(linear_count - n * weight) <= 2 * sigma


def test_default_personas_cover_all_age_groups():
    ages = [p.ageGroup for p, _ in DEFAULT_PERSONAS]
    assert ages == ["19-24", "25-34", "35-44", "45-54", "55-65", "65+"]
    switches = [p.tabSwitchRatePerMin for p, _ in DEFAULT_PERSONAS]
    assert switches == sorted(switches, reverse=True)
    assert len({p.idleFraction for p, _ in DEFAULT_PERSONAS}) == 1
    assert abs(sum(w for _, w in DEFAULT_PERSONAS) - 1.0) < 1e-9


@pytest.mark.parametrize(
    "field,value",
    [
        ("ageGroup", "kids"),
        ("meanTabs", 0.5),
        ("tabSwitchRatePerMin", -1.0),
        ("idleFraction", 1.5),
        ("sessionMinutes", 0),
        ("linkClickRatePerMin", -0.1),
        ("newTabProbability", 2.0),
        ("referrerTrimProbability", -0.2),
    ],
)
def test_bad_persona_fields_rejected(field, value):
    data = persona_to_dict(BUSY)
    data[field] = value
    with pytest.raises(BadPersona):
        persona_from_dict(data)


def test_persona_dict_round_trip_and_unknown_field():
    data = persona_to_dict(LINEAR)
    assert persona_from_dict(data) == LINEAR
    with pytest.raises(BadPersona):
        persona_from_dict({**data, "favoriteColor": "green"})
    incomplete = dict(data)
    del incomplete["meanTabs"]
    with pytest.raises(BadPersona):
        persona_from_dict(incomplete)


def test_load_persona_mix_uniform_and_weighted():
    single = json.dumps(persona_to_dict(BUSY))
    mix = load_persona_mix(single)
    assert mix == [(BUSY, 1.0)]

    pair = json.dumps(
        [
            {**persona_to_dict(BUSY), "weight": 0.75},
            {**persona_to_dict(LINEAR), "weight": 0.25},
        ]
    )
    loaded = load_persona_mix(pair)
    assert loaded[0] == (BUSY, 0.75)
    assert loaded[1] == (LINEAR, 0.25)


def test_load_persona_mix_bad_inputs():
    with pytest.raises(BadPersona):
        load_persona_mix("not json")
    with pytest.raises(BadPersona):
        load_persona_mix("[]")
    bad_sum = json.dumps(
        [
            {**persona_to_dict(BUSY), "weight": 0.75},
            {**persona_to_dict(LINEAR), "weight": 0.75},
        ]
    )
    with pytest.raises(BadMix):
        load_persona_mix(bad_sum)
    partial_weights = json.dumps(
        [
            {**persona_to_dict(BUSY), "weight": 1.0},
            persona_to_dict(LINEAR),
        ]
    )
    with pytest.raises(BadMix):
        load_persona_mix(partial_weights)


def test_generate_panel_rejects_bad_mix():
    with pytest.raises(BadMix):
        generate_panel([], 10, 1)
    with pytest.raises(BadMix):
        generate_panel([(BUSY, 0.5)], 10, 1)
    with pytest.raises(BadMix):
        generate_panel([(BUSY, 1.0)], -1, 1)
