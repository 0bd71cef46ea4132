import itertools
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from brakesafe.patterns import (
    ConsecutivePattern,
    CountPattern,
    ErrorSequence,
    MagnitudePattern,
    PatternError,
    cardinality,
    contains,
    is_subset,
    parse_pattern,
    sample,
)


def all_sequences(n):
    for size in range(n + 1):
        for steps in itertools.combinations(range(n), size):
            yield ErrorSequence(steps, n)


def test_sequence_rejects_steps_beyond_horizon():
    with pytest.raises(PatternError):
        ErrorSequence([150], 150)
    with pytest.raises(PatternError):
        ErrorSequence([-1], 150)


def test_sequence_parse_and_runs():
    rho = ErrorSequence.parse("{26..45,66..87}@150")
    assert len(rho) == 42
    assert rho.runs() == [(26, 45), (66, 87)]
    assert str(rho) == "{26..45,66..87}@150"
    assert 26 in rho and 46 not in rho


def test_sequence_intervals():
    rho = ErrorSequence.parse("{26..45}@150")
    (a, b), = rho.intervals(0.1)
    assert a == pytest.approx(2.6) and b == pytest.approx(4.6)


def test_empty_sequence_literal():
    rho = parse_pattern("{}@8")
    assert len(rho) == 0 and rho.n_max == 8


def test_count_contains_fig3b_sequence():
    rho = ErrorSequence.from_runs([(26, 45), (66, 87)], 150)
    assert contains(CountPattern(19, 150, 150), rho)


def test_count_contains_empty():
    assert contains(CountPattern(0, 150, 150), ErrorSequence((), 150))


def test_anchored_consecutive_must_start_at_zero():
    p = ConsecutivePattern(5, 5, 150, anchored_at_start=True)
    assert not contains(p, ErrorSequence(range(1, 6), 150))
    assert contains(p, ErrorSequence(range(0, 5), 150))


def test_consecutive_rejects_two_runs():
    p = ConsecutivePattern(1, 10, 20)
    assert not contains(p, ErrorSequence([1, 2, 5], 20))
    assert contains(p, ErrorSequence([4, 5, 6], 20))


def test_contains_horizon_mismatch():
    with pytest.raises(PatternError):
        contains(CountPattern(0, 5, 10), ErrorSequence((), 8))


@pytest.mark.parametrize("p, expected", [
    (CountPattern(0, 7, 7), 2 ** 7),
    (CountPattern(1, 1, 3), 3),
    (CountPattern(2, 3, 4), 10),
])
def test_cardinality(p, expected):
    assert cardinality(p) == expected


def test_cardinality_is_exact_for_large_horizon():
    assert cardinality(CountPattern(0, 150, 150)) == 2 ** 150


@pytest.mark.parametrize("p1, p2, expected", [
    (CountPattern(2, 5, 10), CountPattern(1, 6, 10), True),
    (CountPattern(1, 6, 10), CountPattern(2, 5, 10), False),
    (CountPattern(3, 3, 10), CountPattern(3, 3, 10), True),
])
def test_is_subset(p1, p2, expected):
    assert is_subset(p1, p2) is expected


def test_is_subset_horizon_mismatch():
    with pytest.raises(PatternError):
        is_subset(CountPattern(0, 1, 5), CountPattern(0, 1, 6))


def test_invalid_count_pattern():
    with pytest.raises(PatternError):
        CountPattern(5, 4, 10)
    with pytest.raises(PatternError):
        CountPattern(0, 11, 10)


def test_sample_deterministic():
    p = CountPattern(19, 150, 150)
    assert sample(p, 42, 20) == sample(p, 42, 20)
    assert sample(p, 42, 20) != sample(p, 43, 20)


def test_sample_forced():
    assert sample(CountPattern(3, 3, 3), 0, 5) == [ErrorSequence([0, 1, 2], 3)] * 5


def test_magnitude_pattern():
    p = MagnitudePattern(0.14, 15.0)
    assert p.contains(0.14) and p.contains([0.0, 0.1])
    assert not p.contains([0.1, 0.15])
    with pytest.raises(PatternError):
        MagnitudePattern(0.0, 15.0)


@pytest.mark.parametrize("text", [
    "count(19,150,150)", "consec(5,5,150,anchored)", "consec(1,3,8)", "{26..45,66..87}@150", "{3}@8",
])
def test_parse_roundtrip(text):
    assert str(parse_pattern(text)) == text


@pytest.mark.parametrize("text", ["count(1,2)", "cnt(1,2,3)", "{1..}@5", "{1,2}", "count(a,b,c)",
                                  "consec(1,2,3,maybe)"])
def test_parse_errors(text):
    with pytest.raises(PatternError):
        parse_pattern(text)


# -- properties ---------------------------------------------------------

count_patterns = st.integers(0, 10).flatmap(
    lambda n: st.integers(0, n).flatmap(
        lambda a: st.integers(a, n).map(lambda b: CountPattern(a, b, n))))


@given(count_patterns)
def test_enumeration_matches_cardinality(p):
    members = sum(contains(p, rho) for rho in all_sequences(p.n_max))
    assert members == cardinality(p)


@given(count_patterns, st.data())
def test_is_subset_matches_enumeration(p1, data):
    n = p1.n_max
    a = data.draw(st.integers(0, n))
    p2 = CountPattern(a, data.draw(st.integers(a, n)), n)
    by_members = all(contains(p2, rho) for rho in all_sequences(n) if contains(p1, rho))
    assert is_subset(p1, p2) == by_members


@given(count_patterns, st.booleans())
def test_consecutive_members_within_count(p, anchored):
    c = ConsecutivePattern(p.k_min, p.k_max, p.n_max, anchored)
    for rho in all_sequences(p.n_max):
        if contains(c, rho):
            assert contains(p, rho)


@given(st.integers(1, 150).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(0, n))).flatmap(
    lambda t: st.tuples(st.just(t[0]), st.just(t[1]), st.integers(t[1], t[0]))),
    st.integers(0, 2 ** 32), st.booleans())
def test_samples_are_members(nab, seed, consecutive):
    n, a, b = nab
    p = ConsecutivePattern(a, b, n) if consecutive else CountPattern(a, b, n)
    for rho in sample(p, seed, 5):
        assert contains(p, rho)


@given(st.sets(st.integers(0, 149), max_size=60))
def test_sequence_text_roundtrip(steps):
    rho = ErrorSequence(steps, 150)
    assert ErrorSequence.parse(str(rho)) == rho
    assert sum(b - a + 1 for a, b in rho.runs()) == len(rho)
