"""Tests for attribute filtering and suspicious-user extraction."""
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from conftest import WorkedExample
from core_model import ContrastPattern, PatternStats
from detect import AttributeFilter, behaviour, filter_patterns, suspicious_users, user_patterns
from miner import MiningParams, ThresholdSide, mine_closed_contrast

ATTRIBUTES = ("userid", "is_retweet", "retweet_userid")


@pytest.fixture
def mined(worked_example):
    params = MiningParams(sigma=2, rho=Fraction(3, 2), threshold_side=ThresholdSide.TARGET)
    return mine_closed_contrast(worked_example.background, worked_example.target, params)


def test_worked_example_flags_u1(worked_example, mined):
    report = suspicious_users(mined, worked_example.dictionary)
    assert report.suspicious_users == {"u1"}
    assert [p.items for p in report.supporting_patterns["u1"]] == [worked_example.ring]
    assert report.pattern_count == 3
    assert report.user_pattern_count == 1
    assert report.max_growth("u1") == 3


def test_user_only_patterns_are_dropped(worked_example, mined):
    kept = user_patterns(mined, worked_example.dictionary)
    assert worked_example.ids(("userid", "u1")) not in [p.items for p in kept]


def test_behaviour_strips_user_items(worked_example):
    pattern = ContrastPattern(worked_example.ring, PatternStats(1, 3, 5, 5))
    assert behaviour(pattern, worked_example.dictionary) == worked_example.ids(("is_retweet", "yes"), ("retweet_userid", "u2"))


def test_filter_by_several_attributes(worked_example, mined):
    both = filter_patterns(mined, AttributeFilter({"userid", "retweet_userid"}), worked_example.dictionary)
    assert [p.items for p in both] == [worked_example.ring]
    assert filter_patterns(mined, AttributeFilter(frozenset()), worked_example.dictionary) == set(mined)


def test_empty_input_gives_empty_report(worked_example):
    report = suspicious_users([], worked_example.dictionary)
    assert report.suspicious_users == frozenset()
    assert report.supporting_patterns == {}


@given(st.sets(st.sampled_from(ATTRIBUTES)), st.sets(st.sampled_from(ATTRIBUTES)))
def test_filter_is_idempotent_and_monotone(required, extra):
    table = WorkedExample()
    patterns = mine_closed_contrast(table.background, table.target, MiningParams(sigma=1, rho=Fraction(11, 10)))
    narrow = filter_patterns(patterns, AttributeFilter(required | extra), table.dictionary)
    wide = filter_patterns(patterns, AttributeFilter(required), table.dictionary)
    assert narrow <= wide
    assert filter_patterns(wide, AttributeFilter(required), table.dictionary) == wide


if __name__ == "__main__":
    pytest.main([__file__])
