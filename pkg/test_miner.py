"""Tests for the closed contrast miner against the worked example and the brute-force oracle."""
import time
from fractions import Fraction

import numpy as np
import psutil
import pytest
from hypothesis import given, settings, strategies as st

from core_model import ContrastPattern, PatternStats, Transaction, TransactionDataset, Window, is_closed
from errors import ConfigError, EmptyInputError, OracleLimitError
from miner import (
    ClosedIndex,
    MiningParams,
    ThresholdSide,
    build_tree,
    iter_contrast,
    mine_closed_contrast,
    oracle_mine,
)

RHO_CHOICES = (Fraction(11, 10), Fraction(3, 2), Fraction(2), Fraction(3))


def by_items(patterns):
    return {p.items: p.stats for p in patterns}


def random_windows(rng: np.random.Generator, max_items: int = 12, max_rows: int = 30):
    n_items = int(rng.integers(1, max_items + 1))
    windows = []
    for label in (Window.BACKGROUND, Window.TARGET):
        rows = []
        for i in range(int(rng.integers(1, max_rows + 1))):
            size = int(rng.integers(1, min(5, n_items) + 1))
            items = rng.choice(n_items, size=size, replace=False)
            rows.append(Transaction(f"{label.value[0]}{i}", tuple(sorted(int(x) for x in items))))
        windows.append(TransactionDataset(label, tuple(rows)))
    return windows[0], windows[1]


def test_worked_example_target_side(worked_example):
    params = MiningParams(sigma=2, rho=Fraction(3, 2), threshold_side=ThresholdSide.TARGET)
    found = by_items(mine_closed_contrast(worked_example.background, worked_example.target, params))
    stats = found[worked_example.ring]
    assert (stats.sc_b, stats.sc_t) == (1, 3)
    assert (stats.supp_b, stats.supp_t) == (Fraction(1, 5), Fraction(3, 5))
    assert stats.growth == 3 and stats.delta == Fraction(2, 5)
    assert is_closed(worked_example.ring, worked_example.background, worked_example.target)
    assert set(found) == {
        worked_example.ring,
        worked_example.ids(("userid", "u1")),
        worked_example.ids(("is_retweet", "yes")),
    }


def test_worked_example_background_side(worked_example):
    params = MiningParams(sigma=1, rho=Fraction(3, 2))
    found = by_items(mine_closed_contrast(worked_example.background, worked_example.target, params))
    assert worked_example.ring in found
    assert found[worked_example.ids(("userid", "u1"))].growth == Fraction(3, 2)
    # Subsumed by ring with the same union count.
    assert worked_example.ids(("is_retweet", "yes"), ("retweet_userid", "u2")) not in found
    # Absent from the background, so it cannot reach sigma there.
    assert worked_example.ids(("userid", "u4"), ("is_retweet", "no")) not in found


def test_min_pattern_length(worked_example):
    params = MiningParams(sigma=2, rho=Fraction(3, 2), threshold_side="target", min_pattern_len=2)
    found = mine_closed_contrast(worked_example.background, worked_example.target, params)
    assert [p.items for p in found] == [worked_example.ring]


def test_support_delta_admits_slow_growth(worked_example):
    params = MiningParams(sigma=1, rho=10, sigma_delta=Fraction(1, 5))
    mined = mine_closed_contrast(worked_example.background, worked_example.target, params)
    assert worked_example.ring in by_items(mined)
    assert mined == oracle_mine(worked_example.background, worked_example.target, params)


def test_huge_sigma_gives_empty_result(worked_example):
    assert mine_closed_contrast(worked_example.background, worked_example.target, MiningParams(sigma=10**6)) == set()


def test_empty_window_is_rejected(worked_example):
    empty = TransactionDataset(Window.TARGET, ())
    with pytest.raises(EmptyInputError):
        mine_closed_contrast(worked_example.background, empty, MiningParams())
    with pytest.raises(EmptyInputError):
        oracle_mine(worked_example.background, empty, MiningParams())


def test_oracle_item_limit():
    rows = tuple(Transaction(str(i), (i,)) for i in range(25))
    with pytest.raises(OracleLimitError):
        oracle_mine(TransactionDataset(Window.BACKGROUND, rows), TransactionDataset(Window.TARGET, rows), MiningParams(sigma=1))


def test_mining_params_validation():
    assert MiningParams(rho=1.1).rho == Fraction(11, 10)
    for bad in ({"rho": 1}, {"sigma": 0}, {"sigma": 2.5}, {"sigma_delta": 0}, {"min_pattern_len": 0}):
        with pytest.raises(ConfigError):
            MiningParams(**bad)
    with pytest.raises(ValueError):
        MiningParams(threshold_side="both")


def test_build_tree_keeps_items_reaching_sigma(worked_example):
    tree = build_tree(worked_example.background, worked_example.target, MiningParams(sigma=1))
    u4 = worked_example.ids(("userid", "u4"))[0]
    assert u4 not in tree.header
    assert len(tree.header) == len(worked_example.dictionary) - 1
    root_b = sum(child.count_b for child in tree.root.children.values())
    root_t = sum(child.count_t for child in tree.root.children.values())
    assert (root_b, root_t) == (5, 5)


def test_closed_index_superset_lookup():
    index = ClosedIndex()
    index.add({1, 2, 3}, 4)
    assert index.has_superset({1, 3}, 4)
    assert not index.has_superset({1, 3}, 5)
    assert not index.has_superset({1, 4}, 4)
    assert len(index) == 1


@pytest.mark.parametrize("seed", range(200))
def test_miner_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    background, target = random_windows(rng)
    params = MiningParams(
        sigma=int(rng.integers(1, 6)),
        rho=RHO_CHOICES[int(rng.integers(len(RHO_CHOICES)))],
        threshold_side=ThresholdSide.BACKGROUND if seed % 2 else ThresholdSide.TARGET,
    )
    assert mine_closed_contrast(background, target, params) == oracle_mine(background, target, params)


@pytest.mark.parametrize("seed", range(20))
def test_every_mined_pattern_is_closed(seed):
    background, target = random_windows(np.random.default_rng(1000 + seed))
    for pattern in mine_closed_contrast(background, target, MiningParams(sigma=1, rho=Fraction(11, 10))):
        assert is_closed(pattern.items, background, target)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(0, 3), st.integers(0, 3), st.sampled_from(list(ThresholdSide)))
def test_refiltering_equals_mining_at_tighter_thresholds(seed, sigma, extra_sigma, rho_step, side):
    background, target = random_windows(np.random.default_rng(seed), max_items=8, max_rows=20)
    loose = MiningParams(sigma=sigma, rho=RHO_CHOICES[0], threshold_side=side)
    tight = MiningParams(sigma=sigma + extra_sigma, rho=RHO_CHOICES[rho_step], threshold_side=side)
    mined = mine_closed_contrast(background, target, loose)
    assert set(iter_contrast(mined, tight)) == mine_closed_contrast(background, target, tight)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.randoms(use_true_random=False))
def test_result_ignores_transaction_order(seed, rng):
    background, target = random_windows(np.random.default_rng(seed), max_items=8, max_rows=20)
    params = MiningParams(sigma=1, rho=Fraction(3, 2))
    rows = list(target.transactions)
    rng.shuffle(rows)
    shuffled = TransactionDataset(Window.TARGET, tuple(rows))
    assert mine_closed_contrast(background, target, params) == mine_closed_contrast(background, shuffled, params)


def zipf_windows(seed: int = 3, rows: int = 100_000, users: int = 2_000, tags: int = 20_000):
    """Post-like transactions: user, language, day, slot, retweet flag and a Zipf hashtag tail."""
    rng = np.random.default_rng(seed)
    offsets = np.cumsum([0, users, 5, 7, 12, 2])
    windows = []
    for label in (Window.BACKGROUND, Window.TARGET):
        columns = np.column_stack([
            rng.integers(0, users, rows),
            offsets[1] + rng.integers(0, 5, rows),
            offsets[2] + rng.integers(0, 7, rows),
            offsets[3] + rng.integers(0, 12, rows),
            offsets[4] + (rng.random(rows) < 0.2),
        ])
        tag_counts = rng.integers(0, 4, rows)
        tag_ids = offsets[5] + (rng.zipf(1.3, int(tag_counts.sum())) - 1) % tags
        if label is Window.TARGET:
            tag_ids = offsets[5] + (tag_ids - offsets[5] + 7) % tags
        split = np.split(tag_ids, np.cumsum(tag_counts)[:-1])
        transactions = tuple(
            Transaction(f"{label.value[0]}{i}", tuple(sorted({int(x) for x in base} | {int(x) for x in extra})))
            for i, (base, extra) in enumerate(zip(columns, split))
        )
        windows.append(TransactionDataset(label, transactions))
    return windows[0], windows[1]


@pytest.mark.slow
def test_mining_a_hundred_thousand_posts_per_window_stays_within_budget():
    background, target = zipf_windows()
    process = psutil.Process()
    started = time.perf_counter()
    found = mine_closed_contrast(background, target, MiningParams(sigma=10, rho=Fraction(3, 2)))
    elapsed = time.perf_counter() - started
    rss_mb = process.memory_info().rss / (1024 * 1024)
    assert found
    assert elapsed < 120
    assert rss_mb < 2048


def test_patterns_compare_by_items_and_counts():
    a = ContrastPattern((1, 2), PatternStats(1, 3, 5, 5))
    assert a == ContrastPattern((1, 2), PatternStats(1, 3, 5, 5))
    assert a != ContrastPattern((1, 2), PatternStats(1, 3, 5, 6))


if __name__ == "__main__":
    pytest.main([__file__])
