"""Tests for the synthetic corpus generator and end-to-end runs on generated corpora."""
from collections import Counter

import pytest

import dataset_io
from analysis import (
    DEFAULT_RHO_GRID,
    DEFAULT_SIGMA_GRID,
    AblationMode,
    ablate,
    baseline_frequency_sweep,
    evaluate,
    purity_report,
    sweep,
)
from core_model import decode_pattern
from detect import behaviour, suspicious_users
from errors import ConfigError
from ingest import PreprocessConfig, build_datasets, to_epoch_seconds
from miner import MiningParams, mine_closed_contrast
from synth import PlantedPattern, SynthConfig, default_planted_patterns, generate, planted_supports, \
    time_signal_patterns


def test_same_config_same_corpus(small_synth_config):
    assert generate(small_synth_config) == generate(small_synth_config)


def test_corpus_shape(small_synth_config):
    corpus = generate(small_synth_config)
    assert len(corpus.labels.coordinated) == 6 and len(corpus.labels.normal) == 6
    for posts, window, mean in (
        (corpus.background, small_synth_config.background_window, small_synth_config.posts_per_user_background),
        (corpus.target, small_synth_config.target_window, small_synth_config.posts_per_user_target),
    ):
        start, end = (to_epoch_seconds(v) for v in window)
        assert all(start <= p.timestamp <= end for p in posts)
        per_user = Counter(p.user_id for p in posts)
        assert set(per_user) == corpus.labels.users
        assert abs(len(posts) / len(per_user) - mean) <= 0.2 * mean
    assert len({p.post_id for p in corpus.posts}) == len(corpus.posts)


def test_manifest_matches_config(small_synth_config):
    corpus = generate(small_synth_config)
    assert len(corpus.manifest) == 2
    for entry, planted in zip(corpus.manifest, small_synth_config.planted_patterns):
        assert entry.items == planted.items
        assert set(entry.participants) <= corpus.labels.coordinated
        assert len(entry.participants) == round(planted.participation * 6)
        assert entry.expected_growth == pytest.approx(6.0)
        assert entry.target_posts > entry.background_posts
    for background, target in planted_supports(corpus):
        assert target > background


def test_planted_items_land_in_coordinated_posts(small_synth_config):
    corpus = generate(small_synth_config)
    planted_tags = {value for entry in corpus.manifest for attribute, value in entry.items if attribute == "hashtag"}
    carriers = {p.user_id for p in corpus.posts if planted_tags & set(p.hashtags)}
    assert carriers and carriers <= corpus.labels.coordinated


def test_time_signal_moves_posts_into_slot():
    config = SynthConfig(seed=3, n_normal=4, n_coordinated=4, posts_per_user_background=60, posts_per_user_target=60,
                         planted_patterns=time_signal_patterns(slot=7))
    corpus = generate(config)
    (background, target), = planted_supports(corpus)
    assert background < 0.25
    assert target > 2 * background


@pytest.mark.parametrize("overrides", [
    {"n_normal": 0, "n_coordinated": 0},
    {"posts_per_user_background": 0},
    {"planted_patterns": (PlantedPattern((("hashtag", "x"),), 0.5, 0.4, 0.1),)},
    {"planted_patterns": (PlantedPattern((("userid", "1"),), 0.5, 0.1, 0.4),)},
    {"planted_patterns": (PlantedPattern((("time_of_day", "12"),), 0.5, 0.1, 0.4),)},
    {"background_window": ("2015-01-01", "2015-01-03")},
    {"slots_per_day": 7},
])
def test_config_errors(overrides):
    with pytest.raises(ConfigError):
        SynthConfig(**overrides)


@pytest.fixture(scope="module")
def recovery():
    """Ten planted behaviours, 50 normal and 50 coordinated users, mined once at sigma=10."""
    corpus = generate(SynthConfig(seed=7, planted_patterns=default_planted_patterns(10, 0.05, 0.4, 0.6)))
    background, target, dictionary = build_datasets(corpus.background, corpus.target, PreprocessConfig())
    return corpus, background, target, dictionary


@pytest.mark.slow
def test_pattern_counts_fall_to_zero_across_the_grid(recovery):
    corpus, background, target, dictionary = recovery
    sigmas, rhos = (10, 20, 50, 100, 1000), ("1.5", 2, 3, 5, 1000)
    result = sweep(background, target, corpus.labels, dictionary, sigmas, rhos)
    result.check_monotone()
    for rho in rhos:
        counts = [result.cell(s, rho).pattern_count for s in sigmas]
        assert counts == sorted(counts, reverse=True)
    for sigma in sigmas:
        counts = [result.cell(sigma, r).pattern_count for r in rhos]
        assert counts == sorted(counts, reverse=True)
    for cell in result.cells:
        if cell.sigma == 1000 or cell.rho == 1000:
            assert cell.pattern_count == 0
            assert cell.metrics.precision == 0 and cell.metrics.recall == 0


@pytest.mark.slow
def test_planted_users_are_recovered(recovery):
    corpus, background, target, dictionary = recovery
    params = MiningParams(sigma=10, rho="1.5")
    report = suspicious_users(mine_closed_contrast(background, target, params), dictionary, params)
    f1 = evaluate(report.suspicious_users, corpus.labels).f1
    assert f1 >= 0.9
    baseline = baseline_frequency_sweep(background, target, corpus.labels, dictionary, DEFAULT_SIGMA_GRID, DEFAULT_RHO_GRID)
    assert baseline.best.metrics.f1 < f1


@pytest.mark.slow
def test_planted_behaviour_is_pure(recovery):
    corpus, background, target, dictionary = recovery
    params = MiningParams(sigma=10, rho="1.5")
    report = suspicious_users(mine_closed_contrast(background, target, params), dictionary, params)
    planted = {pair for entry in corpus.manifest for pair in entry.items}
    users_of = {}
    for user, patterns in report.supporting_patterns.items():
        for found in patterns:
            users_of.setdefault(behaviour(found, dictionary), set()).add(user)
    records = purity_report(report, target, corpus.labels.coordinated, dictionary)
    assert records
    for record in records:
        items = set(decode_pattern(record.behaviour, dictionary))
        if items & planted:
            assert record.purity >= 0.9
        elif users_of[record.behaviour] <= corpus.labels.normal:
            assert record.purity <= 0.1


@pytest.mark.slow
def test_additive_ablation_finds_time_signal(tmp_path):
    corpus = generate(SynthConfig(seed=5, n_normal=20, n_coordinated=20, planted_patterns=time_signal_patterns(slot=7)))
    config = PreprocessConfig(enabled_attributes={"userid", "tweet_language", "day_of_week", "time_of_day", "is_retweet"})
    written = []
    for run in range(2):
        traces = {}
        for mode in AblationMode:
            traces[mode] = ablate(corpus.background, corpus.target, corpus.labels, mode, (10,), ("1.5",), config)
            path = tmp_path / f"{mode.value}_{run}.csv"
            dataset_io.write_table(path, dataset_io.ablation_rows(traces[mode]), dataset_io.ABLATION_COLUMNS)
            written.append(path)
        assert traces[AblationMode.ADDITIVE].steps[0].attribute == "time_of_day"
        assert all(len(trace.steps) == 4 for trace in traces.values())
    assert written[0].read_bytes() == written[2].read_bytes()
    assert written[1].read_bytes() == written[3].read_bytes()


if __name__ == "__main__":
    pytest.main([__file__])
