"""Shared fixtures: the two-window worked example and small synthetic corpora."""
from typing import Iterable, Sequence, Tuple

import pytest

from core_model import ItemDictionary, TransactionDataset, Window, encode_transaction
from synth import SynthConfig, default_planted_patterns

EXAMPLE_SCHEMA = ("userid", "is_retweet", "retweet_userid")

# Rows are (userid, is_retweet, retweet_userid or None).
EXAMPLE_BACKGROUND = (
    ("u2", "no", None),
    ("u1", "yes", "u2"),
    ("u1", "no", None),
    ("u2", "yes", "u3"),
    ("u2", "no", None),
)
EXAMPLE_TARGET = (
    ("u1", "yes", "u2"),
    ("u1", "yes", "u2"),
    ("u2", "no", None),
    ("u1", "yes", "u2"),
    ("u4", "no", None),
)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end runs on synthetic corpora")


def encode_windows(
    background_rows: Iterable[Sequence[Tuple[str, str]]],
    target_rows: Iterable[Sequence[Tuple[str, str]]],
    schema: Sequence[str],
) -> Tuple[TransactionDataset, TransactionDataset, ItemDictionary]:
    """Encode rows of (attribute, value) pairs, background first, into two windows."""
    dictionary = ItemDictionary(schema)
    windows = []
    for label, rows in ((Window.BACKGROUND, background_rows), (Window.TARGET, target_rows)):
        transactions = tuple(
            encode_transaction(row, dictionary, tid=f"{label.value[0]}{i}") for i, row in enumerate(rows, start=1)
        )
        windows.append(TransactionDataset(label, transactions))
    dictionary.freeze()
    return windows[0], windows[1], dictionary


def example_rows(rows):
    for user, retweet, author in rows:
        row = [("userid", user), ("is_retweet", retweet)]
        if author is not None:
            row.append(("retweet_userid", author))
        yield row


class WorkedExample:
    def __init__(self):
        self.background, self.target, self.dictionary = encode_windows(
            example_rows(EXAMPLE_BACKGROUND), example_rows(EXAMPLE_TARGET), EXAMPLE_SCHEMA
        )

    def ids(self, *pairs: Tuple[str, str]) -> Tuple[int, ...]:
        return tuple(sorted(self.dictionary.lookup(attribute, value) for attribute, value in pairs))

    @property
    def ring(self) -> Tuple[int, ...]:
        return self.ids(("userid", "u1"), ("is_retweet", "yes"), ("retweet_userid", "u2"))


@pytest.fixture
def worked_example() -> WorkedExample:
    return WorkedExample()


@pytest.fixture(scope="session")
def small_synth_config() -> SynthConfig:
    return SynthConfig(
        seed=11,
        n_normal=6,
        n_coordinated=6,
        posts_per_user_background=80,
        posts_per_user_target=80,
        planted_patterns=default_planted_patterns(count=2, background_rate=0.1, target_rate=0.6),
    )
