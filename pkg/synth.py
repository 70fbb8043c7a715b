"""Seeded two-window post corpora with planted coordinated behaviour.

Normal users post from fixed personal profiles (language, location, client)
with hashtags, mentions and retweets drawn from shared pools. Each user's
(day, slot) cells cycle through a per-user random permutation of all cells and
the retweet share is an exact quota, so a normal user's behaviour barely moves
between windows unless ``noise_drift`` moves it. Coordinated users behave the
same way and, in addition, stamp planted item sets onto their posts at a low
background rate and a high target rate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core_model import DEFAULT_SCHEMA, USER_ATTRIBUTE
from errors import ConfigError, InvariantViolation
from ingest import DAY_NAMES, MINUTES_PER_DAY, LabeledUserSet, PreprocessConfig, RawPost, UserClass, \
    derive_attributes, to_epoch_seconds

logger = logging.getLogger(__name__)

LANGUAGES = ("en", "ru", "es", "de", "fr", "it", "pt", "uk", "ar", "ja")
TRENDING_TAGS = 5
MAX_ATTEMPTS = 5
SECONDS_PER_DAY = 86400


@dataclass(frozen=True)
class PlantedPattern:
    items: Tuple[Tuple[str, str], ...]
    participation: float
    background_rate: float
    target_rate: float

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(tuple(pair) for pair in self.items))

    @property
    def expected_growth(self) -> float:
        return self.target_rate / self.background_rate if self.background_rate else float("inf")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 7
    n_normal: int = 50
    n_coordinated: int = 50
    posts_per_user_background: float = 300
    posts_per_user_target: float = 300
    hashtag_vocab: int = 400
    client_vocab: int = 8
    language_vocab: int = 5
    location_vocab: int = 40
    mention_pool: int = 600
    planted_patterns: Tuple[PlantedPattern, ...] = ()
    noise_drift: float = 0.05
    retweet_rate: float = 0.1
    hashtag_rate: float = 0.3
    mention_rate: float = 0.2
    coordinated_language_share: float = 0.8
    slots_per_day: int = 12
    background_window: Tuple[str, str] = ("2015-01-01", "2015-05-31T23:59:59")
    target_window: Tuple[str, str] = ("2016-07-01", "2016-11-30T23:59:59")

    def __post_init__(self):
        object.__setattr__(self, "planted_patterns", tuple(self.planted_patterns))
        if self.n_normal < 0 or self.n_coordinated < 0 or self.n_normal + self.n_coordinated == 0:
            raise ConfigError("Synthetic corpus needs at least one user")
        if self.posts_per_user_background <= 0 or self.posts_per_user_target <= 0:
            raise ConfigError("Synthetic corpus needs a positive number of posts per user")
        if min(self.hashtag_vocab, self.client_vocab, self.language_vocab, self.location_vocab, self.mention_pool) < 1:
            raise ConfigError("Vocabulary sizes must be positive")
        if self.language_vocab > len(LANGUAGES):
            raise ConfigError(f"At most {len(LANGUAGES)} languages are available")
        for name in ("noise_drift", "retweet_rate", "hashtag_rate", "mention_rate", "coordinated_language_share"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.slots_per_day <= 0 or MINUTES_PER_DAY % self.slots_per_day:
            raise ConfigError(f"slots_per_day must divide {MINUTES_PER_DAY}")
        for planted in self.planted_patterns:
            self._check_planted(planted)
        for start, end in (self.background_window, self.target_window):
            if to_epoch_seconds(end) - to_epoch_seconds(start) < 8 * SECONDS_PER_DAY:
                raise ConfigError("Each window must span at least eight days")

    def _check_planted(self, planted: PlantedPattern) -> None:
        if not planted.items:
            raise ConfigError("A planted pattern needs at least one item")
        if not (0 <= planted.background_rate <= 1 and 0 <= planted.target_rate <= 1
                and 0 <= planted.participation <= 1):
            raise ConfigError(f"Planted rates and participation must lie in [0, 1]: {planted}")
        if planted.target_rate <= planted.background_rate:
            raise ConfigError(f"Planted target rate must exceed background rate: {planted}")
        for attribute, value in planted.items:
            if attribute not in DEFAULT_SCHEMA or attribute == USER_ATTRIBUTE:
                raise ConfigError(f"Cannot plant attribute '{attribute}'")
            if attribute == "time_of_day" and not (value.isdigit() and int(value) < self.slots_per_day):
                raise ConfigError(f"Planted time_of_day must be a slot index below {self.slots_per_day}")
            if attribute == "day_of_week" and value not in DAY_NAMES:
                raise ConfigError(f"Planted day_of_week must be one of {DAY_NAMES}")
            if attribute == "is_retweet" and value not in ("true", "false"):
                raise ConfigError("Planted is_retweet must be 'true' or 'false'")


@dataclass(frozen=True)
class PlantedManifest:
    items: Tuple[Tuple[str, str], ...]
    participants: Tuple[str, ...]
    background_rate: float
    target_rate: float
    expected_growth: float
    background_posts: int
    target_posts: int


@dataclass(frozen=True)
class SynthCorpus:
    background: Tuple[RawPost, ...]
    target: Tuple[RawPost, ...]
    labels: LabeledUserSet
    manifest: Tuple[PlantedManifest, ...]
    seed: int

    @property
    def posts(self) -> Tuple[RawPost, ...]:
        return self.background + self.target


def default_planted_patterns(
    count: int = 10,
    background_rate: float = 0.05,
    target_rate: float = 0.4,
    participation: float = 0.6,
) -> Tuple[PlantedPattern, ...]:
    """Campaign hashtag plus a shared mention, one pair per pattern."""
    return tuple(
        PlantedPattern(
            items=(("hashtag", f"op{k:02d}"), ("user_mentions", str(9000000 + k))),
            participation=participation,
            background_rate=background_rate,
            target_rate=target_rate,
        )
        for k in range(count)
    )


def time_signal_patterns(
    slot: int = 7,
    background_rate: float = 0.05,
    target_rate: float = 0.4,
    participation: float = 1.0,
) -> Tuple[PlantedPattern, ...]:
    """A single planted pattern living entirely in time_of_day."""
    return (PlantedPattern((("time_of_day", str(slot)),), participation, background_rate, target_rate),)


@dataclass
class _Profile:
    user_id: str
    user_class: UserClass
    language: str
    location: str
    client: str
    target_client: str
    drifting: bool


@dataclass
class _Draft:
    day: int
    slot: int
    language: str
    location: str
    client: str
    retweet_of: Optional[str] = None
    hashtags: List[str] = field(default_factory=list)
    mentions: List[str] = field(default_factory=list)


class _Window:
    """Day starts of a window grouped by weekday, for timestamp drawing."""

    def __init__(self, start: int, end: int):
        self.start, self.end = start, end
        first = -(-start // SECONDS_PER_DAY) * SECONDS_PER_DAY
        self.days: Dict[int, List[int]] = {weekday: [] for weekday in range(7)}
        day = first
        while day + SECONDS_PER_DAY - 1 <= end:
            self.days[datetime.fromtimestamp(day, tz=timezone.utc).weekday()].append(day)
            day += SECONDS_PER_DAY

    def timestamp(self, rng: np.random.Generator, weekday: int, slot: int, slot_seconds: int) -> int:
        starts = self.days[weekday]
        day = starts[int(rng.integers(len(starts)))]
        return int(day + slot * slot_seconds + int(rng.integers(slot_seconds)))


class _Generator:
    def __init__(self, config: SynthConfig, seed: int):
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.slot_seconds = MINUTES_PER_DAY // config.slots_per_day * 60
        self.cells = [(day, slot) for day in range(7) for slot in range(config.slots_per_day)]
        self.windows = [_Window(*(to_epoch_seconds(v) for v in window))
                        for window in (config.background_window, config.target_window)]
        self.next_post = 0

    def _pick(self, size: int) -> int:
        return int(self.rng.integers(size))

    def profiles(self) -> List[_Profile]:
        config = self.config
        total = config.n_normal + config.n_coordinated
        ids = [str(1000000 + int(v)) for v in self.rng.permutation(total)]
        languages = LANGUAGES[:config.language_vocab]
        profiles = []
        for index, user_id in enumerate(ids):
            coordinated = index < config.n_coordinated
            if coordinated:
                language = "ru" if self.rng.random() < config.coordinated_language_share else "en"
            else:
                language = "en" if self.rng.random() < 0.93 or len(languages) == 1 else \
                    languages[1 + self._pick(len(languages) - 1)]
            client_index = self._pick(config.client_vocab)
            drifting = not coordinated and config.client_vocab > 1 and self.rng.random() < config.noise_drift
            target_client = (client_index + 1) % config.client_vocab if drifting else client_index
            profiles.append(_Profile(
                user_id=user_id,
                user_class=UserClass.COORDINATED if coordinated else UserClass.NORMAL,
                language=language,
                location=f"loc{self._pick(config.location_vocab):03d}",
                client=f"client{client_index}",
                target_client=f"client{target_client}",
                drifting=drifting,
            ))
        return profiles

    def drafts(self, profile: _Profile, window: int) -> List[_Draft]:
        config = self.config
        mean = config.posts_per_user_background if window == 0 else config.posts_per_user_target
        count = max(1, int(round(mean * self.rng.uniform(0.9, 1.1))))
        order = self.rng.permutation(len(self.cells))
        retweets = set(int(i) for i in self.rng.choice(count, size=int(round(count * config.retweet_rate)),
                                                        replace=False))
        client = profile.target_client if window == 1 else profile.client
        drafts = []
        for i in range(count):
            day, slot = self.cells[int(order[i % len(order)])]
            draft = _Draft(day, slot, profile.language, profile.location, client)
            if i in retweets:
                draft.retweet_of = str(8000000 + self._pick(config.mention_pool))
            if self.rng.random() < config.hashtag_rate:
                trending = window == 1 and self.rng.random() < config.noise_drift
                tag = self._pick(min(TRENDING_TAGS, config.hashtag_vocab) if trending else config.hashtag_vocab)
                draft.hashtags.append(f"tag{tag:03d}")
            if self.rng.random() < config.mention_rate:
                draft.mentions.append(str(7000000 + self._pick(config.mention_pool)))
            drafts.append(draft)
        return drafts

    def plant(self, drafts: List[_Draft], planted: PlantedPattern, window: int) -> int:
        rate = planted.background_rate if window == 0 else planted.target_rate
        hits = self.rng.random(len(drafts)) < rate
        for draft, hit in zip(drafts, hits):
            if hit:
                _apply(draft, planted.items)
        return int(hits.sum())

    def post(self, profile: _Profile, draft: _Draft, window: int) -> RawPost:
        timestamp = self.windows[window].timestamp(self.rng, draft.day, draft.slot, self.slot_seconds)
        self.next_post += 1
        return RawPost(
            post_id=f"{self.next_post:09d}",
            user_id=profile.user_id,
            timestamp=timestamp,
            reported_location=draft.location,
            language=draft.language,
            client_name=draft.client,
            is_retweet=draft.retweet_of is not None,
            retweeted_user_id=draft.retweet_of,
            hashtags=tuple(draft.hashtags),
            user_mentions=tuple(draft.mentions),
        )


def _apply(draft: _Draft, items: Sequence[Tuple[str, str]]) -> None:
    for attribute, value in items:
        if attribute == "hashtag":
            draft.hashtags.append(value)
        elif attribute == "user_mentions":
            draft.mentions.append(value)
        elif attribute == "time_of_day":
            draft.slot = int(value)
        elif attribute == "day_of_week":
            draft.day = DAY_NAMES.index(value)
        elif attribute == "tweet_language":
            draft.language = value
        elif attribute == "tweet_client_name":
            draft.client = value
        elif attribute == "user_reported_location":
            draft.location = value
        elif attribute == "is_retweet":
            if value == "false":
                draft.retweet_of = None
            elif draft.retweet_of is None:
                draft.retweet_of = "8999999"
        elif attribute == "retweet_userid":
            draft.retweet_of = value


def _generate_once(config: SynthConfig, seed: int) -> SynthCorpus:
    generator = _Generator(config, seed)
    profiles = generator.profiles()
    coordinated = sorted(p.user_id for p in profiles if p.user_class is UserClass.COORDINATED)
    participants = []
    for planted in config.planted_patterns:
        size = int(round(planted.participation * len(coordinated)))
        chosen = generator.rng.choice(len(coordinated), size=size, replace=False) if size else []
        participants.append(frozenset(coordinated[int(i)] for i in chosen))

    windows: List[List[RawPost]] = [[], []]
    planted_posts = [[0, 0] for _ in config.planted_patterns]
    for window in (0, 1):
        for profile in profiles:
            drafts = generator.drafts(profile, window)
            for k, planted in enumerate(config.planted_patterns):
                if profile.user_id in participants[k]:
                    planted_posts[k][window] += generator.plant(drafts, planted, window)
            windows[window].extend(generator.post(profile, draft, window) for draft in drafts)

    manifest = tuple(
        PlantedManifest(
            items=planted.items,
            participants=tuple(sorted(members)),
            background_rate=planted.background_rate,
            target_rate=planted.target_rate,
            expected_growth=planted.expected_growth,
            background_posts=counts[0],
            target_posts=counts[1],
        )
        for planted, members, counts in zip(config.planted_patterns, participants, planted_posts)
    )
    labels = LabeledUserSet({p.user_id: p.user_class for p in profiles})
    return SynthCorpus(tuple(windows[0]), tuple(windows[1]), labels, manifest, seed)


def planted_supports(corpus: SynthCorpus, slots_per_day: int = 12) -> List[Tuple[float, float]]:
    """Per planted pattern, its (background, target) support among coordinated-authored posts."""
    config = PreprocessConfig(slots_per_day=slots_per_day)
    coordinated = corpus.labels.coordinated
    windows = []
    for posts in (corpus.background, corpus.target):
        authored = [frozenset(derive_attributes(p, config)) for p in posts if p.user_id in coordinated]
        windows.append(authored)
    supports = []
    for entry in corpus.manifest:
        wanted = frozenset(entry.items)
        pair = []
        for authored in windows:
            pair.append(sum(1 for items in authored if wanted <= items) / len(authored) if authored else 0.0)
        supports.append((pair[0], pair[1]))
    return supports


def generate(config: SynthConfig) -> SynthCorpus:
    """Generate a corpus; a seed whose planted supports fail to grow is replaced by the next one."""
    for attempt in range(MAX_ATTEMPTS):
        seed = config.seed + attempt
        corpus = _generate_once(config, seed)
        supports = planted_supports(corpus, config.slots_per_day)
        grown = all(t > b for (b, t), entry in zip(supports, corpus.manifest) if entry.participants)
        if grown:
            logger.info(
                "Generated %d background and %d target posts for %d users (seed %d)",
                len(corpus.background), len(corpus.target), len(corpus.labels), seed,
            )
            return corpus
        logger.warning("Planted patterns did not grow with seed %d; regenerating", seed)
    raise InvariantViolation(f"No seed in {config.seed}..{config.seed + MAX_ATTEMPTS - 1} grew every planted pattern")
