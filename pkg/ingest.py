"""Post parsing, window partitioning and transaction conversion.

Raw post records are parsed into ``RawPost`` values, cut into the background
window [t0, t1] and the target window [t2, t3], reduced to the users active in
both, and flattened into (attribute, value) items that ``build_datasets``
encodes into two ``TransactionDataset`` objects sharing one dictionary.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import pandas as pd

from core_model import (
    DEFAULT_SCHEMA,
    USER_ATTRIBUTE,
    ItemDictionary,
    TransactionDataset,
    Window,
    encode_transaction,
)
from errors import (
    BadMappingError,
    ConfigError,
    EmptyWindowError,
    InputReadError,
    NoCommonUsersError,
    UnknownAttributeError,
    UnknownUserError,
)

logger = logging.getLogger(__name__)

MINUTES_PER_DAY = 24 * 60
DAY_NAMES = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday")

# Gap between the windows below which a warning is logged.
SMALL_GAP_SECONDS = 30 * 24 * 3600

POST_FIELDS = (
    "post_id",
    "user_id",
    "timestamp",
    "reported_location",
    "language",
    "client_name",
    "is_retweet",
    "retweeted_user_id",
    "hashtags",
    "user_mentions",
)
MANDATORY_FIELDS = ("post_id", "user_id", "timestamp")

TRUE_WORDS = frozenset({"true", "t", "yes", "y", "1"})
FALSE_WORDS = frozenset({"false", "f", "no", "n", "0", ""})


@dataclass(frozen=True)
class RawPost:
    post_id: str
    user_id: str
    timestamp: int
    reported_location: Optional[str] = None
    language: Optional[str] = None
    client_name: Optional[str] = None
    is_retweet: bool = False
    retweeted_user_id: Optional[str] = None
    hashtags: Tuple[str, ...] = ()
    user_mentions: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.post_id:
            raise ValueError("post_id must be non-empty")
        if not self.user_id:
            raise ValueError(f"Post {self.post_id}: user_id must be non-empty")
        if self.timestamp <= 0:
            raise ValueError(f"Post {self.post_id}: timestamp must be positive, got {self.timestamp}")
        if self.is_retweet != (self.retweeted_user_id is not None):
            raise ValueError(f"Post {self.post_id}: retweeted_user_id must be set exactly for retweets")


@dataclass(frozen=True)
class PartitionSpec:
    t0: int
    t1: int
    t2: int
    t3: int

    def __post_init__(self):
        if not (self.t0 < self.t1 < self.t2 < self.t3):
            raise ConfigError(f"Windows must satisfy t0 < t1 < t2 < t3, got {self.t0}, {self.t1}, {self.t2}, {self.t3}")
        if self.t2 - self.t1 < SMALL_GAP_SECONDS:
            logger.warning(
                "Background and target windows are only %.1f days apart; patterns may leak between them",
                (self.t2 - self.t1) / 86400,
            )

    @classmethod
    def from_values(cls, t0, t1, t2, t3) -> "PartitionSpec":
        """Build a spec from epoch seconds or ISO-8601 strings."""
        try:
            bounds = [to_epoch_seconds(value) for value in (t0, t1, t2, t3)]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"Bad partition bound: {exc}") from exc
        return cls(*bounds)


# Hashtag normalizer hook. A corpus-driven segmenter can be registered under
# its own name and selected through PreprocessConfig.hashtag_normalizer.
_NORMALIZERS: Dict[str, Callable[[str], str]] = {
    "lowercase": lambda tag: tag.strip().lower(),
    "identity": lambda tag: tag.strip(),
    "strip_hash": lambda tag: tag.strip().lstrip("#").lower(),
}


def register_normalizer(name: str, normalizer: Callable[[str], str]) -> None:
    _NORMALIZERS[name] = normalizer


def get_normalizer(name: str) -> Callable[[str], str]:
    try:
        return _NORMALIZERS[name]
    except KeyError:
        raise ConfigError(f"Unknown hashtag normalizer '{name}'; known: {sorted(_NORMALIZERS)}") from None


@dataclass(frozen=True)
class PreprocessConfig:
    slots_per_day: int = 12
    timezone_offset_minutes: int = 0
    hashtag_normalizer: str = "lowercase"
    enabled_attributes: frozenset = frozenset(DEFAULT_SCHEMA)
    schema: Tuple[str, ...] = DEFAULT_SCHEMA

    def __post_init__(self):
        object.__setattr__(self, "enabled_attributes", frozenset(self.enabled_attributes))
        object.__setattr__(self, "schema", tuple(self.schema))
        for name in ("slots_per_day", "timezone_offset_minutes"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        if self.slots_per_day <= 0 or MINUTES_PER_DAY % self.slots_per_day:
            raise ConfigError(f"slots_per_day must divide {MINUTES_PER_DAY} minutes, got {self.slots_per_day}")
        unknown = self.enabled_attributes - set(self.schema)
        if unknown:
            raise UnknownAttributeError(f"Enabled attributes not in schema: {sorted(unknown)}")
        if USER_ATTRIBUTE not in self.enabled_attributes:
            raise ConfigError(f"enabled_attributes must contain '{USER_ATTRIBUTE}'")
        get_normalizer(self.hashtag_normalizer)

    @property
    def slot_minutes(self) -> int:
        return MINUTES_PER_DAY // self.slots_per_day

    def with_attributes(self, attributes: Iterable[str]) -> "PreprocessConfig":
        return PreprocessConfig(
            slots_per_day=self.slots_per_day,
            timezone_offset_minutes=self.timezone_offset_minutes,
            hashtag_normalizer=self.hashtag_normalizer,
            enabled_attributes=frozenset(attributes),
            schema=self.schema,
        )


class UserClass(Enum):
    COORDINATED = "coordinated"
    NORMAL = "normal"


@dataclass(frozen=True)
class LabeledUserSet:
    labels: Mapping[str, UserClass]

    def __post_init__(self):
        object.__setattr__(self, "labels", {user: UserClass(label) for user, label in self.labels.items()})

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, user: object) -> bool:
        return user in self.labels

    @property
    def users(self) -> frozenset:
        return frozenset(self.labels)

    @property
    def coordinated(self) -> frozenset:
        return frozenset(u for u, label in self.labels.items() if label is UserClass.COORDINATED)

    @property
    def normal(self) -> frozenset:
        return frozenset(u for u, label in self.labels.items() if label is UserClass.NORMAL)

    def label_of(self, user: str) -> UserClass:
        try:
            return self.labels[user]
        except KeyError:
            raise UnknownUserError(f"User '{user}' has no ground-truth label") from None

    def restrict(self, users: Iterable[str]) -> "LabeledUserSet":
        return LabeledUserSet({user: self.label_of(user) for user in users})


@dataclass
class ParseReport:
    total: int = 0
    parsed: int = 0
    skipped: int = 0
    reasons: Counter = field(default_factory=Counter)

    def skip(self, reason: str) -> None:
        self.skipped += 1
        self.reasons[reason] += 1


@dataclass
class IngestReport:
    parsed: int = 0
    skipped: int = 0
    dropped_outside_windows: int = 0
    background_posts: int = 0
    target_posts: int = 0
    common_users: int = 0
    selected_users: Optional[int] = None
    distinct_items: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def to_epoch_seconds(value: Union[int, float, str]) -> int:
    """Seconds since epoch from a number or a date string (naive strings are UTC)."""
    if value is None or isinstance(value, bool):
        raise ValueError(f"Not a timestamp: {value!r}")
    if isinstance(value, (int, float)):
        return int(value)
    text = str(value).strip()
    try:
        return int(float(text))
    except ValueError:
        pass
    stamp = pd.Timestamp(text)
    if pd.isna(stamp):
        raise ValueError(f"Not a timestamp: {value!r}")
    if stamp.tzinfo is None:
        stamp = stamp.tz_localize("UTC")
    return int(stamp.timestamp())


def _clean_text(value: Any) -> Optional[str]:
    if value is None:
        return None
    if isinstance(value, float) and value != value:
        return None
    text = str(value).strip()
    return text or None


def _parse_list(value: Any, separator: str) -> Tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, (list, tuple)):
        parts = [str(part) for part in value]
    else:
        parts = str(value).split(separator)
    return tuple(part.strip() for part in parts if part is not None and str(part).strip())


def _parse_flag(value: Any) -> Optional[bool]:
    if value is None:
        return None
    if isinstance(value, bool):
        return value
    word = str(value).strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    raise ValueError(f"Not a boolean: {value!r}")


def _check_mapping(field_mapping: Mapping[str, str]) -> None:
    missing = [name for name in MANDATORY_FIELDS if not field_mapping.get(name)]
    if missing:
        raise BadMappingError(f"Field mapping lacks mandatory fields: {missing}")
    unknown = sorted(set(field_mapping) - set(POST_FIELDS))
    if unknown:
        raise BadMappingError(f"Field mapping names unknown post fields: {unknown}")


def _record_to_post(record: Mapping[str, Any], field_mapping: Mapping[str, str], separator: str) -> RawPost:
    def get(name: str) -> Any:
        column = field_mapping.get(name)
        return record.get(column) if column else None

    post_id = _clean_text(get("post_id"))
    user_id = _clean_text(get("user_id"))
    raw_timestamp = _clean_text(get("timestamp"))
    if post_id is None or user_id is None or raw_timestamp is None:
        raise ValueError("missing mandatory field")
    retweeted = _clean_text(get("retweeted_user_id"))
    flag = _parse_flag(get("is_retweet")) if field_mapping.get("is_retweet") else None
    is_retweet = flag if flag is not None else retweeted is not None
    return RawPost(
        post_id=post_id,
        user_id=user_id,
        timestamp=to_epoch_seconds(get("timestamp")),
        reported_location=_clean_text(get("reported_location")),
        language=_clean_text(get("language")),
        client_name=_clean_text(get("client_name")),
        is_retweet=is_retweet,
        retweeted_user_id=retweeted,
        hashtags=_parse_list(get("hashtags"), separator),
        user_mentions=_parse_list(get("user_mentions"), separator),
    )


def parse_records(
    records: Iterable[Mapping[str, Any]],
    field_mapping: Mapping[str, str],
    list_separator: str = ";",
    report: Optional[ParseReport] = None,
) -> Tuple[List[RawPost], ParseReport]:
    """Parse mappings into posts, skipping and counting malformed rows."""
    _check_mapping(field_mapping)
    report = report if report is not None else ParseReport()
    posts: List[RawPost] = []
    for record in records:
        report.total += 1
        if not isinstance(record, Mapping):
            report.skip("not a record")
            continue
        try:
            posts.append(_record_to_post(record, field_mapping, list_separator))
        except (ValueError, TypeError, OverflowError) as exc:
            report.skip(type(exc).__name__)
            logger.debug("Skipping malformed record %r: %s", record, exc)
    report.parsed = len(posts)
    return posts, report


def _read_jsonl(path: Path, report: ParseReport) -> List[Any]:
    records = []
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                report.total += 1
                report.skip("invalid json")
    return records


def _read_csv(path: Path, report: ParseReport) -> List[Dict[str, Any]]:
    def bad_line(_fields: List[str]) -> None:
        report.total += 1
        report.skip("malformed csv row")
        return None

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, engine="python", on_bad_lines=bad_line)
    except pd.errors.EmptyDataError:
        return []
    return frame.to_dict("records")


def parse_posts(
    path: Union[str, Path],
    field_mapping: Mapping[str, str],
    fmt: str = "csv",
    list_separator: str = ";",
) -> Tuple[List[RawPost], ParseReport]:
    """Read posts from a CSV file with a header row or a JSON-lines file."""
    _check_mapping(field_mapping)
    path = Path(path)
    report = ParseReport()
    try:
        if fmt == "csv":
            records = _read_csv(path, report)
        elif fmt in ("jsonl", "json-lines", "ndjson"):
            records = _read_jsonl(path, report)
        else:
            raise ConfigError(f"Unknown post format '{fmt}', expected 'csv' or 'jsonl'")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as exc:
        raise InputReadError(f"Cannot read posts from {path}: {exc}") from exc
    posts, report = parse_records(records, field_mapping, list_separator, report)
    logger.info("Parsed %d posts from %s (%d skipped)", report.parsed, path, report.skipped)
    return posts, report


def partition(
    posts: Iterable[RawPost],
    spec: PartitionSpec,
    report: Optional[IngestReport] = None,
) -> Tuple[List[RawPost], List[RawPost]]:
    """Split posts into the closed background and target windows."""
    background: List[RawPost] = []
    target: List[RawPost] = []
    dropped = 0
    for post in posts:
        if spec.t0 <= post.timestamp <= spec.t1:
            background.append(post)
        elif spec.t2 <= post.timestamp <= spec.t3:
            target.append(post)
        else:
            dropped += 1
    if report is not None:
        report.dropped_outside_windows += dropped
    logger.info("Partitioned posts: %d background, %d target, %d dropped", len(background), len(target), dropped)
    if not background or not target:
        raise EmptyWindowError(
            f"Window partition left {len(background)} background and {len(target)} target posts"
        )
    return background, target


class CommonUsers(NamedTuple):
    users: frozenset
    background: List[RawPost]
    target: List[RawPost]


def common_users(background: Sequence[RawPost], target: Sequence[RawPost]) -> CommonUsers:
    users = frozenset(p.user_id for p in background) & frozenset(p.user_id for p in target)
    if not users:
        raise NoCommonUsersError("No user posted in both the background and the target window")
    return CommonUsers(
        users,
        [p for p in background if p.user_id in users],
        [p for p in target if p.user_id in users],
    )


def top_users(posts: Iterable[RawPost], labels: LabeledUserSet, n_c: int, n_n: int) -> frozenset:
    """The n_c coordinated and n_n normal users with the most posts.

    Ties are broken by ascending user id.
    """
    frequency = Counter(post.user_id for post in posts)
    selected = set()
    for user_class, wanted in ((UserClass.COORDINATED, n_c), (UserClass.NORMAL, n_n)):
        members = [user for user in frequency if labels.label_of(user) is user_class]
        if len(members) < wanted:
            logger.warning(
                "Only %d %s users available, %d requested; taking all", len(members), user_class.value, wanted
            )
        members.sort(key=lambda user: (-frequency[user], user))
        selected.update(members[:wanted])
    return frozenset(selected)


def restrict_to_users(posts: Iterable[RawPost], users: Iterable[str]) -> List[RawPost]:
    keep = frozenset(users)
    return [post for post in posts if post.user_id in keep]


def local_time(timestamp: int, config: PreprocessConfig) -> datetime:
    return datetime.fromtimestamp(timestamp, tz=timezone(timedelta(minutes=config.timezone_offset_minutes)))


def time_slot(timestamp: int, config: PreprocessConfig) -> int:
    moment = local_time(timestamp, config)
    return (moment.hour * 60 + moment.minute) // config.slot_minutes


def slot_label(slot: int, slots_per_day: int = 12) -> str:
    width = MINUTES_PER_DAY // slots_per_day
    start, end = slot * width, (slot + 1) * width
    return f"{start // 60:02d}:{start % 60:02d}-{end // 60:02d}:{end % 60:02d}"


def derive_attributes(post: RawPost, config: PreprocessConfig) -> List[Tuple[str, str]]:
    """Flatten a post into its (attribute, value) items."""
    enabled = config.enabled_attributes
    moment = local_time(post.timestamp, config)
    items: List[Tuple[str, str]] = [(USER_ATTRIBUTE, post.user_id)]
    if post.reported_location is not None:
        items.append(("user_reported_location", post.reported_location))
    if post.language is not None:
        items.append(("tweet_language", post.language))
    items.append(("day_of_week", DAY_NAMES[moment.weekday()]))
    items.append(("time_of_day", str(time_slot(post.timestamp, config))))
    if post.client_name is not None:
        items.append(("tweet_client_name", post.client_name))
    items.append(("is_retweet", "true" if post.is_retweet else "false"))
    if post.is_retweet:
        items.append(("retweet_userid", post.retweeted_user_id))

    normalize = get_normalizer(config.hashtag_normalizer)
    tags = dict.fromkeys(tag for tag in (normalize(raw) for raw in post.hashtags) if tag)
    items.extend(("hashtag", tag) for tag in tags)
    items.extend(("user_mentions", user) for user in dict.fromkeys(post.user_mentions))
    return [(attribute, value) for attribute, value in items if attribute in enabled]


def _post_order(post: RawPost) -> Tuple[str, str, int]:
    return (post.post_id, post.user_id, post.timestamp)


def build_datasets(
    background: Sequence[RawPost],
    target: Sequence[RawPost],
    config: PreprocessConfig,
    report: Optional[IngestReport] = None,
) -> Tuple[TransactionDataset, TransactionDataset, ItemDictionary]:
    """Encode both windows with one dictionary, background first, posts by id."""
    if not background or not target:
        raise EmptyWindowError("Both windows need at least one post before encoding")
    dictionary = ItemDictionary(config.schema)
    rank = {name: i for i, name in enumerate(config.schema)}
    datasets = []
    for label, posts in ((Window.BACKGROUND, background), (Window.TARGET, target)):
        transactions = []
        for post in sorted(posts, key=_post_order):
            raw = sorted(derive_attributes(post, config), key=lambda pair: (rank[pair[0]], pair[1]))
            transactions.append(encode_transaction(raw, dictionary, mutable=True, tid=post.post_id))
        datasets.append(TransactionDataset(label, tuple(transactions)))
    dictionary.freeze()
    if report is not None:
        report.distinct_items = len(dictionary)
    logger.info(
        "Encoded %d background and %d target transactions over %d items",
        datasets[0].size, datasets[1].size, len(dictionary),
    )
    return datasets[0], datasets[1], dictionary


def prepare_windows(
    posts: Iterable[RawPost],
    spec: PartitionSpec,
    labels: Optional[LabeledUserSet] = None,
    n_c: Optional[int] = None,
    n_n: Optional[int] = None,
    report: Optional[IngestReport] = None,
) -> Tuple[List[RawPost], List[RawPost]]:
    """Partition, keep common users and, in evaluation mode, the top users."""
    report = report if report is not None else IngestReport()
    background, target = partition(posts, spec, report)
    shared = common_users(background, target)
    report.common_users = len(shared.users)
    background, target = shared.background, shared.target
    if labels is not None and n_c is not None and n_n is not None:
        selected = top_users(background + target, labels, n_c, n_n)
        background = restrict_to_users(background, selected)
        target = restrict_to_users(target, selected)
        report.selected_users = len(selected)
        if not background or not target:
            raise EmptyWindowError("Top-user selection left an empty window")
    report.background_posts = len(background)
    report.target_posts = len(target)
    return background, target
