"""Transaction and pattern algebra.

Items are (attribute, value) pairs encoded as dense integer ids by an
``ItemDictionary``. A transaction is the sorted item-id set derived from one
post; a dataset is one window's transactions. Supports are kept as exact
count pairs and turned into ``Fraction`` values on demand.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

from errors import EmptyDatasetError, UnknownAttributeError

logger = logging.getLogger(__name__)

USER_ATTRIBUTE = "userid"

# Attribute space of a post, in schema order. AttributeId is the index here.
DEFAULT_SCHEMA: Tuple[str, ...] = (
    "userid",
    "user_reported_location",
    "tweet_language",
    "day_of_week",
    "time_of_day",
    "tweet_client_name",
    "is_retweet",
    "retweet_userid",
    "hashtag",
    "user_mentions",
)

# Attributes that may contribute several items to one transaction.
MULTI_VALUED = frozenset({"hashtag", "user_mentions"})


class Item(NamedTuple):
    attribute: int
    value: int


class Window(Enum):
    BACKGROUND = "background"
    TARGET = "target"


class Unbounded(Enum):
    """Growth of a pattern absent from the background but present in the target."""

    INFINITE = "INFINITE"

    def __str__(self) -> str:
        return self.value


INFINITE = Unbounded.INFINITE
Growth = Union[Fraction, Unbounded]


class ItemDictionary:
    """Bidirectional map between (attribute name, value text) and item ids.

    Ids are handed out in order of first ``encode`` call, so a deterministic
    encoding pass yields a reproducible dictionary. After ``freeze`` the
    dictionary is read-only and may be shared between workers.
    """

    def __init__(self, schema: Sequence[str] = DEFAULT_SCHEMA):
        if len(set(schema)) != len(schema) or not schema:
            raise ValueError(f"Attribute schema must be non-empty and duplicate-free: {schema}")
        self._schema: Tuple[str, ...] = tuple(schema)
        self._attribute_ids: Dict[str, int] = {name: i for i, name in enumerate(self._schema)}
        self._forward: Dict[Tuple[str, str], int] = {}
        self._reverse: List[Tuple[str, str]] = []
        self._items: List[Item] = []
        self._domain_sizes: List[int] = [0] * len(self._schema)
        self._frozen = False

    @property
    def schema(self) -> Tuple[str, ...]:
        return self._schema

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> "ItemDictionary":
        self._frozen = True
        return self

    def __len__(self) -> int:
        return len(self._reverse)

    def __contains__(self, pair: object) -> bool:
        return pair in self._forward

    def attribute_id(self, name: str) -> int:
        try:
            return self._attribute_ids[name]
        except KeyError:
            raise UnknownAttributeError(f"Attribute '{name}' is not in the schema {self._schema}") from None

    def lookup(self, attribute: str, value: str) -> Optional[int]:
        self.attribute_id(attribute)
        return self._forward.get((attribute, value))

    def encode(self, attribute: str, value: str, mutable: bool = True) -> Optional[int]:
        """Return the id of (attribute, value), assigning one when allowed.

        Returns None for an unseen pair when the dictionary is frozen or
        ``mutable`` is false. A frozen dictionary is never written.
        """
        attribute_id = self.attribute_id(attribute)
        key = (attribute, value)
        item_id = self._forward.get(key)
        if item_id is not None:
            return item_id
        if self._frozen or not mutable:
            return None
        item_id = len(self._reverse)
        self._forward[key] = item_id
        self._reverse.append(key)
        self._items.append(Item(attribute_id, self._domain_sizes[attribute_id]))
        self._domain_sizes[attribute_id] += 1
        return item_id

    def decode(self, item_id: int) -> Tuple[str, str]:
        return self._reverse[item_id]

    def item(self, item_id: int) -> Item:
        return self._items[item_id]

    def attribute_name(self, item_id: int) -> str:
        return self._reverse[item_id][0]

    def entries(self) -> List[Tuple[int, str, str]]:
        return [(item_id, attribute, value) for item_id, (attribute, value) in enumerate(self._reverse)]

    @classmethod
    def from_entries(cls, schema: Sequence[str], entries: Iterable[Sequence]) -> "ItemDictionary":
        """Rebuild a frozen dictionary from ``entries()`` output."""
        dictionary = cls(schema)
        for expected_id, (item_id, attribute, value) in enumerate(sorted(entries, key=lambda e: int(e[0]))):
            if int(item_id) != expected_id:
                raise ValueError(f"Dictionary entries are not dense: expected id {expected_id}, got {item_id}")
            dictionary.encode(attribute, value)
        return dictionary.freeze()


@dataclass(frozen=True)
class Transaction:
    tid: str
    items: Tuple[int, ...]

    def __post_init__(self):
        if any(a >= b for a, b in zip(self.items, self.items[1:])):
            raise ValueError(f"Transaction {self.tid} items must be strictly ascending: {self.items}")

    @cached_property
    def itemset(self) -> frozenset:
        return frozenset(self.items)

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class TransactionDataset:
    label: Window
    transactions: Tuple[Transaction, ...]

    @property
    def size(self) -> int:
        return len(self.transactions)

    def __len__(self) -> int:
        return len(self.transactions)

    def __iter__(self):
        return iter(self.transactions)


@dataclass(frozen=True)
class PatternStats:
    """Dual support counts of a pattern and the measures derived from them."""

    sc_b: int
    sc_t: int
    n_b: int
    n_t: int

    def __post_init__(self):
        if self.n_b <= 0 or self.n_t <= 0:
            raise EmptyDatasetError("Pattern statistics need non-empty background and target datasets")
        if not (0 <= self.sc_b <= self.n_b and 0 <= self.sc_t <= self.n_t):
            raise ValueError(f"Support counts out of range: {self}")

    @property
    def supp_b(self) -> Fraction:
        return Fraction(self.sc_b, self.n_b)

    @property
    def supp_t(self) -> Fraction:
        return Fraction(self.sc_t, self.n_t)

    @property
    def growth(self) -> Growth:
        return growth_rate(self.supp_t, self.supp_b)

    @property
    def delta(self) -> Fraction:
        return support_delta(self.supp_t, self.supp_b)

    @property
    def union_count(self) -> int:
        return self.sc_b + self.sc_t


@dataclass(frozen=True)
class ContrastPattern:
    items: Tuple[int, ...]
    stats: PatternStats

    def __post_init__(self):
        if not self.items:
            raise ValueError("A contrast pattern needs at least one item")
        if any(a >= b for a, b in zip(self.items, self.items[1:])):
            raise ValueError(f"Pattern items must be strictly ascending: {self.items}")

    def __len__(self) -> int:
        return len(self.items)


def support_count(pattern: Iterable[int], dataset: TransactionDataset) -> int:
    wanted = frozenset(pattern)
    return sum(1 for transaction in dataset.transactions if wanted <= transaction.itemset)


def support(pattern: Iterable[int], dataset: TransactionDataset) -> Fraction:
    if dataset.size == 0:
        raise EmptyDatasetError(f"Cannot compute support over the empty {dataset.label.value} dataset")
    return Fraction(support_count(pattern, dataset), dataset.size)


def growth_rate(supp_t: Fraction, supp_b: Fraction) -> Growth:
    if supp_b > 0:
        return Fraction(supp_t) / Fraction(supp_b)
    if supp_t > 0:
        return INFINITE
    return Fraction(0)


def support_delta(supp_t: Fraction, supp_b: Fraction) -> Fraction:
    return Fraction(supp_t) - Fraction(supp_b)


def passes_growth(stats: PatternStats, rho: Fraction) -> bool:
    """gr >= rho, compared by cross-multiplying counts."""
    if stats.sc_b == 0:
        return stats.sc_t > 0
    return stats.sc_t * stats.n_b >= rho * stats.sc_b * stats.n_t


def closure(pattern: Iterable[int], transactions: Iterable[Transaction]) -> Tuple[int, frozenset]:
    """Union count of ``pattern`` and the intersection of the transactions holding it."""
    wanted = frozenset(pattern)
    count = 0
    common: Optional[frozenset] = None
    for transaction in transactions:
        if wanted <= transaction.itemset:
            count += 1
            common = transaction.itemset if common is None else common & transaction.itemset
    return count, (common if common is not None else wanted)


def is_closed(pattern: Iterable[int], background: TransactionDataset, target: TransactionDataset) -> bool:
    """True iff no strict superset has the same count over the multiset union of both windows.

    A pattern occurring in no transaction is reported as not closed.
    """
    wanted = frozenset(pattern)
    if not wanted:
        raise ValueError("is_closed needs a non-empty pattern")
    count, common = closure(wanted, background.transactions + target.transactions)
    return count > 0 and common == wanted


def encode_counted(
    raw_items: Iterable[Tuple[str, str]],
    dictionary: ItemDictionary,
    mutable: bool = True,
    tid: str = "",
) -> Tuple[Transaction, int]:
    """Encode one transaction; also return how many unseen pairs were dropped."""
    item_ids: Set[int] = set()
    dropped = 0
    single_values: Dict[str, str] = {}
    for attribute, value in raw_items:
        if attribute not in MULTI_VALUED:
            seen = single_values.setdefault(attribute, value)
            if seen != value:
                raise ValueError(f"Transaction {tid} has two values for '{attribute}': {seen!r}, {value!r}")
        item_id = dictionary.encode(attribute, value, mutable=mutable)
        if item_id is None:
            dropped += 1
        else:
            item_ids.add(item_id)
    return Transaction(tid, tuple(sorted(item_ids))), dropped


def encode_transaction(
    raw_items: Iterable[Tuple[str, str]],
    dictionary: ItemDictionary,
    mutable: bool = True,
    tid: str = "",
) -> Transaction:
    return encode_counted(raw_items, dictionary, mutable, tid)[0]


def decode_pattern(items: Iterable[int], dictionary: ItemDictionary) -> List[Tuple[str, str]]:
    return [dictionary.decode(item_id) for item_id in items]


def attributes_of(items: Iterable[int], dictionary: ItemDictionary) -> Set[str]:
    return {dictionary.attribute_name(item_id) for item_id in items}


def growth_sort_key(growth: Growth) -> Tuple[int, Fraction]:
    """Ascending key placing INFINITE first and larger finite growth earlier."""
    if growth is INFINITE:
        return (0, Fraction(0))
    return (1, -growth)


def canonical_order(patterns: Iterable[ContrastPattern]) -> List[ContrastPattern]:
    return sorted(patterns, key=lambda p: (growth_sort_key(p.stats.growth), p.items))


def format_growth(growth: Growth) -> str:
    return str(growth)


def parse_growth(text: str) -> Growth:
    return INFINITE if text == INFINITE.value else Fraction(text)
