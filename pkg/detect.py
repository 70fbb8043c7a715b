"""Attribute filtering of mined patterns and suspicious-user extraction."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from core_model import (
    USER_ATTRIBUTE,
    ContrastPattern,
    Growth,
    ItemDictionary,
    attributes_of,
    canonical_order,
    growth_sort_key,
)
from miner import MiningParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttributeFilter:
    required: FrozenSet[str] = frozenset({USER_ATTRIBUTE})

    def __post_init__(self):
        object.__setattr__(self, "required", frozenset(self.required))


@dataclass(frozen=True)
class DetectionReport:
    suspicious_users: FrozenSet[str]
    supporting_patterns: Dict[str, Tuple[ContrastPattern, ...]]
    params: Optional[MiningParams] = None
    pattern_count: int = 0
    user_pattern_count: int = 0

    def max_growth(self, user: str) -> Growth:
        """Largest growth among a user's patterns; metadata only, detection is set-valued."""
        return min((p.stats.growth for p in self.supporting_patterns[user]), key=growth_sort_key)


def filter_patterns(
    patterns: Iterable[ContrastPattern],
    attribute_filter: AttributeFilter,
    dictionary: ItemDictionary,
) -> Set[ContrastPattern]:
    """P_A: the patterns whose attribute set contains every required attribute."""
    required = attribute_filter.required
    return {p for p in patterns if required <= attributes_of(p.items, dictionary)}


def user_values(pattern: ContrastPattern, dictionary: ItemDictionary, user_attribute: str = USER_ATTRIBUTE) -> List[str]:
    values = []
    for item_id in pattern.items:
        attribute, value = dictionary.decode(item_id)
        if attribute == user_attribute:
            values.append(value)
    return values


def behaviour(pattern: ContrastPattern, dictionary: ItemDictionary, user_attribute: str = USER_ATTRIBUTE) -> Tuple[int, ...]:
    """b(p): the pattern's items other than user items."""
    return tuple(i for i in pattern.items if dictionary.attribute_name(i) != user_attribute)


def user_patterns(
    patterns: Iterable[ContrastPattern],
    dictionary: ItemDictionary,
    user_attribute: str = USER_ATTRIBUTE,
) -> List[ContrastPattern]:
    """P_{user} without the patterns made of user items only."""
    bearing = filter_patterns(patterns, AttributeFilter(frozenset({user_attribute})), dictionary)
    return [p for p in canonical_order(bearing) if behaviour(p, dictionary, user_attribute)]


def suspicious_users(
    patterns: Iterable[ContrastPattern],
    dictionary: ItemDictionary,
    params: Optional[MiningParams] = None,
    user_attribute: str = USER_ATTRIBUTE,
) -> DetectionReport:
    patterns = list(patterns)
    kept = user_patterns(patterns, dictionary, user_attribute)
    supporting: Dict[str, List[ContrastPattern]] = defaultdict(list)
    for pattern in kept:
        for user in user_values(pattern, dictionary, user_attribute):
            supporting[user].append(pattern)
    logger.info("%d of %d patterns name a user; %d suspicious users", len(kept), len(patterns), len(supporting))
    return DetectionReport(
        suspicious_users=frozenset(supporting),
        supporting_patterns={user: tuple(found) for user, found in sorted(supporting.items())},
        params=params,
        pattern_count=len(patterns),
        user_pattern_count=len(kept),
    )
