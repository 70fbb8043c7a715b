"""Closed contrast pattern mining over a dual-count FP-tree.

Every tree node counts the background and the target transactions that share
its prefix. Mining is depth-first over conditional trees, in the FPClose
manner: items are processed least-frequent first, each candidate is extended
by the items that occur in every transaction of its conditional base, and a
``ClosedIndex`` of the closed sets found so far rejects candidates that are
subsumed by an earlier set with the same union count. The threshold side's
count is anti-monotone, so any conditional item failing sigma is pruned.

``oracle_mine`` enumerates itemsets by brute force and applies the same
predicate; it exists to check the miner on small inputs.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from itertools import combinations
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

from core_model import (
    ContrastPattern,
    PatternStats,
    TransactionDataset,
    passes_growth,
)
from errors import ConfigError, EmptyInputError, OracleLimitError

logger = logging.getLogger(__name__)

ORACLE_ITEM_LIMIT = 20


class ThresholdSide(Enum):
    BACKGROUND = "background"
    TARGET = "target"


def exact_fraction(value) -> Fraction:
    """Exact rational for a threshold; floats go through their shortest repr (1.1 -> 11/10)."""
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


@dataclass(frozen=True)
class MiningParams:
    """sigma is a minimum support COUNT on ``threshold_side``; rho a growth threshold."""

    sigma: int = 10
    rho: Fraction = Fraction(3, 2)
    threshold_side: ThresholdSide = ThresholdSide.BACKGROUND
    sigma_delta: Optional[Fraction] = None
    min_pattern_len: int = 1

    def __post_init__(self):
        object.__setattr__(self, "rho", exact_fraction(self.rho))
        object.__setattr__(self, "threshold_side", ThresholdSide(self.threshold_side))
        if self.sigma_delta is not None:
            object.__setattr__(self, "sigma_delta", exact_fraction(self.sigma_delta))
            if self.sigma_delta <= 0:
                raise ConfigError(f"sigma_delta must be positive, got {self.sigma_delta}")
        if int(self.sigma) != self.sigma or self.sigma < 1:
            raise ConfigError(f"sigma must be an integer count >= 1, got {self.sigma}")
        object.__setattr__(self, "sigma", int(self.sigma))
        if self.rho <= 1:
            raise ConfigError(f"rho must be greater than 1, got {self.rho}")
        if self.min_pattern_len < 1:
            raise ConfigError(f"min_pattern_len must be >= 1, got {self.min_pattern_len}")

    def side_count(self, count_b: int, count_t: int) -> int:
        return count_b if self.threshold_side is ThresholdSide.BACKGROUND else count_t

    def with_thresholds(self, sigma: int, rho) -> "MiningParams":
        return replace(self, sigma=sigma, rho=exact_fraction(rho))


def passes_contrast(stats: PatternStats, params: MiningParams) -> bool:
    """Threshold and growth parts of the closed contrast predicate."""
    if params.side_count(stats.sc_b, stats.sc_t) < params.sigma:
        return False
    if passes_growth(stats, params.rho):
        return True
    return params.sigma_delta is not None and stats.delta >= params.sigma_delta


def iter_contrast(patterns: Iterable[ContrastPattern], params: MiningParams) -> Iterator[ContrastPattern]:
    """Re-apply the predicate to patterns mined with looser thresholds on the same side.

    Closedness over the union of both windows does not depend on sigma or rho.
    """
    for pattern in patterns:
        if len(pattern) >= params.min_pattern_len and passes_contrast(pattern.stats, params):
            yield pattern


class FPNode:
    __slots__ = ("item", "count_b", "count_t", "parent", "children", "link")

    def __init__(self, item: Optional[int], parent: Optional["FPNode"]):
        self.item = item
        self.count_b = 0
        self.count_t = 0
        self.parent = parent
        self.children: Dict[int, FPNode] = {}
        self.link: Optional[FPNode] = None


class HeaderEntry:
    __slots__ = ("head", "count_b", "count_t")

    def __init__(self):
        self.head: Optional[FPNode] = None
        self.count_b = 0
        self.count_t = 0


class FPTree:
    """Prefix tree with a background and a target counter per node.

    ``rank`` fixes the global item order (descending total count, item id
    tiebreak); inserted paths must follow it.
    """

    def __init__(self, rank: Dict[int, int]):
        self.root = FPNode(None, None)
        self.rank = rank
        self.header: Dict[int, HeaderEntry] = {item: HeaderEntry() for item in rank}

    @classmethod
    def with_counts(cls, counts: Dict[int, Sequence[int]]) -> "FPTree":
        order = sorted(counts, key=lambda item: (-(counts[item][0] + counts[item][1]), item))
        return cls({item: i for i, item in enumerate(order)})

    def __bool__(self) -> bool:
        return bool(self.root.children)

    def sort_items(self, items: Iterable[int]) -> List[int]:
        return sorted(items, key=self.rank.__getitem__)

    def insert(self, path: Sequence[int], count_b: int, count_t: int) -> None:
        node = self.root
        for item in path:
            entry = self.header[item]
            child = node.children.get(item)
            if child is None:
                child = node.children[item] = FPNode(item, node)
                child.link, entry.head = entry.head, child
            child.count_b += count_b
            child.count_t += count_t
            entry.count_b += count_b
            entry.count_t += count_t
            node = child

    def items_bottom_up(self) -> List[int]:
        """Items with at least one node, least frequent first."""
        return sorted((item for item, entry in self.header.items() if entry.head is not None),
                      key=self.rank.__getitem__, reverse=True)

    def nodes_of(self, item: int) -> Iterator[FPNode]:
        node = self.header[item].head
        while node is not None:
            yield node
            node = node.link

    def prefix_paths(self, item: int) -> List[Tuple[List[int], int, int]]:
        """Conditional pattern base of ``item``: (root-to-parent items, count_b, count_t)."""
        paths = []
        for node in self.nodes_of(item):
            path = []
            parent = node.parent
            while parent.item is not None:
                path.append(parent.item)
                parent = parent.parent
            path.reverse()
            paths.append((path, node.count_b, node.count_t))
        return paths

    def node_count(self) -> int:
        return sum(1 for item in self.header for _ in self.nodes_of(item))


class ClosedIndex:
    """Closed sets found so far, bucketed by union support count.

    Within a bucket an inverted item index answers "is there a stored superset
    of X" by intersecting the posting lists of X's items.
    """

    def __init__(self):
        self._postings: Dict[int, Dict[int, Set[int]]] = defaultdict(lambda: defaultdict(set))
        self._sizes: Dict[int, int] = defaultdict(int)

    def __len__(self) -> int:
        return sum(self._sizes.values())

    def has_superset(self, items: Iterable[int], union_count: int) -> bool:
        bucket = self._postings.get(union_count)
        if not bucket:
            return False
        postings = []
        for item in items:
            posting = bucket.get(item)
            if not posting:
                return False
            postings.append(posting)
        postings.sort(key=len)
        common = set(postings[0])
        for posting in postings[1:]:
            common &= posting
            if not common:
                return False
        return True

    def add(self, items: Iterable[int], union_count: int) -> None:
        bucket = self._postings[union_count]
        key = self._sizes[union_count]
        self._sizes[union_count] += 1
        for item in items:
            bucket[item].add(key)


def _check_inputs(background: TransactionDataset, target: TransactionDataset) -> None:
    if background.size == 0 and target.size == 0:
        raise EmptyInputError("Both datasets are empty")
    if background.size == 0 or target.size == 0:
        empty = "background" if background.size == 0 else "target"
        raise EmptyInputError(f"The {empty} dataset is empty; supports are undefined")


def build_tree(background: TransactionDataset, target: TransactionDataset, params: MiningParams) -> FPTree:
    """Insert both windows into one tree, keeping items that reach sigma on the threshold side."""
    _check_inputs(background, target)
    counts: Dict[int, List[int]] = defaultdict(lambda: [0, 0])
    for side, dataset in enumerate((background, target)):
        for transaction in dataset.transactions:
            for item in transaction.items:
                counts[item][side] += 1
    kept = {item: c for item, c in counts.items() if params.side_count(c[0], c[1]) >= params.sigma}
    tree = FPTree.with_counts(kept)
    for side, dataset in enumerate((background, target)):
        increment = (1, 0) if side == 0 else (0, 1)
        for transaction in dataset.transactions:
            path = tree.sort_items(item for item in transaction.items if item in kept)
            if path:
                tree.insert(path, *increment)
    logger.info("Built FP-tree: %d of %d items kept, %d nodes", len(kept), len(counts), tree.node_count())
    return tree


class _ClosedMiner:
    def __init__(self, params: MiningParams, n_b: int, n_t: int):
        self.params = params
        self.n_b = n_b
        self.n_t = n_t
        self.index = ClosedIndex()
        self.found: List[ContrastPattern] = []

    def mine(self, tree: FPTree, prefix: frozenset) -> None:
        params = self.params
        for item in tree.items_bottom_up():
            entry = tree.header[item]
            count_b, count_t = entry.count_b, entry.count_t
            total = count_b + count_t
            paths = tree.prefix_paths(item)

            conditional: Dict[int, List[int]] = defaultdict(lambda: [0, 0])
            for path, path_b, path_t in paths:
                for other in path:
                    counts = conditional[other]
                    counts[0] += path_b
                    counts[1] += path_t

            full = [other for other, c in conditional.items() if c[0] + c[1] == total]
            candidate = prefix.union(full, (item,))
            if self.index.has_superset(candidate, total):
                continue
            self.index.add(candidate, total)
            self._emit(candidate, count_b, count_t)

            extend = {
                other: c for other, c in conditional.items()
                if c[0] + c[1] < total and params.side_count(c[0], c[1]) >= params.sigma
            }
            if not extend:
                continue
            subtree = FPTree.with_counts(extend)
            for path, path_b, path_t in paths:
                kept = subtree.sort_items(other for other in path if other in extend)
                if kept:
                    subtree.insert(kept, path_b, path_t)
            self.mine(subtree, candidate)

    def _emit(self, candidate: frozenset, count_b: int, count_t: int) -> None:
        if len(candidate) < self.params.min_pattern_len:
            return
        stats = PatternStats(count_b, count_t, self.n_b, self.n_t)
        if passes_contrast(stats, self.params):
            self.found.append(ContrastPattern(tuple(sorted(candidate)), stats))


def mine_closed_contrast(
    background: TransactionDataset,
    target: TransactionDataset,
    params: MiningParams,
) -> Set[ContrastPattern]:
    """All closed contrast patterns of (background, target) under ``params``."""
    tree = build_tree(background, target, params)
    miner = _ClosedMiner(params, background.size, target.size)
    miner.mine(tree, frozenset())
    logger.info("Mined %d closed sets, %d closed contrast patterns", len(miner.index), len(miner.found))
    return set(miner.found)


def oracle_mine(
    background: TransactionDataset,
    target: TransactionDataset,
    params: MiningParams,
) -> Set[ContrastPattern]:
    """Brute-force reference: every itemset contained in some transaction, scanned exactly."""
    _check_inputs(background, target)
    universe = {item for dataset in (background, target) for t in dataset.transactions for item in t.items}
    if len(universe) > ORACLE_ITEM_LIMIT:
        raise OracleLimitError(f"Oracle handles at most {ORACLE_ITEM_LIMIT} distinct items, got {len(universe)}")

    candidates: Set[Tuple[int, ...]] = set()
    for dataset in (background, target):
        for transaction in dataset.transactions:
            for size in range(1, len(transaction.items) + 1):
                candidates.update(combinations(transaction.items, size))

    union = [t.itemset for t in background.transactions] + [t.itemset for t in target.transactions]
    n_b = background.size
    found = set()
    for candidate in candidates:
        if len(candidate) < params.min_pattern_len:
            continue
        wanted = frozenset(candidate)
        holders = [i for i, items in enumerate(union) if wanted <= items]
        count_b = sum(1 for i in holders if i < n_b)
        stats = PatternStats(count_b, len(holders) - count_b, n_b, target.size)
        if not passes_contrast(stats, params):
            continue
        common = frozenset.intersection(*(union[i] for i in holders))
        if common == wanted:
            found.add(ContrastPattern(candidate, stats))
    return found
