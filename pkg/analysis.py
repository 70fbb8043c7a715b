"""Evaluation harness: metrics, baselines, parameter sweeps, purity and ablation."""
from __future__ import annotations

import logging
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from core_model import USER_ATTRIBUTE, ContrastPattern, ItemDictionary, TransactionDataset
from detect import DetectionReport, behaviour, suspicious_users
from errors import ConfigError, EmptyBehaviourError, InvariantViolation, UnknownUserError
from ingest import LabeledUserSet, PreprocessConfig, RawPost, build_datasets
from miner import MiningParams, exact_fraction, iter_contrast, mine_closed_contrast

logger = logging.getLogger(__name__)

DEFAULT_SIGMA_GRID: Tuple[int, ...] = (1, 2, 5, 10, 20, 50, 100)
DEFAULT_RHO_GRID: Tuple[Fraction, ...] = tuple(
    Fraction(v) for v in ("1.1", "1.2", "1.5", "2", "3", "5", "10")
)


def _ratio(numerator: int, denominator: int) -> Fraction:
    return Fraction(numerator, denominator) if denominator else Fraction(0)


@dataclass(frozen=True)
class EvalMetrics:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> Fraction:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> Fraction:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> Fraction:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else Fraction(0)

    def to_dict(self) -> Dict[str, object]:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "precision": float(self.precision), "recall": float(self.recall), "f1": float(self.f1),
        }


def evaluate(predicted: Iterable[str], labels: LabeledUserSet) -> EvalMetrics:
    predicted = frozenset(predicted)
    unknown = predicted - labels.users
    if unknown:
        raise UnknownUserError(f"{len(unknown)} predicted users are outside the label universe, e.g. {min(unknown)}")
    coordinated, normal = labels.coordinated, labels.normal
    return EvalMetrics(
        tp=len(predicted & coordinated),
        fp=len(predicted & normal),
        fn=len(coordinated - predicted),
        tn=len(normal - predicted),
    )


def transaction_users(
    dataset: TransactionDataset,
    dictionary: ItemDictionary,
    user_attribute: str = USER_ATTRIBUTE,
) -> List[Optional[str]]:
    """Author of each transaction, in dataset order (None without a user item)."""
    authors: List[Optional[str]] = []
    for transaction in dataset.transactions:
        author = None
        for item_id in transaction.items:
            attribute, value = dictionary.decode(item_id)
            if attribute == user_attribute:
                author = value
                break
        authors.append(author)
    return authors


def dataset_users(datasets: Iterable[TransactionDataset], dictionary: ItemDictionary) -> FrozenSet[str]:
    return frozenset(u for d in datasets for u in transaction_users(d, dictionary) if u is not None)


def baseline_frequency(
    background: TransactionDataset,
    target: TransactionDataset,
    sigma: int,
    rho,
    dictionary: ItemDictionary,
) -> FrozenSet[str]:
    """Users whose normalized posting frequency grew by at least rho."""
    rho = exact_fraction(rho)
    freq_b = Counter(u for u in transaction_users(background, dictionary) if u is not None)
    freq_t = Counter(u for u in transaction_users(target, dictionary) if u is not None)
    n_b, n_t = background.size, target.size
    return frozenset(
        user for user, count_b in freq_b.items()
        if count_b >= sigma and freq_t[user] * n_b >= rho * count_b * n_t
    )


def baseline_language(target_posts: Iterable[RawPost], suspect_language: str) -> FrozenSet[str]:
    """Users whose most frequent target-window language is the suspect one; ties are not flagged."""
    languages: Dict[str, Counter] = defaultdict(Counter)
    for post in target_posts:
        if post.language:
            languages[post.user_id][post.language] += 1
    flagged = set()
    for user, counts in languages.items():
        ranked = counts.most_common(2)
        top_language, top_count = ranked[0]
        if top_language == suspect_language and (len(ranked) == 1 or ranked[1][1] < top_count):
            flagged.add(user)
    return frozenset(flagged)


class PurityClass(Enum):
    PURE_COORDINATED = "pure_coordinated"
    PURE_NORMAL = "pure_normal"
    MIXED = "mixed"


@dataclass(frozen=True)
class PurityRecord:
    behaviour: Tuple[int, ...]
    purity: Fraction
    posts_in_target: int
    user_count: Optional[int] = None

    @property
    def purity_class(self) -> PurityClass:
        if self.purity == 1:
            return PurityClass.PURE_COORDINATED
        if self.purity == 0:
            return PurityClass.PURE_NORMAL
        return PurityClass.MIXED


def _behaviour_purity(
    items: Tuple[int, ...],
    target: TransactionDataset,
    authors: Sequence[Optional[str]],
    coordinated: FrozenSet[str],
) -> Tuple[Fraction, int]:
    wanted = frozenset(items)
    matched = coordinated_matched = 0
    for transaction, author in zip(target.transactions, authors):
        if wanted <= transaction.itemset:
            matched += 1
            coordinated_matched += author in coordinated
    if matched == 0:
        raise InvariantViolation(f"Behavioural pattern {items} never occurs in the target window")
    return Fraction(coordinated_matched, matched), matched


def _sharing_users(
    report: Optional[DetectionReport], items: Tuple[int, ...], dictionary: ItemDictionary
) -> Optional[int]:
    if report is None:
        return None
    return sum(
        1 for patterns in report.supporting_patterns.values()
        if any(behaviour(p, dictionary) == items for p in patterns)
    )


def purity(
    pattern: ContrastPattern,
    target: TransactionDataset,
    coordinated: Iterable[str],
    dictionary: ItemDictionary,
    report: Optional[DetectionReport] = None,
) -> PurityRecord:
    """Share of target posts matching b(p) that coordinated users wrote.

    ``user_count`` is the number of detected users sharing b(p); it is None
    without a detection report.
    """
    items = behaviour(pattern, dictionary)
    if not items:
        raise EmptyBehaviourError(f"Pattern {pattern.items} has no behavioural items")
    authors = transaction_users(target, dictionary)
    value, posts = _behaviour_purity(items, target, authors, frozenset(coordinated))
    return PurityRecord(items, value, posts, _sharing_users(report, items, dictionary))


def purity_report(
    report: DetectionReport,
    target: TransactionDataset,
    coordinated: Iterable[str],
    dictionary: ItemDictionary,
) -> List[PurityRecord]:
    """One record per distinct behavioural pattern among the detected patterns."""
    coordinated = frozenset(coordinated)
    authors = transaction_users(target, dictionary)
    sharing: Dict[Tuple[int, ...], Set[str]] = defaultdict(set)
    for user, patterns in report.supporting_patterns.items():
        for pattern in patterns:
            sharing[behaviour(pattern, dictionary)].add(user)
    records = []
    for items, users in sharing.items():
        value, posts = _behaviour_purity(items, target, authors, coordinated)
        records.append(PurityRecord(items, value, posts, len(users)))
    records.sort(key=lambda r: (-r.purity, -r.posts_in_target, r.behaviour))
    return records


@dataclass(frozen=True)
class SweepCell:
    sigma: int
    rho: Fraction
    metrics: EvalMetrics
    pattern_count: int
    flagged_users: int


@dataclass(frozen=True)
class SweepResult:
    cells: Tuple[SweepCell, ...]

    @property
    def best(self) -> SweepCell:
        """Highest F1; the first cell in grid order wins ties."""
        return max(self.cells, key=lambda cell: cell.metrics.f1)

    def cell(self, sigma: int, rho) -> SweepCell:
        rho = exact_fraction(rho)
        for cell in self.cells:
            if cell.sigma == sigma and cell.rho == rho:
                return cell
        raise KeyError((sigma, rho))

    def check_monotone(self) -> None:
        """Pattern counts never grow with sigma at fixed rho, nor with rho at fixed sigma."""
        grid = {(cell.sigma, cell.rho): cell.pattern_count for cell in self.cells}
        sigmas = sorted({s for s, _ in grid})
        rhos = sorted({r for _, r in grid})
        for s in sigmas:
            for r in rhos:
                here = grid.get((s, r))
                for bigger in [(s2, r) for s2 in sigmas if s2 > s] + [(s, r2) for r2 in rhos if r2 > r]:
                    there = grid.get(bigger)
                    if here is not None and there is not None and there > here:
                        raise InvariantViolation(
                            f"|P_user| grew from {here} at (sigma={s}, rho={r}) to {there} at {bigger}"
                        )


def _check_grids(sigma_grid: Sequence[int], rho_grid: Sequence) -> Tuple[List[int], List[Fraction]]:
    if not sigma_grid or not rho_grid:
        raise ConfigError("Sweep grids must be non-empty")
    rhos = [exact_fraction(r) for r in rho_grid]
    return [int(s) for s in sigma_grid], rhos


def sweep(
    background: TransactionDataset,
    target: TransactionDataset,
    labels: LabeledUserSet,
    dictionary: ItemDictionary,
    sigma_grid: Sequence[int] = DEFAULT_SIGMA_GRID,
    rho_grid: Sequence = DEFAULT_RHO_GRID,
    params: Optional[MiningParams] = None,
) -> SweepResult:
    """Run mine -> detect -> evaluate at every (sigma, rho) of the grid.

    The closed sets are mined once at the loosest corner of the grid and the
    contrast predicate is re-applied per cell.
    """
    sigmas, rhos = _check_grids(sigma_grid, rho_grid)
    params = params or MiningParams()
    universe = labels.restrict(dataset_users((background, target), dictionary))
    loosest = params.with_thresholds(min(sigmas), min(rhos))
    mined = mine_closed_contrast(background, target, loosest)
    cells = []
    for sigma in sigmas:
        for rho in rhos:
            cell_params = params.with_thresholds(sigma, rho)
            report = suspicious_users(iter_contrast(mined, cell_params), dictionary, cell_params)
            metrics = evaluate(report.suspicious_users, universe)
            cells.append(SweepCell(sigma, rho, metrics, report.user_pattern_count, len(report.suspicious_users)))
            logger.debug("sigma=%s rho=%s -> F1 %.3f, |P_user| %d", sigma, rho, metrics.f1, report.user_pattern_count)
    return SweepResult(tuple(cells))


def baseline_frequency_sweep(
    background: TransactionDataset,
    target: TransactionDataset,
    labels: LabeledUserSet,
    dictionary: ItemDictionary,
    sigma_grid: Sequence[int] = DEFAULT_SIGMA_GRID,
    rho_grid: Sequence = DEFAULT_RHO_GRID,
) -> SweepResult:
    """The frequency baseline over the same grid; pattern_count is always 0."""
    sigmas, rhos = _check_grids(sigma_grid, rho_grid)
    universe = labels.restrict(dataset_users((background, target), dictionary))
    cells = []
    for sigma in sigmas:
        for rho in rhos:
            flagged = baseline_frequency(background, target, sigma, rho, dictionary)
            cells.append(SweepCell(sigma, rho, evaluate(flagged, universe), 0, len(flagged)))
    return SweepResult(tuple(cells))


class AblationMode(Enum):
    SUBTRACTIVE = "subtractive"
    ADDITIVE = "additive"


@dataclass(frozen=True)
class AblationStep:
    attribute: str
    attributes: Tuple[str, ...]
    sigma: int
    rho: Fraction
    f1: Fraction
    pattern_count: int


@dataclass(frozen=True)
class AblationTrace:
    mode: AblationMode
    steps: Tuple[AblationStep, ...]


def score_attributes(
    background_posts: Sequence[RawPost],
    target_posts: Sequence[RawPost],
    labels: LabeledUserSet,
    attributes: FrozenSet[str],
    sigma_grid: Sequence[int],
    rho_grid: Sequence,
    config: PreprocessConfig,
    params: MiningParams,
) -> SweepCell:
    """Best sweep cell for the datasets rebuilt with ``attributes`` only."""
    background, target, dictionary = build_datasets(background_posts, target_posts, config.with_attributes(attributes))
    return sweep(background, target, labels, dictionary, sigma_grid, rho_grid, params).best


def ablate(
    background_posts: Sequence[RawPost],
    target_posts: Sequence[RawPost],
    labels: LabeledUserSet,
    mode: AblationMode,
    sigma_grid: Sequence[int] = DEFAULT_SIGMA_GRID,
    rho_grid: Sequence = DEFAULT_RHO_GRID,
    config: Optional[PreprocessConfig] = None,
    params: Optional[MiningParams] = None,
    threads: int = 1,
) -> AblationTrace:
    """Greedy attribute search scored by the best sweep F1.

    Subtractive removes, at each step, the attribute whose removal gives the
    lowest best-F1; additive adds the one giving the highest. Ties go to the
    alphabetically first attribute.
    """
    config = config or PreprocessConfig()
    params = params or MiningParams()
    mode = AblationMode(mode)
    schema = frozenset(config.enabled_attributes)
    if len(schema) < 2:
        raise ConfigError(f"Ablation needs at least two attributes, got {sorted(schema)}")
    current = set(schema) if mode is AblationMode.SUBTRACTIVE else {USER_ATTRIBUTE}
    goal = {USER_ATTRIBUTE} if mode is AblationMode.SUBTRACTIVE else set(schema)

    steps: List[AblationStep] = []
    executor = ProcessPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while current != goal:
            if mode is AblationMode.SUBTRACTIVE:
                candidates = sorted(current - {USER_ATTRIBUTE})
                attribute_sets = [frozenset(current - {a}) for a in candidates]
            else:
                candidates = sorted(schema - current)
                attribute_sets = [frozenset(current | {a}) for a in candidates]
            jobs = [
                (background_posts, target_posts, labels, attrs, sigma_grid, rho_grid, config, params)
                for attrs in attribute_sets
            ]
            if executor is not None and len(jobs) > 1:
                scores = list(executor.map(score_attributes, *zip(*jobs)))
            else:
                scores = [score_attributes(*job) for job in jobs]

            f1s = [cell.metrics.f1 for cell in scores]
            target_f1 = min(f1s) if mode is AblationMode.SUBTRACTIVE else max(f1s)
            chosen = f1s.index(target_f1)
            attribute, best = candidates[chosen], scores[chosen]
            current = set(attribute_sets[chosen])
            steps.append(AblationStep(
                attribute=attribute,
                attributes=tuple(sorted(current)),
                sigma=best.sigma,
                rho=best.rho,
                f1=best.metrics.f1,
                pattern_count=best.pattern_count,
            ))
            logger.info("%s step %d: %s -> best F1 %.3f", mode.value, len(steps), attribute, best.metrics.f1)
    finally:
        if executor is not None:
            executor.shutdown()
    return AblationTrace(mode, tuple(steps))
