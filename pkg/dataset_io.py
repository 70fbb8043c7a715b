"""On-disk formats: encoded datasets, pattern files, reports and synthetic corpora.

Encoded dataset files are JSON-lines: a header record carrying the format
version, window label, attribute schema and dictionary entries, followed by
one ``{"tid": ..., "items": [...]}`` record per transaction.
"""
from __future__ import annotations

import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import pandas as pd

from analysis import AblationTrace, EvalMetrics, PurityRecord, SweepResult
from core_model import (
    ContrastPattern,
    ItemDictionary,
    PatternStats,
    Transaction,
    TransactionDataset,
    Window,
    canonical_order,
    decode_pattern,
    format_growth,
)
from detect import DetectionReport
from errors import DataError, FormatVersionError, InputReadError
from ingest import POST_FIELDS, LabeledUserSet, RawPost, UserClass
from synth import SynthCorpus

logger = logging.getLogger(__name__)

FORMAT_NAME = "ccpdetect-dataset"
FORMAT_VERSION = 1
LIST_SEPARATOR = ";"

# Identity mapping for post files written by the synthetic generator.
POST_MAPPING: Dict[str, str] = {name: name for name in POST_FIELDS}

PathLike = Union[str, Path]


def _write_lines(path: PathLike, records: Iterable[Mapping[str, Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            handle.write("\n")


def _read_lines(path: PathLike) -> List[Dict[str, Any]]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as handle:
            return [json.loads(line) for line in handle if line.strip()]
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputReadError(f"Cannot read {path}: {exc}") from exc


# Encoded datasets

def save_dataset(path: PathLike, dataset: TransactionDataset, dictionary: ItemDictionary) -> None:
    header = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "window": dataset.label.value,
        "schema": list(dictionary.schema),
        "dictionary": [list(entry) for entry in dictionary.entries()],
        "size": dataset.size,
    }
    body = ({"tid": t.tid, "items": list(t.items)} for t in dataset.transactions)
    _write_lines(path, [header, *body])


def load_dataset(path: PathLike) -> Tuple[TransactionDataset, ItemDictionary]:
    records = _read_lines(path)
    if not records:
        raise InputReadError(f"{path} is empty")
    header, body = records[0], records[1:]
    if header.get("format") != FORMAT_NAME:
        raise FormatVersionError(f"{path} is not an encoded dataset file")
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatVersionError(
            f"{path} has format version {header.get('format_version')}, expected {FORMAT_VERSION}"
        )
    try:
        dictionary = ItemDictionary.from_entries(header["schema"], header["dictionary"])
        transactions = tuple(Transaction(str(r["tid"]), tuple(int(i) for i in r["items"])) for r in body)
        label = Window(header["window"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"Malformed encoded dataset {path}: {exc}") from exc
    if header.get("size", len(transactions)) != len(transactions):
        raise DataError(f"{path} declares {header['size']} transactions but holds {len(transactions)}")
    return TransactionDataset(label, transactions), dictionary


def load_window_pair(background_path: PathLike, target_path: PathLike) -> Tuple[TransactionDataset, TransactionDataset, ItemDictionary]:
    background, dictionary = load_dataset(background_path)
    target, other = load_dataset(target_path)
    if dictionary.entries() != other.entries() or dictionary.schema != other.schema:
        raise DataError(f"{background_path} and {target_path} were not encoded with one dictionary")
    return background, target, dictionary


# Patterns and detections

def pattern_record(pattern: ContrastPattern, dictionary: ItemDictionary) -> Dict[str, Any]:
    stats = pattern.stats
    return {
        "item_ids": list(pattern.items),
        "items": [[attribute, value] for attribute, value in decode_pattern(pattern.items, dictionary)],
        "sc_b": stats.sc_b,
        "sc_t": stats.sc_t,
        "n_b": stats.n_b,
        "n_t": stats.n_t,
        "supp_b": str(stats.supp_b),
        "supp_t": str(stats.supp_t),
        "growth": format_growth(stats.growth),
        "delta": str(stats.delta),
    }


def write_patterns(path: PathLike, patterns: Iterable[ContrastPattern], dictionary: ItemDictionary) -> int:
    ordered = canonical_order(patterns)
    _write_lines(path, (pattern_record(p, dictionary) for p in ordered))
    return len(ordered)


def read_patterns(path: PathLike, dictionary: ItemDictionary) -> List[ContrastPattern]:
    """Patterns from a patterns file; decoded items must agree with ``dictionary``."""
    patterns = []
    for record in _read_lines(path):
        try:
            items = tuple(int(i) for i in record["item_ids"])
            decoded = [tuple(pair) for pair in record["items"]]
            stats = PatternStats(int(record["sc_b"]), int(record["sc_t"]), int(record["n_b"]), int(record["n_t"]))
            pattern = ContrastPattern(items, stats)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"Malformed pattern record in {path}: {exc}") from exc
        if decoded != decode_pattern(items, dictionary):
            raise DataError(f"Pattern {items} in {path} does not match the dataset dictionary")
        patterns.append(pattern)
    return patterns


def write_detection(path: PathLike, report: DetectionReport, dictionary: ItemDictionary) -> None:
    records = (
        {
            "user": user,
            "max_growth": format_growth(report.max_growth(user)),
            "patterns": [pattern_record(p, dictionary) for p in patterns],
        }
        for user, patterns in report.supporting_patterns.items()
    )
    _write_lines(path, records)


def read_detected_users(path: PathLike) -> frozenset:
    return frozenset(str(record["user"]) for record in _read_lines(path))


# Reports

def report_header(stamp: bool = True) -> Dict[str, Any]:
    header: Dict[str, Any] = {"tool": "ccpdetect", "format_version": FORMAT_VERSION}
    if stamp:
        header["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return header


def write_json(path: PathLike, payload: Mapping[str, Any], stamp: bool = True) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {"header": report_header(stamp), **payload}
    path.write_text(json.dumps(document, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")


def write_table(path: PathLike, rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(list(rows), columns=list(columns)).to_csv(path, index=False, lineterminator="\n")


METRIC_COLUMNS = ("tp", "fp", "fn", "tn", "precision", "recall", "f1")
SWEEP_COLUMNS = ("sigma", "rho", "user_patterns", "flagged_users") + METRIC_COLUMNS
ABLATION_COLUMNS = ("step", "attribute", "attributes", "sigma", "rho", "f1", "user_patterns")
PURITY_COLUMNS = ("behaviour", "purity", "class", "posts_in_target", "users")


def eval_rows(results: Mapping[str, EvalMetrics]) -> List[Dict[str, Any]]:
    return [{"method": method, **metrics.to_dict()} for method, metrics in results.items()]


def sweep_rows(result: SweepResult) -> List[Dict[str, Any]]:
    return [
        {
            "sigma": cell.sigma,
            "rho": str(cell.rho),
            "user_patterns": cell.pattern_count,
            "flagged_users": cell.flagged_users,
            **cell.metrics.to_dict(),
        }
        for cell in result.cells
    ]


def ablation_rows(trace: AblationTrace) -> List[Dict[str, Any]]:
    return [
        {
            "step": index,
            "attribute": step.attribute,
            "attributes": LIST_SEPARATOR.join(step.attributes),
            "sigma": step.sigma,
            "rho": str(step.rho),
            "f1": float(step.f1),
            "user_patterns": step.pattern_count,
        }
        for index, step in enumerate(trace.steps, start=1)
    ]


def describe_items(items: Iterable[int], dictionary: ItemDictionary) -> str:
    """Display form, e.g. ``tweet_language: en, is_retweet: false``."""
    return ", ".join(f"{attribute}: {value}" for attribute, value in decode_pattern(items, dictionary))


def purity_rows(records: Iterable[PurityRecord], dictionary: ItemDictionary) -> List[Dict[str, Any]]:
    return [
        {
            "behaviour": describe_items(record.behaviour, dictionary),
            "purity": float(record.purity),
            "class": record.purity_class.value,
            "posts_in_target": record.posts_in_target,
            "users": record.user_count,
        }
        for record in records
    ]


# Posts, labels and synthetic corpora

def _post_row(post: RawPost) -> Dict[str, Any]:
    return {
        "post_id": post.post_id,
        "user_id": post.user_id,
        "timestamp": post.timestamp,
        "reported_location": post.reported_location or "",
        "language": post.language or "",
        "client_name": post.client_name or "",
        "is_retweet": "true" if post.is_retweet else "false",
        "retweeted_user_id": post.retweeted_user_id or "",
        "hashtags": LIST_SEPARATOR.join(post.hashtags),
        "user_mentions": LIST_SEPARATOR.join(post.user_mentions),
    }


def write_posts(path: PathLike, posts: Iterable[RawPost], fmt: str = "csv") -> None:
    """Posts in the format ``ingest.parse_posts`` reads back with ``POST_MAPPING``."""
    if fmt == "csv":
        write_table(path, [_post_row(p) for p in posts], POST_FIELDS)
    else:
        _write_lines(path, (
            {**_post_row(p), "hashtags": list(p.hashtags), "user_mentions": list(p.user_mentions)} for p in posts
        ))


def write_labels(path: PathLike, labels: LabeledUserSet) -> None:
    rows = [{"user_id": user, "class": labels.label_of(user).value} for user in sorted(labels.users)]
    write_table(path, rows, ("user_id", "class"))


def read_labels(path: PathLike) -> LabeledUserSet:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise InputReadError(f"Cannot read labels from {path}: {exc}") from exc
    if not {"user_id", "class"} <= set(frame.columns):
        raise DataError(f"{path} needs 'user_id' and 'class' columns")
    try:
        return LabeledUserSet({user: UserClass(label.strip().lower()) for user, label in zip(frame["user_id"], frame["class"])})
    except ValueError as exc:
        raise DataError(f"Unknown user class in {path}: {exc}") from exc


def manifest_payload(corpus: SynthCorpus) -> Dict[str, Any]:
    return {
        "seed": corpus.seed,
        "background_posts": len(corpus.background),
        "target_posts": len(corpus.target),
        "users": {"coordinated": len(corpus.labels.coordinated), "normal": len(corpus.labels.normal)},
        "planted_patterns": [
            {
                "items": [list(pair) for pair in entry.items],
                "participants": list(entry.participants),
                "background_rate": entry.background_rate,
                "target_rate": entry.target_rate,
                "expected_growth": entry.expected_growth,
                "background_posts": entry.background_posts,
                "target_posts": entry.target_posts,
            }
            for entry in corpus.manifest
        ],
    }


def write_corpus(out_dir: PathLike, corpus: SynthCorpus, fmt: str = "csv", stamp: bool = True) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    suffix = "csv" if fmt == "csv" else "jsonl"
    paths = {
        "posts": out_dir / f"posts.{suffix}",
        "labels": out_dir / "labels.csv",
        "manifest": out_dir / "manifest.json",
    }
    write_posts(paths["posts"], corpus.posts, fmt)
    write_labels(paths["labels"], corpus.labels)
    write_json(paths["manifest"], manifest_payload(corpus), stamp)
    logger.info("Wrote synthetic corpus to %s", out_dir)
    return paths

