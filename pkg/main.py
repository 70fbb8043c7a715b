"""ccpdetect command-line pipeline: ingest, mine, detect and evaluate."""
import argparse
import logging
import signal
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional

import psutil

import dataset_io
from analysis import (
    AblationMode,
    ablate,
    baseline_frequency,
    baseline_frequency_sweep,
    baseline_language,
    dataset_users,
    evaluate,
    purity_report,
    sweep,
)
from detect import suspicious_users
from errors import PipelineError
from ingest import IngestReport, build_datasets, parse_posts, prepare_windows
from miner import mine_closed_contrast
from run_config import RunConfig, apply_overrides, env_flag, load_environment, load_run_config, validate
from synth import generate

BACKGROUND_FILE = "background.ccpd.jsonl"
TARGET_FILE = "target.ccpd.jsonl"
PATTERNS_FILE = "patterns.jsonl"
DETECTION_FILE = "detection.jsonl"

logger = logging.getLogger("ccpdetect")


def signal_handler(signum, frame):
    """Handle Ctrl+C and SIGTERM."""
    print("\nReceived interrupt signal. Cleaning up...")
    sys.exit(1)


def _configure_logging(verbose: bool) -> None:
    level = logging.INFO if verbose or env_flag("VERBOSE_LOGGING") else logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Run config (JSON)")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--threads", type=int, help="Worker cap (default: available cores)")
    common.add_argument("--no-timestamp", action="store_true", help="Omit generated_at from report headers")
    common.add_argument("--sigma", type=int, help="Minimum support count on the threshold side")
    common.add_argument("--rho", help="Minimum growth rate, e.g. 1.5 or 3/2")
    common.add_argument("--threshold-side", choices=("background", "target"), help="Window sigma applies to")
    common.add_argument("--verbose", action="store_true", help="Log progress at INFO level")

    parser = argparse.ArgumentParser(description="Coordinated user detection with closed contrast patterns")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("ingest", parents=[common], help="Parse, partition and encode posts")
    commands.add_parser("mine", parents=[common], help="Mine closed contrast patterns")
    commands.add_parser("detect", parents=[common], help="Extract suspicious users")
    evaluation = commands.add_parser("eval", parents=[common], help="Score detections against labels")
    evaluation.add_argument("--predicted", help="Detection JSONL or labels CSV to score instead of detection.jsonl")
    evaluation.add_argument("--labels", help="Labels CSV (overrides evaluation.labels)")
    commands.add_parser("sweep", parents=[common], help="Evaluate over the sigma/rho grid")
    ablation = commands.add_parser("ablate", parents=[common], help="Greedy attribute ablation")
    ablation.add_argument("--mode", choices=("subtractive", "additive", "both"), default="both")
    commands.add_parser("purity", parents=[common], help="Purity of detected behavioural patterns")
    synthetic = commands.add_parser("synth", parents=[common], help="Generate a labelled synthetic corpus")
    synthetic.add_argument("--format", choices=("csv", "jsonl"), default="csv", dest="post_format")
    synthetic.add_argument("--seed", type=int, help="Override synth.seed")
    commands.add_parser("run-all", parents=[common], help="ingest, mine, detect, then eval/sweep/purity with labels")
    return parser.parse_args(argv)


def _load_windows(config: RunConfig):
    return dataset_io.load_window_pair(config.path(BACKGROUND_FILE), config.path(TARGET_FILE))


def _load_labels(config: RunConfig):
    validate(config, needs=("labels",))
    return dataset_io.read_labels(config.labels_path)


def _read_windows_posts(config: RunConfig, labels=None):
    validate(config, needs=("posts", "partition"))
    posts, parse_report = parse_posts(config.posts_path, config.field_mapping, config.posts_format, config.list_separator)
    report = IngestReport(parsed=parse_report.parsed, skipped=parse_report.skipped)
    if config.evaluation_mode and labels is None:
        labels = _load_labels(config)
    background, target = prepare_windows(
        posts, config.partition_spec(), labels if config.evaluation_mode else None, config.n_c, config.n_n, report
    )
    return background, target, report, parse_report


def cmd_ingest(config: RunConfig, args: argparse.Namespace) -> int:
    background_posts, target_posts, report, parse_report = _read_windows_posts(config)
    background, target, dictionary = build_datasets(background_posts, target_posts, config.preprocess_config(), report)
    dataset_io.save_dataset(config.path(BACKGROUND_FILE), background, dictionary)
    dataset_io.save_dataset(config.path(TARGET_FILE), target, dictionary)
    dataset_io.write_json(
        config.path("ingest_report.json"),
        {"report": report.to_dict(), "skip_reasons": dict(sorted(parse_report.reasons.items()))},
        not args.no_timestamp,
    )
    print(f"✅ Encoded {background.size} background and {target.size} target transactions "
          f"({len(dictionary)} items, {report.common_users} common users)")
    if report.skipped:
        print(f"⚠️ Skipped {report.skipped} malformed records")
    return 0


def cmd_mine(config: RunConfig, args: argparse.Namespace) -> int:
    background, target, dictionary = _load_windows(config)
    params = config.mining_params()
    started = time.perf_counter()
    patterns = mine_closed_contrast(background, target, params)
    elapsed = time.perf_counter() - started
    count = dataset_io.write_patterns(config.path(PATTERNS_FILE), patterns, dictionary)
    rss_mb = psutil.Process().memory_info().rss / (1024 * 1024)
    print(f"✅ Mined {count} closed contrast patterns (sigma={params.sigma}, rho={params.rho}, "
          f"side={params.threshold_side.value}) in {elapsed:.2f}s, RSS {rss_mb:.0f} MB")
    return 0


def cmd_detect(config: RunConfig, args: argparse.Namespace) -> int:
    _, _, dictionary = _load_windows(config)
    patterns = dataset_io.read_patterns(config.path(PATTERNS_FILE), dictionary)
    report = suspicious_users(patterns, dictionary, config.mining_params())
    dataset_io.write_detection(config.path(DETECTION_FILE), report, dictionary)
    print(f"📝 |P| = {report.pattern_count}, |P_user| = {report.user_pattern_count}, "
          f"|U_suspicious| = {len(report.suspicious_users)}")
    return 0


def cmd_eval(config: RunConfig, args: argparse.Namespace) -> int:
    labels = _load_labels(config)
    predicted_path = getattr(args, "predicted", None)
    results = {}
    if predicted_path:
        path = Path(predicted_path)
        predicted = dataset_io.read_labels(path).coordinated if path.suffix == ".csv" \
            else dataset_io.read_detected_users(path)
        results["predicted"] = evaluate(predicted, labels)
    else:
        background, target, dictionary = _load_windows(config)
        universe = labels.restrict(dataset_users((background, target), dictionary))
        results["ccp"] = evaluate(dataset_io.read_detected_users(config.path(DETECTION_FILE)), universe)
        flagged = baseline_frequency(background, target, config.sigma, config.rho, dictionary)
        results["frequency"] = evaluate(flagged, universe)
        if config.posts_path is not None and config.partition is not None:
            _, target_posts, _, _ = _read_windows_posts(config, labels)
            results["language"] = evaluate(baseline_language(target_posts, config.suspect_language), universe)
    rows = dataset_io.eval_rows(results)
    dataset_io.write_table(config.path("eval.csv"), rows, ("method",) + dataset_io.METRIC_COLUMNS)
    dataset_io.write_json(config.path("eval.json"), {"results": rows}, not args.no_timestamp)
    for method, metrics in results.items():
        print(f"📝 {method}: P={float(metrics.precision):.3f} R={float(metrics.recall):.3f} F1={float(metrics.f1):.3f}")
    return 0


def cmd_sweep(config: RunConfig, args: argparse.Namespace) -> int:
    labels = _load_labels(config)
    background, target, dictionary = _load_windows(config)
    result = sweep(background, target, labels, dictionary, config.sigma_grid, config.rho_grid, config.mining_params())
    result.check_monotone()
    baseline = baseline_frequency_sweep(background, target, labels, dictionary, config.sigma_grid, config.rho_grid)
    rows = dataset_io.sweep_rows(result)
    dataset_io.write_table(config.path("sweep.csv"), rows, dataset_io.SWEEP_COLUMNS)
    dataset_io.write_table(config.path("sweep_baseline.csv"), dataset_io.sweep_rows(baseline), dataset_io.SWEEP_COLUMNS)
    best, best_baseline = result.best, baseline.best
    dataset_io.write_json(
        config.path("sweep.json"),
        {
            "best": {"sigma": best.sigma, "rho": str(best.rho), **best.metrics.to_dict()},
            "baseline_best": {"sigma": best_baseline.sigma, "rho": str(best_baseline.rho),
                              **best_baseline.metrics.to_dict()},
            "cells": rows,
        },
        not args.no_timestamp,
    )
    print(f"✅ Best cell: sigma={best.sigma}, rho={best.rho}, F1={float(best.metrics.f1):.3f} "
          f"(frequency baseline best F1={float(best_baseline.metrics.f1):.3f})")
    return 0


def cmd_ablate(config: RunConfig, args: argparse.Namespace) -> int:
    labels = _load_labels(config)
    background_posts, target_posts, _, _ = _read_windows_posts(config, labels)
    modes = ("subtractive", "additive") if args.mode == "both" else (args.mode,)
    for mode in modes:
        trace = ablate(
            background_posts, target_posts, labels, AblationMode(mode), config.sigma_grid, config.rho_grid,
            config.preprocess_config(), config.mining_params(), config.threads,
        )
        rows = dataset_io.ablation_rows(trace)
        dataset_io.write_table(config.path(f"ablation_{mode}.csv"), rows, dataset_io.ABLATION_COLUMNS)
        dataset_io.write_json(config.path(f"ablation_{mode}.json"), {"mode": mode, "steps": rows}, not args.no_timestamp)
        print(f"✅ {mode} ablation: " + " -> ".join(step.attribute for step in trace.steps))
    return 0


def cmd_purity(config: RunConfig, args: argparse.Namespace) -> int:
    labels = _load_labels(config)
    _, target, dictionary = _load_windows(config)
    patterns = dataset_io.read_patterns(config.path(PATTERNS_FILE), dictionary)
    report = suspicious_users(patterns, dictionary, config.mining_params())
    records = purity_report(report, target, labels.coordinated, dictionary)
    rows = dataset_io.purity_rows(records, dictionary)
    dataset_io.write_table(config.path("purity.csv"), rows, dataset_io.PURITY_COLUMNS)
    dataset_io.write_json(config.path("purity.json"), {"records": rows}, not args.no_timestamp)
    counts: Dict[str, int] = {}
    for row in rows:
        counts[row["class"]] = counts.get(row["class"], 0) + 1
    print(f"📝 {len(rows)} behavioural patterns: " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    return 0


def cmd_synth(config: RunConfig, args: argparse.Namespace) -> int:
    synth_config = config.synth_config()
    if getattr(args, "seed", None) is not None:
        synth_config = replace(synth_config, seed=args.seed)
    corpus = generate(synth_config)
    paths = dataset_io.write_corpus(config.path("synth"), corpus, getattr(args, "post_format", "csv"), not args.no_timestamp)
    print(f"✅ Wrote {len(corpus.posts)} posts for {len(corpus.labels)} users to {paths['posts']}")
    return 0


def cmd_run_all(config: RunConfig, args: argparse.Namespace) -> int:
    for command in (cmd_ingest, cmd_mine, cmd_detect):
        command(config, args)
    if config.labels_path is not None:
        for command in (cmd_eval, cmd_sweep, cmd_purity):
            command(config, args)
    return 0


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    "ingest": cmd_ingest,
    "mine": cmd_mine,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "ablate": cmd_ablate,
    "purity": cmd_purity,
    "synth": cmd_synth,
    "run-all": cmd_run_all,
}


def main(argv: Optional[List[str]] = None) -> int:
    signal.signal(signal.SIGINT, signal_handler)
    signal.signal(signal.SIGTERM, signal_handler)

    args = _parse_args(argv)
    load_environment()
    _configure_logging(args.verbose)
    try:
        config = load_run_config(args.config)
        config = validate(apply_overrides(
            config,
            sigma=args.sigma,
            rho=args.rho,
            threshold_side=args.threshold_side,
            threads=args.threads,
            output_dir=args.out,
            labels_path=getattr(args, "labels", None),
        ))
        return COMMANDS[args.command](config, args)
    except PipelineError as exc:
        print(f"❌ {exc.code}: {exc}")
        return exc.exit_code
    except KeyboardInterrupt:
        print("\nOperation interrupted by user.")
        return 1


if __name__ == "__main__":
    sys.exit(main())
