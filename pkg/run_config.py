"""Run configuration: JSON file, ``.env`` / environment overrides, validation.

Precedence is command-line flag > ``CCPDETECT_*`` environment variable >
config file > built-in default. ``main.py`` applies the flags last.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import psutil
from dotenv import load_dotenv

from analysis import DEFAULT_RHO_GRID, DEFAULT_SIGMA_GRID
from core_model import DEFAULT_SCHEMA
from errors import ConfigError
from ingest import POST_FIELDS, PartitionSpec, PreprocessConfig
from miner import MiningParams, ThresholdSide, exact_fraction
from synth import PlantedPattern, SynthConfig, default_planted_patterns, time_signal_patterns

logger = logging.getLogger(__name__)

ENV_PREFIX = "CCPDETECT_"
SECTIONS = ("input", "field_mapping", "partition", "preprocess", "mining", "evaluation", "grids", "synth", "output_dir", "threads")


def load_environment(dotenv_path: Optional[str] = None) -> bool:
    """Load a ``.env`` file into the environment; existing variables win."""
    return load_dotenv(dotenv_path, override=False)


def env_flag(name: str, env: Optional[Mapping[str, str]] = None) -> bool:
    env = os.environ if env is None else env
    return env.get(ENV_PREFIX + name, "false").strip().lower() == "true"


def default_threads() -> int:
    return psutil.cpu_count(logical=True) or 1


@dataclass(frozen=True)
class RunConfig:
    posts_path: Optional[Path] = None
    posts_format: str = "csv"
    list_separator: str = ";"
    field_mapping: Mapping[str, str] = field(default_factory=lambda: {name: name for name in POST_FIELDS})
    partition: Optional[Tuple[Any, Any, Any, Any]] = None
    slots_per_day: int = 12
    timezone_offset_minutes: int = 0
    hashtag_normalizer: str = "lowercase"
    enabled_attributes: Tuple[str, ...] = DEFAULT_SCHEMA
    sigma: int = 10
    rho: Fraction = Fraction(3, 2)
    threshold_side: ThresholdSide = ThresholdSide.BACKGROUND
    sigma_delta: Optional[Fraction] = None
    min_pattern_len: int = 1
    labels_path: Optional[Path] = None
    n_c: Optional[int] = None
    n_n: Optional[int] = None
    suspect_language: str = "ru"
    sigma_grid: Tuple[int, ...] = DEFAULT_SIGMA_GRID
    rho_grid: Tuple[Fraction, ...] = DEFAULT_RHO_GRID
    synth: Mapping[str, Any] = field(default_factory=dict)
    output_dir: Path = Path("out")
    threads: int = field(default_factory=default_threads)

    def partition_spec(self) -> PartitionSpec:
        if self.partition is None:
            raise ConfigError("Config has no 'partition' section (t0, t1, t2, t3)")
        return PartitionSpec.from_values(*self.partition)

    def preprocess_config(self) -> PreprocessConfig:
        return PreprocessConfig(
            slots_per_day=self.slots_per_day,
            timezone_offset_minutes=self.timezone_offset_minutes,
            hashtag_normalizer=self.hashtag_normalizer,
            enabled_attributes=frozenset(self.enabled_attributes),
        )

    def mining_params(self) -> MiningParams:
        return MiningParams(
            sigma=self.sigma,
            rho=self.rho,
            threshold_side=self.threshold_side,
            sigma_delta=self.sigma_delta,
            min_pattern_len=self.min_pattern_len,
        )

    def synth_config(self) -> SynthConfig:
        return build_synth_config(self.synth, self.slots_per_day)

    @property
    def evaluation_mode(self) -> bool:
        return self.labels_path is not None and self.n_c is not None and self.n_n is not None

    def path(self, name: str) -> Path:
        return self.output_dir / name


def _planted(section: Any) -> Tuple[PlantedPattern, ...]:
    if section is None:
        return ()
    if isinstance(section, Mapping):
        kind = section.get("kind", "default")
        options = {k: v for k, v in section.items() if k != "kind"}
        if kind == "default":
            return default_planted_patterns(**options)
        if kind == "time_signal":
            return time_signal_patterns(**options)
        raise ConfigError(f"Unknown planted pattern kind '{kind}'")
    try:
        return tuple(
            PlantedPattern(
                items=tuple(tuple(pair) for pair in entry["items"]),
                participation=float(entry["participation"]),
                background_rate=float(entry["background_rate"]),
                target_rate=float(entry["target_rate"]),
            )
            for entry in section
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"Bad planted pattern entry: {exc}") from exc


def build_synth_config(section: Mapping[str, Any], slots_per_day: int = 12) -> SynthConfig:
    options = dict(section)
    options["planted_patterns"] = _planted(options.pop("planted_patterns", {"kind": "default"}))
    options.setdefault("slots_per_day", slots_per_day)
    for window in ("background_window", "target_window"):
        if window in options:
            options[window] = tuple(options[window])
    try:
        return SynthConfig(**options)
    except TypeError as exc:
        raise ConfigError(f"Bad synth section: {exc}") from exc


def _section(document: Mapping[str, Any], name: str) -> Mapping[str, Any]:
    value = document.get(name) or {}
    if not isinstance(value, Mapping):
        raise ConfigError(f"Config section '{name}' must be an object")
    return value


def from_document(document: Mapping[str, Any], base_dir: Path = Path(".")) -> RunConfig:
    unknown = sorted(set(document) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"Unknown config sections: {unknown}")

    def resolve(value: Optional[str]) -> Optional[Path]:
        if value is None:
            return None
        path = Path(value)
        return path if path.is_absolute() else base_dir / path

    source = _section(document, "input")
    partition = _section(document, "partition")
    preprocess = _section(document, "preprocess")
    mining = _section(document, "mining")
    evaluation = _section(document, "evaluation")
    grids = _section(document, "grids")
    options: Dict[str, Any] = {}
    try:
        if source:
            options["posts_path"] = resolve(source.get("posts"))
            options["posts_format"] = source.get("format", "csv")
            options["list_separator"] = source.get("list_separator", ";")
        if document.get("field_mapping"):
            options["field_mapping"] = dict(_section(document, "field_mapping"))
        if partition:
            options["partition"] = tuple(partition[key] for key in ("t0", "t1", "t2", "t3"))
        for key in ("slots_per_day", "timezone_offset_minutes"):
            if key in preprocess:
                options[key] = int(preprocess[key])
        if "hashtag_normalizer" in preprocess:
            options["hashtag_normalizer"] = str(preprocess["hashtag_normalizer"])
        if "enabled_attributes" in preprocess:
            options["enabled_attributes"] = tuple(preprocess["enabled_attributes"])
        if "sigma" in mining:
            options["sigma"] = int(mining["sigma"])
        if "rho" in mining:
            options["rho"] = exact_fraction(mining["rho"])
        if "threshold_side" in mining:
            options["threshold_side"] = ThresholdSide(str(mining["threshold_side"]).lower())
        if mining.get("sigma_delta") is not None:
            options["sigma_delta"] = exact_fraction(mining["sigma_delta"])
        if "min_pattern_len" in mining:
            options["min_pattern_len"] = int(mining["min_pattern_len"])
        if evaluation:
            options["labels_path"] = resolve(evaluation.get("labels"))
            options["n_c"] = evaluation.get("n_c")
            options["n_n"] = evaluation.get("n_n")
            options["suspect_language"] = evaluation.get("suspect_language", "ru")
        if "sigma" in grids:
            options["sigma_grid"] = tuple(int(s) for s in grids["sigma"])
        if "rho" in grids:
            options["rho_grid"] = tuple(exact_fraction(r) for r in grids["rho"])
        options["synth"] = dict(_section(document, "synth"))
        if "output_dir" in document:
            options["output_dir"] = resolve(document["output_dir"])
        if "threads" in document:
            options["threads"] = int(document["threads"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"Bad config value: {exc}") from exc
    return RunConfig(**options)


def apply_environment(config: RunConfig, env: Optional[Mapping[str, str]] = None) -> RunConfig:
    env = os.environ if env is None else env
    changes: Dict[str, Any] = {}
    try:
        if env.get(ENV_PREFIX + "SIGMA"):
            changes["sigma"] = int(env[ENV_PREFIX + "SIGMA"])
        if env.get(ENV_PREFIX + "RHO"):
            changes["rho"] = Fraction(env[ENV_PREFIX + "RHO"])
        if env.get(ENV_PREFIX + "THRESHOLD_SIDE"):
            changes["threshold_side"] = ThresholdSide(env[ENV_PREFIX + "THRESHOLD_SIDE"].lower())
        if env.get(ENV_PREFIX + "THREADS"):
            changes["threads"] = int(env[ENV_PREFIX + "THREADS"])
        if env.get(ENV_PREFIX + "OUT_DIR"):
            changes["output_dir"] = Path(env[ENV_PREFIX + "OUT_DIR"])
    except ValueError as exc:
        raise ConfigError(f"Bad {ENV_PREFIX}* environment value: {exc}") from exc
    if changes:
        logger.info("Environment overrides: %s", sorted(changes))
    return replace(config, **changes)


def apply_overrides(config: RunConfig, **overrides: Any) -> RunConfig:
    """Command-line overrides; ``None`` values are ignored."""
    changes = {key: value for key, value in overrides.items() if value is not None}
    try:
        if "rho" in changes:
            changes["rho"] = exact_fraction(changes["rho"])
        if "threshold_side" in changes:
            changes["threshold_side"] = ThresholdSide(str(changes["threshold_side"]).lower())
        if "output_dir" in changes:
            changes["output_dir"] = Path(changes["output_dir"])
        if "labels_path" in changes:
            changes["labels_path"] = Path(changes["labels_path"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return replace(config, **changes)


def load_run_config(path: Optional[str] = None, env: Optional[Mapping[str, str]] = None) -> RunConfig:
    if path is None:
        return apply_environment(RunConfig(), env)
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"Config file not found: {config_path}")
    try:
        document = json.loads(config_path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"Cannot read config {config_path}: {exc}") from exc
    if not isinstance(document, Mapping):
        raise ConfigError("Config document must be a JSON object")
    return apply_environment(from_document(document, config_path.parent), env)


def validate(config: RunConfig, needs: Sequence[str] = ()) -> RunConfig:
    """Check what a command needs and build every derived object once.

    ``needs`` names prerequisites: ``posts``, ``partition`` and ``labels``.
    """
    config.preprocess_config()
    config.mining_params()
    if config.threads < 1:
        raise ConfigError(f"threads must be >= 1, got {config.threads}")
    if "posts" in needs:
        if config.posts_path is None:
            raise ConfigError("Config has no input.posts path")
        if not config.posts_path.is_file():
            raise ConfigError(f"Input file not found: {config.posts_path}")
        if config.posts_format not in ("csv", "jsonl"):
            raise ConfigError(f"input.format must be 'csv' or 'jsonl', got '{config.posts_format}'")
    if "partition" in needs:
        config.partition_spec()
    if "labels" in needs:
        if config.labels_path is None:
            raise ConfigError("Config has no evaluation.labels path")
        if not config.labels_path.is_file():
            raise ConfigError(f"Labels file not found: {config.labels_path}")
    if (config.n_c is None) != (config.n_n is None):
        raise ConfigError("evaluation.n_c and evaluation.n_n must be given together")
    return config
