"""Tests for encoded dataset files, pattern files, labels and corpus files."""
import json
from fractions import Fraction

import pytest

import dataset_io
from detect import suspicious_users
from errors import DataError, FormatVersionError, InputReadError
from ingest import PreprocessConfig, build_datasets, parse_posts
from miner import MiningParams, ThresholdSide, mine_closed_contrast
from synth import generate


def test_dataset_file_round_trip(tmp_path, worked_example):
    path = tmp_path / "background.ccpd.jsonl"
    dataset_io.save_dataset(path, worked_example.background, worked_example.dictionary)
    loaded, dictionary = dataset_io.load_dataset(path)
    assert loaded == worked_example.background
    assert dictionary.entries() == worked_example.dictionary.entries()
    assert dictionary.schema == worked_example.dictionary.schema


def test_dataset_file_version_is_checked(tmp_path, worked_example):
    path = tmp_path / "target.ccpd.jsonl"
    dataset_io.save_dataset(path, worked_example.target, worked_example.dictionary)
    lines = path.read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    header["format_version"] = 99
    path.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n", encoding="utf-8")
    with pytest.raises(FormatVersionError):
        dataset_io.load_dataset(path)


def test_missing_dataset_file(tmp_path):
    with pytest.raises(InputReadError):
        dataset_io.load_dataset(tmp_path / "absent.jsonl")


def test_window_pair_needs_one_dictionary(tmp_path, worked_example, small_synth_config):
    corpus = generate(small_synth_config)
    _, other_target, other_dictionary = build_datasets(corpus.background, corpus.target, PreprocessConfig())
    dataset_io.save_dataset(tmp_path / "b.jsonl", worked_example.background, worked_example.dictionary)
    dataset_io.save_dataset(tmp_path / "t.jsonl", other_target, other_dictionary)
    with pytest.raises(DataError):
        dataset_io.load_window_pair(tmp_path / "b.jsonl", tmp_path / "t.jsonl")


def test_patterns_file(tmp_path, worked_example):
    params = MiningParams(sigma=2, rho=Fraction(3, 2), threshold_side=ThresholdSide.TARGET)
    mined = mine_closed_contrast(worked_example.background, worked_example.target, params)
    path = tmp_path / "patterns.jsonl"
    assert dataset_io.write_patterns(path, mined, worked_example.dictionary) == 3
    first = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert first["items"] == [["userid", "u1"], ["is_retweet", "yes"], ["retweet_userid", "u2"]]
    assert (first["growth"], first["delta"], first["supp_b"]) == ("3", "2/5", "1/5")
    assert set(dataset_io.read_patterns(path, worked_example.dictionary)) == mined


def test_empty_patterns_file(tmp_path, worked_example):
    path = tmp_path / "patterns.jsonl"
    dataset_io.write_patterns(path, [], worked_example.dictionary)
    assert path.read_text(encoding="utf-8") == ""
    assert dataset_io.read_patterns(path, worked_example.dictionary) == []


def test_detection_file(tmp_path, worked_example):
    mined = mine_closed_contrast(worked_example.background, worked_example.target, MiningParams(sigma=1))
    report = suspicious_users(mined, worked_example.dictionary)
    path = tmp_path / "detection.jsonl"
    dataset_io.write_detection(path, report, worked_example.dictionary)
    assert dataset_io.read_detected_users(path) == {"u1"}


def test_report_header_timestamp_is_optional(tmp_path):
    dataset_io.write_json(tmp_path / "a.json", {"x": 1}, stamp=False)
    dataset_io.write_json(tmp_path / "b.json", {"x": 1}, stamp=False)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    dataset_io.write_json(tmp_path / "c.json", {"x": 1})
    assert "generated_at" in json.loads((tmp_path / "c.json").read_text(encoding="utf-8"))["header"]


@pytest.mark.parametrize("fmt", ["csv", "jsonl"])
def test_corpus_files_parse_back(tmp_path, small_synth_config, fmt):
    corpus = generate(small_synth_config)
    paths = dataset_io.write_corpus(tmp_path, corpus, fmt, stamp=False)
    posts, report = parse_posts(paths["posts"], dataset_io.POST_MAPPING, fmt)
    assert report.skipped == 0
    assert tuple(posts) == corpus.posts
    assert dataset_io.read_labels(paths["labels"]) == corpus.labels
    manifest = json.loads(paths["manifest"].read_text(encoding="utf-8"))
    assert len(manifest["planted_patterns"]) == 2


def test_labels_with_unknown_class(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text("user_id,class\nu1,troll\n", encoding="utf-8")
    with pytest.raises(DataError):
        dataset_io.read_labels(path)


if __name__ == "__main__":
    pytest.main([__file__])
