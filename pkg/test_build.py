"""Tests for the PyInstaller argument list."""
import os

import pytest

from build import APP_NAME, HIDDEN_IMPORTS, build_args


def test_build_args_point_at_main(tmp_path):
    args = build_args(str(tmp_path))
    assert args[0] == os.path.join(str(tmp_path), "main.py")
    assert "--onefile" in args
    assert f"--name={APP_NAME}" in args
    assert f"--paths={tmp_path}" in args


def test_every_pipeline_module_is_bundled():
    args = build_args()
    for module in ("miner", "analysis", "synth"):
        assert f"--hidden-import={module}" in args
    assert len([a for a in args if a.startswith("--hidden-import=")]) == len(HIDDEN_IMPORTS)


if __name__ == "__main__":
    pytest.main([__file__])
