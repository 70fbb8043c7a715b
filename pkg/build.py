"""Build script to create the ccpdetect executable from main.py"""
import os
from typing import List

APP_NAME = "ccpdetect"

# Modules main.py pulls in lazily or through the process pool.
HIDDEN_IMPORTS = (
    "analysis",
    "core_model",
    "dataset_io",
    "detect",
    "errors",
    "ingest",
    "miner",
    "run_config",
    "synth",
    "pandas",
    "numpy",
    "dotenv",
    "psutil",
)


def build_args(current_dir: str = None) -> List[str]:
    """PyInstaller arguments for a single-file console build."""
    current_dir = current_dir or os.path.dirname(os.path.abspath(__file__))
    args = [
        os.path.join(current_dir, "main.py"),
        "--onefile",
        f"--name={APP_NAME}",
        "--console",
        f"--paths={current_dir}",
    ]
    args.extend(f"--hidden-import={module}" for module in HIDDEN_IMPORTS)
    return args


def build_executable():
    """Build the executable using PyInstaller"""
    import PyInstaller.__main__

    print("Starting build process...")
    PyInstaller.__main__.run(build_args())
    print("Build complete! Check the 'dist' folder for the executable.")


if __name__ == "__main__":
    build_executable()
