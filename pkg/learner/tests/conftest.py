import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def run_pipeline_cli(*args: str) -> subprocess.CompletedProcess:
    """Invoke the data-generation pipeline's CLI as a subprocess."""
    return subprocess.run(
        [sys.executable, "-m", "elastoprobe.cli", *args],
        capture_output=True,
        text=True,
    )


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A tiny generated dataset (CLI-produced) for plumbing-level tests."""
    out = tmp_path_factory.mktemp("small_ds") / "ds"
    proc = run_pipeline_cli(
        "gen", "--n", "24", "--grid", "32x32", "--seed", "7", "--out", str(out)
    )
    assert proc.returncode == 0, proc.stderr
    return out


@pytest.fixture(scope="session")
def desk_dataset(tmp_path_factory):
    """The desk-scale 64x64 dataset used by the training-quality tests."""
    out = tmp_path_factory.mktemp("desk_ds") / "ds"
    proc = run_pipeline_cli(
        "gen", "--n", "1200", "--grid", "64x64", "--seed", "101", "--out", str(out)
    )
    assert proc.returncode == 0, proc.stderr
    return out


def write_default_profile(path: Path, max_mag: float) -> None:
    """The pipeline's synthetic angle profile, serialized for its noise CLI."""
    edges = np.linspace(0.0, max_mag, 11)
    centers = 0.5 * (edges[:-1] + edges[1:])
    payload = {
        "bin_edges": edges.tolist(),
        "bin_mean_angle": (0.5 / (1.0 + centers)).tolist(),
        "bin_count": [0] * 10,
    }
    path.write_text(json.dumps(payload))
