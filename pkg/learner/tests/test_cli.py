"""Command-line plumbing on tiny datasets: fast runs, exit codes, artifacts."""

import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from elastolearn import read_efd
from elastolearn.cli import main

from conftest import run_pipeline_cli, write_default_profile


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def nu_model(small_dataset, tmp_path_factory):
    """A quickly trained regressor checkpoint shared by the read-only tests."""
    out = tmp_path_factory.mktemp("models") / "nu.pt"
    result = CliRunner().invoke(
        main,
        [
            "train-nu", "--manifest", str(small_dataset / "manifest.jsonl"),
            "--out", str(out), "--epochs", "2", "--width-factor", "8",
        ],
    )
    assert result.exit_code == 0, result.output
    return out


class TestTrainReg:
    def test_trains_and_exports_val_fields(self, runner, small_dataset, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(
            main,
            [
                "train-reg", "--manifest", str(small_dataset / "manifest.jsonl"),
                "--out-dir", str(out), "--epochs", "2", "--width-factor", "8",
                "--lr", "1e-3",
            ],
        )
        assert result.exit_code == 0, result.output
        assert (out / "models" / "registration.pt").is_file()
        exported = list((out / "predicted").glob("*.efd"))
        manifest = [
            json.loads(line)
            for line in (small_dataset / "manifest.jsonl").read_text().splitlines()
        ]
        n_val = sum(r["split"] == "val" for r in manifest)
        assert len(exported) == n_val
        planes = read_efd(exported[0])
        assert planes.shape == (2, 32, 32)
        assert "val RMSE" in result.output

    def test_missing_manifest_fails_validation(self, runner, tmp_path):
        result = runner.invoke(
            main, ["train-reg", "--manifest", str(tmp_path / "nope.jsonl"), "--out-dir", str(tmp_path)]
        )
        assert result.exit_code != 0


class TestTrainNu:
    def test_checkpoint_written(self, nu_model):
        assert nu_model.is_file()

    def test_noise_variant_via_pipeline_overlay(self, runner, small_dataset, tmp_path):
        # overlay a few training fields with the pipeline's noise command,
        # then train the 5 percent variant from that directory
        manifest = small_dataset / "manifest.jsonl"
        records = [json.loads(line) for line in manifest.read_text().splitlines()]
        noisy_dir = tmp_path / "noisy"
        noisy_dir.mkdir()
        profile = tmp_path / "profile.json"
        write_default_profile(profile, max_mag=10.0)
        for rec in records:
            proc = run_pipeline_cli(
                "noise", "--field", str(small_dataset / rec["field"]),
                "--profile", str(profile), "--alpha", "0.05",
                "--seed", str(rec["id"]),
                "--out", str(noisy_dir / f"{rec['id']:05d}.efd"),
            )
            assert proc.returncode == 0, proc.stderr
        out = tmp_path / "nu_a05.pt"
        result = runner.invoke(
            main,
            [
                "train-nu", "--manifest", str(manifest), "--out", str(out),
                "--noise-alpha", "0.05", "--field-dir", str(noisy_dir),
                "--epochs", "2", "--width-factor", "8",
            ],
        )
        assert result.exit_code == 0, result.output
        assert "alpha=0.05" in result.output
        assert out.is_file()


class TestPredict:
    def test_emits_json_lines_in_range(self, runner, small_dataset, nu_model):
        fields = sorted((small_dataset / "fields").glob("*.efd"))[:3]
        result = runner.invoke(
            main, ["predict", "--model", str(nu_model)] + [str(f) for f in fields]
        )
        assert result.exit_code == 0, result.output
        lines = [json.loads(line) for line in result.output.strip().splitlines()]
        assert len(lines) == 3
        for entry in lines:
            assert 0.0 < entry["nu"] < 0.5

    def test_malformed_field_fails(self, runner, nu_model, tmp_path):
        bad = tmp_path / "bad.efd"
        bad.write_bytes(b"nonsense")
        result = runner.invoke(main, ["predict", "--model", str(nu_model), str(bad)])
        assert result.exit_code != 0
        assert "bad.efd" in result.output


class TestGradcam:
    def test_writes_normalized_heatmap(self, runner, small_dataset, nu_model, tmp_path):
        field = sorted((small_dataset / "fields").glob("*.efd"))[0]
        out = tmp_path / "cam.efd"
        result = runner.invoke(
            main,
            ["gradcam", "--model", str(nu_model), "--field", str(field), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        cam = read_efd(out)
        assert cam.shape == (1, 32, 32)
        assert cam.min() >= 0.0 and cam.max() <= 1.0
