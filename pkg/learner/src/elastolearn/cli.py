"""Command-line entry points for training and applying the two models."""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np
import torch

from .data import DataError, load_fields, load_pairs, read_efd, write_efd
from .gradcam import grad_cam
from .registration import (
    RegistrationConfig,
    RegistrationUNet,
    field_rmse,
    predict_displacements,
    train_registration,
)
from .regression import RegressionCNN, RegressionConfig, predict_nu, train_regression


@click.group()
def main():
    """Train and run the registration and ratio-regression models."""


def _fail(message: str) -> None:
    raise click.ClickException(message)


@main.command("train-reg")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--epochs", default=200, show_default=True)
@click.option("--width-factor", default=4, show_default=True)
@click.option("--lambda-smooth", default=0.001, show_default=True)
@click.option("--lr", default=1e-4, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train_reg(manifest, out_dir, epochs, width_factor, lambda_smooth, lr, seed):
    """Train registration on the train split; export val predictions as EFD1."""
    try:
        src_tr, tgt_tr, _ = load_pairs(manifest, "train")
        src_va, tgt_va, rec_va = load_pairs(manifest, "val")
    except (DataError, OSError) as exc:
        _fail(str(exc))
    cfg = RegistrationConfig(
        base_filters=max(24 // width_factor, 1),
        epochs=epochs,
        lambda_smooth=lambda_smooth,
        lr=lr,
        seed=seed,
    )
    model, history = train_registration(src_tr, tgt_tr, cfg, log_every=max(epochs // 10, 1))

    out = Path(out_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    (out / "predicted").mkdir(exist_ok=True)
    torch.save(
        {"state": model.state_dict(), "base_filters": cfg.base_filters, "levels": cfg.levels},
        out / "models" / "registration.pt",
    )
    fields = predict_displacements(model, src_va, tgt_va)
    base = Path(manifest).parent
    errs = []
    for rec, field in zip(rec_va, fields):
        write_efd(field, out / "predicted" / f"{rec.id:05d}.efd")
        errs.append(field_rmse(field, read_efd(base / rec.field)))
    click.echo(f"final loss {history[-1].loss:.4f}; val RMSE mean {np.mean(errs):.3f} px")


@main.command("train-nu")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--noise-alpha", default=0.0, show_default=True,
              help="Labels the model variant; fields come from --field-dir.")
@click.option("--field-dir", default=None, type=click.Path(file_okay=False, exists=True),
              help="Directory of <id>.efd overriding the manifest field paths.")
@click.option("--epochs", default=150, show_default=True)
@click.option("--width-factor", default=4, show_default=True)
@click.option("--lr", default=1e-4, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train_nu(manifest, out_path, noise_alpha, field_dir, epochs, width_factor, lr, seed):
    """Train the ratio regressor on the train split's displacement fields."""
    try:
        fields, labels, _ = load_fields(manifest, "train", field_dir)
    except (DataError, OSError) as exc:
        _fail(str(exc))
    cfg = RegressionConfig(base_filters=max(16 // width_factor, 1), epochs=epochs, lr=lr, seed=seed)
    try:
        model, history = train_regression(fields, labels, cfg, log_every=max(epochs // 10, 1))
    except ValueError as exc:
        _fail(str(exc))
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "state": model.state_dict(),
            "base_filters": cfg.base_filters,
            "levels": cfg.levels,
            "noise_alpha": noise_alpha,
        },
        out_path,
    )
    click.echo(f"final mse {history[-1]:.5f} (variant alpha={noise_alpha})")


def _load_regressor(path) -> RegressionCNN:
    ckpt = torch.load(path, map_location="cpu", weights_only=True)
    model = RegressionCNN(ckpt["base_filters"], ckpt["levels"])
    model.load_state_dict(ckpt["state"])
    model.eval()
    return model


@main.command("predict")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.argument("field_files", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
def predict(model_path, field_files):
    """Print one predicted ratio per displacement-field file as JSON lines."""
    model = _load_regressor(model_path)
    for path in field_files:
        try:
            planes = read_efd(path)
        except DataError as exc:
            _fail(str(exc))
        if planes.shape[0] != 2:
            _fail(f"{path}: displacement field needs 2 channels")
        value = float(predict_nu(model, planes[None])[0])
        click.echo(json.dumps({"field": path, "nu": round(value, 6)}))


@main.command("gradcam")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--field", "field_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def gradcam_cmd(model_path, field_path, out_path):
    """Write the normalized activation heatmap as a 1-channel EFD1 file."""
    model = _load_regressor(model_path)
    try:
        planes = read_efd(field_path)
    except DataError as exc:
        _fail(str(exc))
    if planes.shape[0] != 2:
        _fail(f"{field_path}: displacement field needs 2 channels")
    heatmap = grad_cam(model, planes)
    write_efd(heatmap[None], out_path)
    click.echo(f"wrote {out_path} (peak at row {int(np.argmax(heatmap) // heatmap.shape[1])})")


if __name__ == "__main__":
    main()
