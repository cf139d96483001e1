"""Command-line pipeline: dataset generation, solving, warping, estimation, reports.

Exit codes: 0 success, 1 validation error (bad inputs/files), 2 runtime failure.
"""

from __future__ import annotations

import csv
import json
import shutil
import sys
from functools import wraps
from pathlib import Path

import click
import numpy as np

from . import bvp as bvp_mod
from .estimator import EstimatorConfig, nu_map, nu_summary
from .fields import (
    BCMap,
    FieldError,
    Grid2D,
    ScalarImage,
    VectorField2D,
    read_field,
    read_pgm,
    write_field,
    write_pgm,
)
from .metrics import report_csv, report_errors, report_markdown, table2_report
from .noise import AngleProfile, NoiseSpec, apply_noise, build_profile, profile_scatter
from .solver import SolverConfig, SolverError, assemble, residual, solve
from .warper import warp


class ValidationFailure(click.ClickException):
    exit_code = 1


def _guard(fn):
    """Map validation problems to exit 1 and runtime failures to exit 2."""

    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (FieldError, ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
            raise ValidationFailure(str(exc)) from exc
        except (SolverError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)

    return wrapper


def _parse_grid(text: str) -> Grid2D:
    try:
        w, h = (int(t) for t in text.lower().split("x"))
    except Exception:
        raise ValueError(f"--grid expects WxH, got {text!r}")
    return Grid2D(w, h)


def _load_image(path: str) -> ScalarImage:
    if path.endswith(".pgm"):
        return read_pgm(path)
    value = read_field(path)
    if not isinstance(value, ScalarImage):
        raise FieldError(f"{path}: expected a scalar image")
    return value


def _load_vector(path: str) -> VectorField2D:
    value = read_field(path)
    if not isinstance(value, VectorField2D):
        raise FieldError(f"{path}: expected a 2-channel displacement field")
    return value


def load_bc_json(path) -> BCMap:
    """BC description: grid size, ring displacement, and a sparse handle list."""
    with open(path) as fh:
        doc = json.load(fh)
    grid = Grid2D(doc["width"], doc["height"], doc.get("dx", 1.0), doc.get("dy", 1.0))
    ring_value = doc.get("ring_value", [0.0, 0.0])
    dirichlet = ~grid.interior_mask(2)
    prescribed = np.zeros(grid.shape + (2,))
    prescribed[dirichlet] = ring_value
    for h in doc.get("handles", []):
        x, y = int(h["x"]), int(h["y"])
        if not (0 <= x < grid.width and 0 <= y < grid.height):
            raise FieldError(f"{path}: handle ({x}, {y}) outside the grid")
        dirichlet[y, x] = True
        prescribed[y, x] = (float(h["ux"]), float(h["uy"]))
    return BCMap(grid, dirichlet, prescribed)


@click.group()
def main():
    """Linear-elastic displacement pipeline and Poisson's-ratio estimation."""


@main.command()
@click.option("--n", type=int, required=True, help="number of records")
@click.option("--grid", "grid_text", default="64x64", show_default=True)
@click.option("--nu-set", default="0,0.25,0.49", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--src", "src_path", type=click.Path(exists=True), default=None,
              help="source image (PGM or 1-channel EFD); synthesized from the seed if omitted")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@_guard
def gen(n, grid_text, nu_set, seed, src_path, out_dir, jobs):
    """Generate a labeled dataset of reference fields and warped image pairs."""
    grid = _parse_grid(grid_text)
    nus = tuple(float(t) for t in nu_set.split(","))
    for v in nus:
        if v not in bvp_mod.ALLOWED_NU:
            raise ValueError(f"--nu-set values must be among {bvp_mod.ALLOWED_NU}")
    if src_path is not None:
        source = _load_image(src_path)
        if source.grid.shape != grid.shape:
            raise FieldError(f"{src_path}: image size does not match --grid")
    else:
        source = bvp_mod.synthetic_texture(grid, seed)
    records = bvp_mod.generate_dataset(n, grid, source, nus, seed, out_dir, jobs=jobs)
    click.echo(f"wrote {len(records)} records to {out_dir}")


@main.command()
@click.option("--bc", "bc_path", type=click.Path(exists=True), required=True)
@click.option("--nu", type=float, required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.option("--max-iter", type=int, default=None)
@_guard
def solve_cmd(bc_path, nu, out_path, tol, max_iter):
    """Solve one BVP and write the displacement field."""
    bc = load_bc_json(bc_path)
    system = assemble(bc, nu)
    u = solve(system, SolverConfig(tol=tol, max_iter=max_iter))
    write_field(u, out_path)
    click.echo(f"max residual {residual(u, bc, nu):.3e}")


main.add_command(solve_cmd, name="solve")


@main.command("warp")
@click.option("--src", "src_path", type=click.Path(exists=True), required=True)
@click.option("--field", "field_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--fill", type=float, default=0.0, show_default=True)
@_guard
def warp_cmd(src_path, field_path, out_path, fill):
    """Warp a source image with a displacement field."""
    source = _load_image(src_path)
    u = _load_vector(field_path)
    target = warp(source, u, fill=fill)
    if out_path.endswith(".pgm"):
        write_pgm(target, out_path)
    else:
        write_field(target, out_path)


@main.command("estimate-pde")
@click.option("--field", "field_path", type=click.Path(exists=True), required=True)
@click.option("--bc", "bc_path", type=click.Path(exists=True), default=None)
@click.option("--out-map", type=click.Path(), default=None)
@click.option("--out-summary", type=click.Path(), default=None)
@_guard
def estimate_pde(field_path, bc_path, out_map, out_summary):
    """Per-pixel Poisson's-ratio map and summary statistics for a field."""
    u = _load_vector(field_path)
    bc = load_bc_json(bc_path) if bc_path else None
    nmap = nu_map(u, EstimatorConfig(bc=bc))
    summary = nu_summary(nmap)
    if out_map:
        write_field(nmap, out_map)
    text = json.dumps(summary, indent=2)
    if out_summary:
        Path(out_summary).write_text(text + "\n")
    else:
        click.echo(text)


@main.command("noise")
@click.option("--field", "field_path", type=click.Path(exists=True), required=True)
@click.option("--profile", "profile_path", type=click.Path(exists=True), required=True)
@click.option("--alpha", type=float, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@_guard
def noise_cmd(field_path, profile_path, alpha, seed, out_path):
    """Apply magnitude-dependent rotational noise to a displacement field."""
    u = _load_vector(field_path)
    profile = AngleProfile.from_json(profile_path)
    noisy = apply_noise(u, NoiseSpec(alpha, profile, seed))
    write_field(noisy, out_path)


@main.command("profile")
@click.option("--reference", type=click.Path(exists=True), required=True)
@click.option("--predicted", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--scatter", "scatter_path", type=click.Path(), default=None,
              help="also dump per-pixel (magnitude, angle) pairs as CSV")
@_guard
def profile_cmd(reference, predicted, out_path, scatter_path):
    """Build an angle-vs-magnitude error profile from two fields."""
    ref = _load_vector(reference)
    pred = _load_vector(predicted)
    prof = build_profile(ref, pred)
    prof.to_json(out_path)
    if scatter_path:
        pairs = profile_scatter(ref, pred)
        with open(scatter_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["magnitude", "angle"])
            writer.writerows(pairs.tolist())


@main.command("report")
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--methods", default="pde", show_default=True)
@click.option("--sources", default="fdm", show_default=True,
              help="comma list of fdm, fdm+noise:<alpha>, registration")
@click.option("--dnn-predictions", type=click.Path(exists=True), default=None,
              help="JSON: {source: {record_id: nu}}")
@_guard
def report_cmd(manifest, out_dir, methods, sources, dnn_predictions):
    """Aggregate per-record nu statistics into a comparison table."""
    records = bvp_mod.read_manifest(manifest)
    if not records:
        raise ValidationFailure(f"{manifest}: empty manifest")
    preds = None
    if dnn_predictions:
        with open(dnn_predictions) as fh:
            raw = json.load(fh)
        preds = {
            (source, int(rid)): value
            for source, by_id in raw.items()
            for rid, value in by_id.items()
        }
    report = table2_report(
        records,
        Path(manifest).parent,
        methods=tuple(methods.split(",")),
        sources=tuple(sources.split(",")),
        dnn_predictions=preds,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "table2.csv").write_text(report_csv(report))
    (out / "table2.md").write_text(report_markdown(report))
    for err in report_errors(report):
        click.echo(f"missing: {err}", err=True)
    click.echo((out / "table2.md").read_text())


@main.command("export-learner")
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@_guard
def export_learner(manifest, out_dir, split=None):
    """Copy a dataset into the self-contained layout the learner consumes."""
    records = bvp_mod.read_manifest(manifest)
    if not records:
        raise ValidationFailure(f"{manifest}: empty manifest")
    src_base = Path(manifest).parent
    out = Path(out_dir)
    (out / "fields").mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(parents=True, exist_ok=True)
    copied = set()
    with open(out / "manifest.jsonl", "w") as fh:
        for rec in records:
            for rel in filter(None, (rec.src, rec.tgt, rec.field, rec.registered)):
                if rel not in copied:
                    target = out / rel
                    target.parent.mkdir(parents=True, exist_ok=True)
                    shutil.copyfile(src_base / rel, target)
                    copied.add(rel)
            fh.write(rec.to_json())
            fh.write("\n")
    click.echo(f"exported {len(records)} records to {out}")


if __name__ == "__main__":
    main()
