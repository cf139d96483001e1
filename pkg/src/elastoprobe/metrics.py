"""Evaluation metrics and Table-style reports over a dataset manifest."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bvp import DatasetRecord, random_bvp
from .estimator import EstimatorConfig, nu_map
from .fields import FieldError, VectorField2D, read_field
from .noise import NoiseSpec, apply_noise, default_profile

NU_LEVELS = (0.0, 0.25, 0.49)


def rmse(a: VectorField2D, b: VectorField2D) -> float:
    """Root mean squared error over all pixels and both components."""
    if a.grid.shape != b.grid.shape:
        raise FieldError("rmse: grid mismatch")
    d = np.concatenate([(a.ux - b.ux).ravel(), (a.uy - b.uy).ravel()])
    return float(np.sqrt(np.mean(d * d)))


def sd(values) -> float:
    """Population standard deviation (1/N)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("sd of empty input")
    return float(v.std())


def error_magnitude_sd(a: VectorField2D, b: VectorField2D) -> float:
    """Population SD of the per-pixel error magnitudes |a - b|."""
    if a.grid.shape != b.grid.shape:
        raise FieldError("grid mismatch")
    return sd(np.hypot(a.ux - b.ux, a.uy - b.uy).ravel())


@dataclass
class TableCell:
    mean: float | None = None
    sd: float | None = None
    n: int = 0
    error: str | None = None


def _parse_source(source: str) -> tuple[str, float]:
    """'fdm' | 'fdm+noise:<alpha>' | 'registration' -> (kind, alpha)."""
    if source == "fdm":
        return "fdm", 0.0
    if source.startswith("fdm+noise:"):
        return "noise", float(source.split(":", 1)[1])
    if source == "registration":
        return "registration", 0.0
    raise ValueError(f"unknown displacement source {source!r}")


def _record_field(rec: DatasetRecord, base: Path, kind: str, alpha: float, noise_seed: int):
    if kind == "registration":
        if rec.registered is None:
            raise FieldError(f"record {rec.id} has no registered field")
        return read_field(base / rec.registered)
    u = read_field(base / rec.field)
    if kind == "noise":
        profile = default_profile(max(float(u.magnitude().max()), 1e-9))
        u = apply_noise(u, NoiseSpec(alpha, profile, seed=noise_seed))
    return u


def table2_report(
    records: list[DatasetRecord],
    manifest_dir,
    methods: tuple[str, ...] = ("pde",),
    sources: tuple[str, ...] = ("fdm",),
    dnn_predictions: dict | None = None,
    noise_seed: int = 0,
) -> dict:
    """Mean/SD of the per-record nu statistic per (method, source, nu level).

    For the "pde" method the per-record statistic is the nu-map mean; for
    "dnn" it is a prediction looked up in `dnn_predictions` keyed by
    (source, record id). Missing artifacts are reported per cell and the rest
    of the table is still produced.
    """
    base = Path(manifest_dir)
    table: dict[tuple[str, str, float], TableCell] = {}
    for method in methods:
        for source in sources:
            kind, alpha = _parse_source(source)
            per_nu: dict[float, list[float]] = {level: [] for level in NU_LEVELS}
            errors: list[str] = []
            for i, rec in enumerate(records):
                if rec.nu not in per_nu:
                    continue
                try:
                    if method == "pde":
                        sub_seed = int(
                            np.random.SeedSequence([noise_seed, rec.id]).generate_state(1)[0]
                        )
                        u = _record_field(rec, base, kind, alpha, sub_seed)
                        # rebuild the BVP's Dirichlet mask so handle pixels
                        # (where the PDE does not hold) stay out of the stats
                        bc = random_bvp(rec.seed, u.grid, rec.nu)[1]
                        nmap = nu_map(u, EstimatorConfig(bc=bc))
                        vals = nmap.nu[nmap.valid]
                        if vals.size == 0:
                            raise FieldError(f"record {rec.id}: no valid estimator pixels")
                        per_nu[rec.nu].append(float(vals.mean()))
                    elif method == "dnn":
                        preds = dnn_predictions or {}
                        key = (source, rec.id)
                        if key not in preds:
                            raise FieldError(f"record {rec.id}: no DNN prediction for {source}")
                        per_nu[rec.nu].append(float(preds[key]))
                    else:
                        raise ValueError(f"unknown method {method!r}")
                except (FieldError, OSError) as exc:
                    errors.append(str(exc))
            for level in NU_LEVELS:
                vals = np.asarray(per_nu[level])
                cell = TableCell(n=int(vals.size))
                if vals.size:
                    cell.mean = float(vals.mean())
                    cell.sd = float(vals.std())
                if errors:
                    cell.error = "; ".join(errors[:5])
                table[(method, source, level)] = cell
    return {
        "cells": table,
        "methods": tuple(methods),
        "sources": tuple(sources),
        "nu_levels": NU_LEVELS,
    }


def report_csv(report: dict) -> str:
    lines = ["method,source,nu,mean,sd,n"]
    for method in report["methods"]:
        for source in report["sources"]:
            for level in report["nu_levels"]:
                cell = report["cells"][(method, source, level)]
                mean = "" if cell.mean is None else f"{cell.mean:.6f}"
                sdv = "" if cell.sd is None else f"{cell.sd:.6f}"
                lines.append(f"{method},{source},{level},{mean},{sdv},{cell.n}")
    return "\n".join(lines) + "\n"


def report_markdown(report: dict) -> str:
    header = "| Method | Displacement |"
    rule = "|---|---|"
    for level in report["nu_levels"]:
        header += f" nu={level} mean | SD |"
        rule += "---|---|"
    lines = [header, rule]
    for method in report["methods"]:
        for source in report["sources"]:
            row = f"| {method} | {source} |"
            for level in report["nu_levels"]:
                cell = report["cells"][(method, source, level)]
                if cell.mean is None:
                    row += " n/a | n/a |"
                else:
                    row += f" {cell.mean:.2f} | {cell.sd:.2f} |"
            lines.append(row)
    return "\n".join(lines) + "\n"


def report_errors(report: dict) -> list[str]:
    out = []
    for key, cell in report["cells"].items():
        if cell.error:
            out.append(f"{key}: {cell.error}")
    return out
