"""Angle-vs-magnitude error profiles and magnitude-preserving rotational noise."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .fields import FieldError, VectorField2D

N_BINS = 10


@dataclass(frozen=True)
class AngleProfile:
    """Binned mean angular deviation as a function of reference magnitude."""

    bin_edges: np.ndarray  # N_BINS + 1 strictly increasing magnitudes
    bin_mean_angle: np.ndarray  # radians, in [0, pi]
    bin_count: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        angles = np.asarray(self.bin_mean_angle, dtype=np.float64)
        counts = np.asarray(self.bin_count, dtype=np.int64)
        if edges.ndim != 1 or angles.shape != (edges.size - 1,) or counts.shape != angles.shape:
            raise ValueError("profile arrays have inconsistent shapes")
        if not (np.diff(edges) > 0).all():
            raise ValueError("bin edges must be strictly increasing")
        if angles.min() < 0.0 or angles.max() > np.pi:
            raise ValueError("mean angles must lie in [0, pi]")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "bin_mean_angle", angles)
        object.__setattr__(self, "bin_count", counts)

    def angle_at(self, magnitude: np.ndarray) -> np.ndarray:
        """Mean angle of the bin containing each magnitude (clamped to range)."""
        idx = np.searchsorted(self.bin_edges, magnitude, side="right") - 1
        idx = np.clip(idx, 0, self.bin_mean_angle.size - 1)
        return self.bin_mean_angle[idx]

    def to_json(self, path) -> None:
        payload = {
            "bin_edges": self.bin_edges.tolist(),
            "bin_mean_angle": self.bin_mean_angle.tolist(),
            "bin_count": self.bin_count.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "AngleProfile":
        with open(path) as fh:
            payload = json.load(fh)
        return cls(
            np.asarray(payload["bin_edges"]),
            np.asarray(payload["bin_mean_angle"]),
            np.asarray(payload["bin_count"]),
        )


@dataclass(frozen=True)
class NoiseSpec:
    alpha: float
    profile: AngleProfile
    seed: int

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


def angle_between(a, b) -> float:
    """Unsigned angle in [0, pi]; zero vectors give 0 by convention."""
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    if (ax == 0.0 and ay == 0.0) or (bx == 0.0 and by == 0.0):
        return 0.0
    cross = ax * by - ay * bx
    dot = ax * bx + ay * by
    return float(np.arctan2(abs(cross), dot))


def _angles(reference: VectorField2D, predicted: VectorField2D) -> np.ndarray:
    cross = reference.ux * predicted.uy - reference.uy * predicted.ux
    dot = reference.ux * predicted.ux + reference.uy * predicted.uy
    theta = np.arctan2(np.abs(cross), dot)
    zero = (reference.magnitude() == 0.0) | (predicted.magnitude() == 0.0)
    theta[zero] = 0.0
    return theta


def build_profile(
    reference: VectorField2D, predicted: VectorField2D, n_bins: int = N_BINS
) -> AngleProfile:
    """Bin per-pixel angles by reference magnitude (equal-width bins).

    Pixels with zero reference magnitude are excluded.
    """
    if reference.grid.shape != predicted.grid.shape:
        raise FieldError("reference/predicted grid mismatch")
    mag = reference.magnitude()
    keep = mag > 0.0
    if not keep.any():
        raise FieldError("reference field is identically zero")
    theta = _angles(reference, predicted)[keep]
    mags = mag[keep]
    edges = np.linspace(0.0, float(mags.max()), n_bins + 1)
    idx = np.clip(np.searchsorted(edges, mags, side="right") - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=theta, minlength=n_bins)
    means = np.divide(sums, counts, out=np.zeros(n_bins), where=counts > 0)
    return AngleProfile(edges, means, counts)


def profile_scatter(reference: VectorField2D, predicted: VectorField2D) -> np.ndarray:
    """(magnitude, angle) pairs for all pixels with nonzero reference magnitude."""
    mag = reference.magnitude()
    keep = mag > 0.0
    theta = _angles(reference, predicted)[keep]
    return np.column_stack([mag[keep], theta])


def default_profile(max_magnitude: float, theta_max: float = 0.5, n_bins: int = N_BINS) -> AngleProfile:
    """Synthetic profile theta = theta_max / (1 + m) at bin centers.

    Encodes the larger-error-at-smaller-magnitude behaviour of registration
    output; used when no registration run exists.
    """
    if max_magnitude <= 0:
        raise ValueError("max_magnitude must be positive")
    edges = np.linspace(0.0, max_magnitude, n_bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return AngleProfile(edges, theta_max / (1.0 + centers), np.zeros(n_bins, dtype=np.int64))


def apply_noise(reference: VectorField2D, spec: NoiseSpec) -> VectorField2D:
    """Rotate each vector by +/- alpha * theta(|u|); magnitudes are preserved.

    The sign is an independent fair coin per pixel drawn from a counter-based
    generator, deterministic in (seed, field shape).
    """
    if spec.alpha == 0.0:
        return reference
    rng = np.random.Generator(np.random.Philox(spec.seed))
    signs = rng.integers(0, 2, size=reference.grid.shape) * 2 - 1
    theta = spec.alpha * signs * spec.profile.angle_at(reference.magnitude())
    c, s = np.cos(theta), np.sin(theta)
    return VectorField2D(
        reference.grid,
        c * reference.ux - s * reference.uy,
        s * reference.ux + c * reference.uy,
    )


def sweep_alpha(
    labeled_fields: list[tuple[float, VectorField2D]],
    profile: AngleProfile,
    alphas,
    seed: int = 0,
) -> list[dict]:
    """Estimator degradation vs noise level.

    For each alpha and ground-truth nu label: mean and population SD of the
    per-field nu-map means. Rows are plot-ready dicts.
    """
    from .estimator import EstimatorConfig, nu_map

    if not labeled_fields:
        raise ValueError("empty reference set")
    rows = []
    for ai, alpha in enumerate(alphas):
        per_label: dict[float, list[float]] = {}
        for fi, (label, ref) in enumerate(labeled_fields):
            sub_seed = int(np.random.SeedSequence([seed, ai, fi]).generate_state(1)[0])
            noisy = apply_noise(ref, NoiseSpec(alpha, profile, seed=sub_seed))
            nmap = nu_map(noisy, EstimatorConfig())
            vals = nmap.nu[nmap.valid]
            if vals.size:
                per_label.setdefault(label, []).append(float(vals.mean()))
        for label in sorted(per_label):
            means = np.asarray(per_label[label])
            rows.append(
                {
                    "alpha": float(alpha),
                    "nu_true": float(label),
                    "nu_mean": float(means.mean()),
                    "nu_sd": float(means.std()),
                    "n_fields": int(means.size),
                }
            )
    return rows
