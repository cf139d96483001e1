"""Per-pixel Poisson's-ratio estimation from a displacement field.

The estimate is the quotient of the same difference operators the solver
assembles, so on exact solver outputs every valid pixel recovers the ground
truth to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import BCMap, NuMap, VectorField2D, grad_div, laplacian


@dataclass(frozen=True)
class EstimatorConfig:
    # threshold on |lap u|^2, relative to its max over the field
    denom_rel_eps: float = 1e-12
    bc: BCMap | None = None
    clip: tuple[float, float] | None = None  # histogram display range only

    def __post_init__(self):
        if self.denom_rel_eps <= 0:
            raise ValueError("denom_rel_eps must be positive")


def nu_map(field: VectorField2D, cfg: EstimatorConfig = EstimatorConfig()) -> NuMap:
    """nu = 0.5 * (lap(u) . grad_div(u) / |lap(u)|^2 + 1) where well defined.

    Pixels within 2 of the domain edge, Dirichlet pixels (when a BCMap is
    given), and degenerate-denominator pixels are masked invalid. Values are
    not clamped to [0, 0.5]; out-of-range values carry noise information.
    """
    lap = laplacian(field)
    gdiv = grad_div(field)
    denom = lap.ux * lap.ux + lap.uy * lap.uy
    numer = lap.ux * gdiv.ux + lap.uy * gdiv.uy

    valid = field.grid.interior_mask(2)
    if cfg.bc is not None:
        valid = valid & cfg.bc.free
    dmax = denom[valid].max() if valid.any() else 0.0
    # fields whose Laplacian is pure rounding noise (constant/affine inputs)
    # have no information at all; compare against the largest representable
    # stencil response of this field
    g = field.grid
    lap_ceiling = 8.0 * field.magnitude().max() * (1.0 / g.dx**2 + 1.0 / g.dy**2)
    if dmax <= (1e-10 * lap_ceiling) ** 2:
        valid = np.zeros_like(valid)
    else:
        valid = valid & (denom >= cfg.denom_rel_eps * dmax)

    nu = np.zeros(field.grid.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        quotient = numer / denom
    nu[valid] = 0.5 * (quotient[valid] + 1.0)
    return NuMap(field.grid, nu, valid)


def nu_summary(nmap: NuMap, bins: int = 64, clip: tuple[float, float] | None = None) -> dict:
    """Mean/SD/valid fraction over valid pixels plus a histogram.

    SD is the population standard deviation. With no valid pixels the mean,
    sd, and histogram are omitted.
    """
    vals = nmap.nu[nmap.valid]
    out: dict = {"valid_fraction": float(vals.size / nmap.nu.size)}
    if vals.size == 0:
        return out
    out["mean"] = float(vals.mean())
    out["sd"] = float(vals.std())
    lo, hi = clip if clip is not None else (float(vals.min()), float(vals.max()))
    if hi <= lo:
        hi = lo + 1.0  # degenerate constant map: one-bin-wide range
    counts, edges = np.histogram(vals, bins=bins, range=(lo, hi))
    out["histogram"] = {"counts": counts.tolist(), "bin_edges": edges.tolist()}
    return out
