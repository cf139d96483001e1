"""Randomized boundary value problems and the labeled reference dataset."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .fields import BCMap, Grid2D, ScalarImage, VectorField2D, write_field, write_pgm
from .solver import SolverConfig, SolverError, assemble, solve
from .warper import warp

log = logging.getLogger(__name__)

ALLOWED_NU = (0.0, 0.25, 0.49)


@dataclass(frozen=True)
class BvpParams:
    k_min: int = 1
    k_max: int = 4
    mag_min: float = 2.0
    mag_max: float = 10.0

    def __post_init__(self):
        if not (1 <= self.k_min <= self.k_max):
            raise ValueError("need 1 <= k_min <= k_max")
        if not (0.0 < self.mag_min <= self.mag_max):
            raise ValueError("need 0 < mag_min <= mag_max")


@dataclass(frozen=True)
class BvpSpec:
    seed: int
    grid: Grid2D
    nu: float
    handles: tuple[tuple[tuple[int, int], tuple[float, float]], ...]  # ((x, y), (ux, uy))
    max_magnitude: float = 10.0

    def __post_init__(self):
        for (x, y), (hx, hy) in self.handles:
            if np.hypot(hx, hy) > self.max_magnitude + 1e-12:
                raise ValueError(f"handle magnitude at ({x}, {y}) exceeds {self.max_magnitude}")
            if not (0 <= x < self.grid.width and 0 <= y < self.grid.height):
                raise ValueError(f"handle ({x}, {y}) outside the grid")


def bc_from_spec(spec: BvpSpec) -> BCMap:
    """Zero outer two-pixel ring plus the spec's handle displacements."""
    grid = spec.grid
    dirichlet = ~grid.interior_mask(2)
    prescribed = np.zeros(grid.shape + (2,))
    d = dirichlet.copy()
    for (x, y), (hx, hy) in spec.handles:
        d[y, x] = True
        prescribed[y, x] = (hx, hy)
    return BCMap(grid, d, prescribed, magnitude_cap=spec.max_magnitude)


def random_bvp(
    seed: int, grid: Grid2D, nu: float, params: BvpParams = BvpParams()
) -> tuple[BvpSpec, BCMap]:
    """K ~ U{k_min..k_max} interior handles with random direction and magnitude."""
    if nu not in ALLOWED_NU:
        raise ValueError(f"nu must be one of {ALLOWED_NU}, got {nu}")
    if grid.width < 7 or grid.height < 7:
        raise ValueError("grid too small to place interior handles")
    rng = np.random.default_rng(seed)
    k = int(rng.integers(params.k_min, params.k_max + 1))
    handles = []
    taken = set()
    while len(handles) < k:
        x = int(rng.integers(2, grid.width - 2))
        y = int(rng.integers(2, grid.height - 2))
        if (x, y) in taken:
            continue
        taken.add((x, y))
        angle = rng.uniform(0.0, 2.0 * np.pi)
        mag = rng.uniform(params.mag_min, params.mag_max)
        handles.append(((x, y), (mag * np.cos(angle), mag * np.sin(angle))))
    spec = BvpSpec(seed, grid, nu, tuple(handles), max_magnitude=params.mag_max)
    return spec, bc_from_spec(spec)


def central_bvp(grid: Grid2D, displacement: tuple[float, float], nu: float) -> tuple[BvpSpec, BCMap]:
    """Single displaced central pixel, zero ring: the reference vortex case."""
    spec = BvpSpec(
        seed=0,
        grid=grid,
        nu=nu,
        handles=(((grid.width // 2, grid.height // 2), displacement),),
        max_magnitude=max(10.0, float(np.hypot(*displacement))),
    )
    return spec, bc_from_spec(spec)


def synthetic_texture(grid: Grid2D, seed: int = 0, smoothing: float = 2.0) -> ScalarImage:
    """Reproducible textured image: smoothed uniform noise stretched to [0, 1]."""
    from scipy.ndimage import gaussian_filter

    rng = np.random.default_rng(seed)
    raw = gaussian_filter(rng.uniform(size=grid.shape), smoothing, mode="wrap")
    lo, hi = raw.min(), raw.max()
    return ScalarImage(grid, (raw - lo) / (hi - lo))


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetRecord:
    id: int
    nu: float
    seed: int
    src: str
    tgt: str
    field: str
    split: str
    registered: str | None = None

    def to_json(self) -> str:
        payload = {
            "id": self.id,
            "nu": self.nu,
            "seed": self.seed,
            "src": self.src,
            "tgt": self.tgt,
            "field": self.field,
            "split": self.split,
        }
        if self.registered is not None:
            payload["registered"] = self.registered
        return json.dumps(payload, sort_keys=False)

    @classmethod
    def from_json(cls, line: str) -> "DatasetRecord":
        d = json.loads(line)
        return cls(
            d["id"], d["nu"], d["seed"], d["src"], d["tgt"], d["field"], d["split"],
            d.get("registered"),
        )


def split_for_id(record_id: int) -> str:
    """Stable 90/10 split by hash of the record id (unchanged when n grows)."""
    digest = hashlib.sha256(str(record_id).encode("ascii")).digest()
    return "val" if digest[0] % 10 == 0 else "train"


def _record_inputs(dataset_seed: int, record_id: int, nu_set: tuple[float, ...]):
    rng = np.random.default_rng([dataset_seed, record_id])
    nu = float(rng.choice(np.asarray(sorted(nu_set))))
    bvp_seed = int(rng.integers(0, 2**63))
    return nu, bvp_seed


def _compute_record(args):
    dataset_seed, record_id, grid, nu_set, params, source_intensity = args
    nu, bvp_seed = _record_inputs(dataset_seed, record_id, nu_set)
    _, bc = random_bvp(bvp_seed, grid, nu, params)
    try:
        u = solve(assemble(bc, nu))
    except SolverError as exc:
        log.error("record %d skipped: %s", record_id, exc)
        return None
    source = ScalarImage(grid, source_intensity)
    target = warp(source, u)
    return record_id, nu, bvp_seed, u, target


def generate_dataset(
    n: int,
    grid: Grid2D,
    source: ScalarImage,
    nu_set: tuple[float, ...],
    seed: int,
    out_dir,
    params: BvpParams = BvpParams(),
    jobs: int = 1,
) -> list[DatasetRecord]:
    """Solve n random BVPs, warp the source, write files plus a JSONL manifest.

    Every record is fully determined by (seed, id); output bytes do not depend
    on the worker count. Failed solves are logged and skipped, never silently
    dropped: the manifest then has fewer lines than n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if source.grid.shape != grid.shape:
        raise ValueError("source image does not match the grid")
    out = Path(out_dir)
    (out / "fields").mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(parents=True, exist_ok=True)

    src_rel = "images/source.pgm"
    write_pgm(source, out / src_rel)

    work = [
        (seed, rid, grid, tuple(nu_set), params, np.asarray(source.intensity))
        for rid in range(n)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_compute_record, work, chunksize=4))
    else:
        results = [_compute_record(w) for w in work]

    records = []
    for res in results:
        if res is None:
            continue
        record_id, nu, bvp_seed, u, target = res
        field_rel = f"fields/{record_id:05d}.efd"
        tgt_rel = f"images/{record_id:05d}_tgt.pgm"
        write_field(u, out / field_rel)
        write_pgm(target, out / tgt_rel)
        records.append(
            DatasetRecord(
                id=record_id,
                nu=nu,
                seed=bvp_seed,
                src=src_rel,
                tgt=tgt_rel,
                field=field_rel,
                split=split_for_id(record_id),
            )
        )

    with open(out / "manifest.jsonl", "w") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")
    return records


def read_manifest(path) -> list[DatasetRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(DatasetRecord.from_json(line))
    return records
