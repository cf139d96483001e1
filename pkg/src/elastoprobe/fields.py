"""Grid-aligned field types, elementary difference operators, and field I/O.

Conventions (fixed, asserted in tests):
  * arrays are indexed [row, col] = [y, x], row 0 is the top of the image
  * x increases with the column index, y with the row index
  * grid spacing defaults to 1 pixel in both directions
  * vector fields are stored planar (all ux, then all uy), row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

EFD_MAGIC = b"EFD1"


class FieldError(ValueError):
    """Malformed field data or field file."""


@dataclass(frozen=True)
class Grid2D:
    """Regular pixel grid. Minimum size 5x5 so a 2-deep interior exists."""

    width: int
    height: int
    dx: float = 1.0
    dy: float = 1.0

    def __post_init__(self):
        if self.width < 5 or self.height < 5:
            raise FieldError(f"grid must be at least 5x5, got {self.width}x{self.height}")
        if self.dx <= 0 or self.dy <= 0:
            raise FieldError(f"grid spacing must be positive, got dx={self.dx} dy={self.dy}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def interior_mask(self, depth: int) -> np.ndarray:
        """Boolean mask of pixels at least `depth` pixels away from every edge."""
        m = np.zeros(self.shape, dtype=bool)
        if self.height > 2 * depth and self.width > 2 * depth:
            m[depth:-depth, depth:-depth] = True
        return m


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class VectorField2D:
    """Per-pixel 2-component displacement in pixel units."""

    grid: Grid2D
    ux: np.ndarray
    uy: np.ndarray

    def __post_init__(self):
        ux = np.asarray(self.ux, dtype=np.float64)
        uy = np.asarray(self.uy, dtype=np.float64)
        if ux.shape != self.grid.shape or uy.shape != self.grid.shape:
            raise FieldError(
                f"component shape {ux.shape}/{uy.shape} does not match grid {self.grid.shape}"
            )
        if not (np.isfinite(ux).all() and np.isfinite(uy).all()):
            raise FieldError("displacement components must be finite")
        object.__setattr__(self, "ux", _freeze(ux))
        object.__setattr__(self, "uy", _freeze(uy))

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.ux, self.uy)


@dataclass(frozen=True)
class ScalarImage:
    """Grayscale image with intensities in [0, 1]."""

    grid: Grid2D
    intensity: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.intensity, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise FieldError(f"image shape {v.shape} does not match grid {self.grid.shape}")
        if not np.isfinite(v).all():
            raise FieldError("image intensities must be finite")
        if v.min() < 0.0 or v.max() > 1.0:
            raise FieldError("image intensities must lie in [0, 1]")
        object.__setattr__(self, "intensity", _freeze(v))


@dataclass(frozen=True)
class BCMap:
    """Dirichlet mask plus prescribed displacements.

    The outer two-pixel ring is always Dirichlet so every free pixel has the
    full stencil support available without ghost cells.
    """

    grid: Grid2D
    dirichlet: np.ndarray
    prescribed: np.ndarray  # (h, w, 2), meaningful only where dirichlet
    magnitude_cap: float = np.inf

    def __post_init__(self):
        d = np.asarray(self.dirichlet, dtype=bool)
        p = np.asarray(self.prescribed, dtype=np.float64)
        if d.shape != self.grid.shape:
            raise FieldError("dirichlet mask shape mismatch")
        if p.shape != self.grid.shape + (2,):
            raise FieldError("prescribed array must have shape (h, w, 2)")
        ring = ~self.grid.interior_mask(2)
        if not d[ring].all():
            raise FieldError("outer two-pixel ring must be Dirichlet")
        pv = p[d]
        if not np.isfinite(pv).all():
            raise FieldError("prescribed displacements must be finite")
        mag = np.hypot(pv[:, 0], pv[:, 1])
        if mag.size and mag.max() > self.magnitude_cap:
            raise FieldError(
                f"prescribed magnitude {mag.max():.3g} exceeds cap {self.magnitude_cap:.3g}"
            )
        object.__setattr__(self, "dirichlet", _freeze(d))
        object.__setattr__(self, "prescribed", _freeze(p))

    @property
    def free(self) -> np.ndarray:
        return ~self.dirichlet


@dataclass(frozen=True)
class NuMap:
    """Per-pixel Poisson's-ratio estimates with a validity mask."""

    grid: Grid2D
    nu: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if nu.shape != self.grid.shape or valid.shape != self.grid.shape:
            raise FieldError("nu/valid shape mismatch")
        if not np.isfinite(nu[valid]).all():
            raise FieldError("nu must be finite on valid pixels")
        object.__setattr__(self, "nu", _freeze(nu))
        object.__setattr__(self, "valid", _freeze(valid))


# ---------------------------------------------------------------------------
# difference operators
# ---------------------------------------------------------------------------

def _second_x(a: np.ndarray, dx: float) -> np.ndarray:
    out = np.zeros_like(a)
    out[:, 1:-1] = (a[:, 2:] - 2.0 * a[:, 1:-1] + a[:, :-2]) / (dx * dx)
    return out


def _second_y(a: np.ndarray, dy: float) -> np.ndarray:
    out = np.zeros_like(a)
    out[1:-1, :] = (a[2:, :] - 2.0 * a[1:-1, :] + a[:-2, :]) / (dy * dy)
    return out


def _cross(a: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Mixed second derivative via the 4-point diagonal stencil."""
    out = np.zeros_like(a)
    out[1:-1, 1:-1] = (a[2:, 2:] - a[:-2, 2:] - a[2:, :-2] + a[:-2, :-2]) / (4.0 * dx * dy)
    return out


def laplacian(f: VectorField2D) -> VectorField2D:
    """Componentwise 5-point Laplacian.

    Values on the outermost pixel ring are set to zero and are not meaningful;
    callers mask them.
    """
    g = f.grid
    lx = _second_x(f.ux, g.dx) + _second_y(f.ux, g.dy)
    ly = _second_x(f.uy, g.dx) + _second_y(f.uy, g.dy)
    edge = ~g.interior_mask(1)
    lx[edge] = 0.0
    ly[edge] = 0.0
    return VectorField2D(g, lx, ly)


def grad_div(f: VectorField2D) -> VectorField2D:
    """Gradient of the divergence, with the same stencils the solver assembles.

    x-component: d2ux/dx2 + d2uy/dxdy; y-component: d2uy/dy2 + d2ux/dxdy.
    The outermost ring is zeroed (not meaningful).
    """
    g = f.grid
    gx = _second_x(f.ux, g.dx) + _cross(f.uy, g.dx, g.dy)
    gy = _second_y(f.uy, g.dy) + _cross(f.ux, g.dx, g.dy)
    edge = ~g.interior_mask(1)
    gx[edge] = 0.0
    gy[edge] = 0.0
    return VectorField2D(g, gx, gy)


def divergence(f: VectorField2D) -> np.ndarray:
    """Central first-difference divergence; outermost ring zeroed."""
    g = f.grid
    out = np.zeros(g.shape)
    out[1:-1, 1:-1] = (f.ux[1:-1, 2:] - f.ux[1:-1, :-2]) / (2.0 * g.dx) + (
        f.uy[2:, 1:-1] - f.uy[:-2, 1:-1]
    ) / (2.0 * g.dy)
    return out


# ---------------------------------------------------------------------------
# EFD1 binary container and PGM images
# ---------------------------------------------------------------------------

def _write_efd(path, grid: Grid2D, planes: list[np.ndarray]) -> None:
    header = EFD_MAGIC + struct.pack("<III", grid.width, grid.height, len(planes))
    with open(path, "wb") as fh:
        fh.write(header)
        for p in planes:
            fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def _read_efd(path) -> tuple[int, int, np.ndarray]:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16 or header[:4] != EFD_MAGIC:
            raise FieldError(f"{path}: not an EFD1 file (bad magic)")
        width, height, channels = struct.unpack("<III", header[4:])
        if channels < 1:
            raise FieldError(f"{path}: channel count must be >= 1")
        payload = fh.read()
    expected = width * height * channels * 4
    if len(payload) != expected:
        raise FieldError(
            f"{path}: truncated payload ({len(payload)} bytes, expected {expected})"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(channels, height, width)
    return width, height, data


def read_planes(path) -> tuple[int, int, np.ndarray]:
    """Low-level EFD1 parse: (width, height, planes as a (c, h, w) array).

    No grid-size constraints; read_field adds the domain types on top.
    """
    return _read_efd(path)


def write_field(value: VectorField2D | ScalarImage | NuMap, path) -> None:
    """Write a field to the EFD1 container (payload is single precision)."""
    if isinstance(value, VectorField2D):
        _write_efd(path, value.grid, [value.ux, value.uy])
    elif isinstance(value, ScalarImage):
        _write_efd(path, value.grid, [value.intensity])
    elif isinstance(value, NuMap):
        _write_efd(path, value.grid, [value.nu, value.valid.astype(np.float64)])
    else:
        raise FieldError(f"cannot serialize {type(value).__name__}")


def read_field(path, dx: float = 1.0, dy: float = 1.0) -> VectorField2D | ScalarImage:
    """Read an EFD1 file: 1 channel -> ScalarImage, 2 channels -> VectorField2D."""
    width, height, data = _read_efd(path)
    grid = Grid2D(width, height, dx, dy)
    if data.shape[0] == 1:
        return ScalarImage(grid, np.clip(data[0].astype(np.float64), 0.0, 1.0))
    if data.shape[0] == 2:
        return VectorField2D(grid, data[0].astype(np.float64), data[1].astype(np.float64))
    raise FieldError(f"{path}: unsupported channel count {data.shape[0]}")


def read_nu_map(path, dx: float = 1.0, dy: float = 1.0) -> NuMap:
    """Read a NuMap written by write_field (channel 0 = nu, channel 1 = validity)."""
    width, height, data = _read_efd(path)
    if data.shape[0] != 2:
        raise FieldError(f"{path}: nu map needs 2 channels, got {data.shape[0]}")
    grid = Grid2D(width, height, dx, dy)
    return NuMap(grid, data[0].astype(np.float64), data[1] != 0.0)


def write_pgm(image: ScalarImage, path) -> None:
    """Binary PGM (P5), 8-bit, intensity mapped linearly onto 0..255."""
    raw = np.rint(image.intensity * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.grid.width} {image.grid.height}\n255\n".encode("ascii"))
        fh.write(raw.tobytes())


def read_pgm(path, dx: float = 1.0, dy: float = 1.0) -> ScalarImage:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    # header: magic, width, height, maxval; '#' comments allowed
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FieldError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise FieldError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise FieldError(f"{path}: only maxval 255 supported, got {maxval}")
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise FieldError(f"{path}: truncated PGM raster")
    grid = Grid2D(width, height, dx, dy)
    v = np.frombuffer(raster, dtype=np.uint8).reshape(height, width) / 255.0
    return ScalarImage(grid, v)
