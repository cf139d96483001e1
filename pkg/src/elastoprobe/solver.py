"""Assembly and solution of the discrete plane-strain displacement system.

Each free pixel contributes two equations (x and y). The assembled matrix is
the negated stencil so the diagonal is positive; it is symmetric positive
definite and solved with Jacobi-preconditioned conjugate gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import BCMap, VectorField2D, grad_div, laplacian


class SolverError(RuntimeError):
    """Solver failed to reach the requested residual."""


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_iter: int | None = None  # default: 10 x number of unknowns
    preconditioner: str = "jacobi"  # "jacobi" | "none"

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.preconditioner not in ("jacobi", "none"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass(frozen=True)
class SparseSystem:
    """A u = b over the free pixels' displacement components.

    Unknown ordering is interleaved: unknown 2k is ux and 2k+1 is uy of the
    k-th free pixel in row-major order.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    free_rows: np.ndarray  # row index (y) per free pixel
    free_cols: np.ndarray  # column index (x) per free pixel
    bc: BCMap

    @property
    def n_unknowns(self) -> int:
        return self.rhs.size


def _stencil(nu: float, dx: float, dy: float):
    """Negated coefficients of the two difference equations at a free pixel.

    Returns a list of (dy_off, dx_off, row_comp, col_comp, coefficient).
    """
    ax = 2.0 * (1.0 - nu) / (dx * dx)
    bx = (1.0 - 2.0 * nu) / (dy * dy)
    ay = 2.0 * (1.0 - nu) / (dy * dy)
    by = (1.0 - 2.0 * nu) / (dx * dx)
    c = 1.0 / (4.0 * dx * dy)
    entries = [
        # x-equation
        (0, 0, 0, 0, 2.0 * ax + 2.0 * bx),
        (0, 1, 0, 0, -ax),
        (0, -1, 0, 0, -ax),
        (1, 0, 0, 0, -bx),
        (-1, 0, 0, 0, -bx),
        (1, 1, 0, 1, -c),
        (-1, 1, 0, 1, c),
        (1, -1, 0, 1, c),
        (-1, -1, 0, 1, -c),
        # y-equation
        (0, 0, 1, 1, 2.0 * ay + 2.0 * by),
        (1, 0, 1, 1, -ay),
        (-1, 0, 1, 1, -ay),
        (0, 1, 1, 1, -by),
        (0, -1, 1, 1, -by),
        (1, 1, 1, 0, -c),
        (-1, 1, 1, 0, c),
        (1, -1, 1, 0, c),
        (-1, -1, 1, 0, -c),
    ]
    return entries


def assemble(bc: BCMap, nu: float) -> SparseSystem:
    """Assemble the sparse system for Poisson's ratio nu in [0, 0.5)."""
    if not (0.0 <= nu < 0.5):
        raise ValueError(f"nu must lie in [0, 0.5), got {nu}")
    grid = bc.grid
    free = bc.free
    rows_y, cols_x = np.nonzero(free)
    n_free = rows_y.size
    if n_free == 0:
        raise ValueError("BVP has no free pixels")

    pixel_index = np.full(grid.shape, -1, dtype=np.int64)
    pixel_index[rows_y, cols_x] = np.arange(n_free)

    b = np.zeros(2 * n_free)
    coo_i: list[np.ndarray] = []
    coo_j: list[np.ndarray] = []
    coo_v: list[np.ndarray] = []

    for dy_off, dx_off, rc, cc, coef in _stencil(nu, grid.dx, grid.dy):
        ny = rows_y + dy_off
        nx = cols_x + dx_off
        nidx = pixel_index[ny, nx]  # in bounds: free pixels are >= 2 from edges
        row_ids = 2 * np.arange(n_free) + rc
        is_free = nidx >= 0
        coo_i.append(row_ids[is_free])
        coo_j.append(2 * nidx[is_free] + cc)
        coo_v.append(np.full(is_free.sum(), coef))
        if coef != 0.0 and (~is_free).any():
            known = bc.prescribed[ny[~is_free], nx[~is_free], cc]
            np.subtract.at(b, row_ids[~is_free], coef * known)

    matrix = sp.coo_matrix(
        (np.concatenate(coo_v), (np.concatenate(coo_i), np.concatenate(coo_j))),
        shape=(2 * n_free, 2 * n_free),
    ).tocsr()
    return SparseSystem(matrix, b, rows_y, cols_x, bc)


def solve(system: SparseSystem, cfg: SolverConfig = SolverConfig()) -> VectorField2D:
    """Solve with CG and return the full field (prescribed + solved values)."""
    if not np.isfinite(system.rhs).all():
        raise SolverError("right-hand side contains non-finite values")
    n = system.n_unknowns
    b_norm = np.linalg.norm(system.rhs)
    if b_norm == 0.0:
        x = np.zeros(n)
    else:
        max_iter = cfg.max_iter if cfg.max_iter is not None else 10 * n
        M = None
        if cfg.preconditioner == "jacobi":
            inv_diag = 1.0 / system.matrix.diagonal()
            M = spla.LinearOperator((n, n), matvec=lambda v: inv_diag * v)
        # ask CG for a little margin; the contract check below uses cfg.tol
        x, _ = _cg(system.matrix, system.rhs, rtol=0.5 * cfg.tol, maxiter=max_iter, M=M)
        achieved = np.linalg.norm(system.matrix @ x - system.rhs) / b_norm
        if achieved > cfg.tol:
            raise SolverError(
                f"CG did not converge within {max_iter} iterations "
                f"(relative residual {achieved:.3e} > {cfg.tol:.3e})"
            )

    bc = system.bc
    ux = np.where(bc.dirichlet, bc.prescribed[:, :, 0], 0.0)
    uy = np.where(bc.dirichlet, bc.prescribed[:, :, 1], 0.0)
    ux[system.free_rows, system.free_cols] = x[0::2]
    uy[system.free_rows, system.free_cols] = x[1::2]
    return VectorField2D(bc.grid, ux, uy)


def _cg(A, b, rtol, maxiter, M):
    try:
        return spla.cg(A, b, rtol=rtol, maxiter=maxiter, M=M)
    except TypeError:  # scipy < 1.12 spells the tolerance "tol"
        return spla.cg(A, b, tol=rtol, maxiter=maxiter, M=M)


def residual(field: VectorField2D, bc: BCMap, nu: float) -> float:
    """Max absolute stencil equation value over all free pixels."""
    if field.grid.shape != bc.grid.shape:
        raise ValueError("field/bc grid mismatch")
    lap = laplacian(field)
    gdiv = grad_div(field)
    rx = (1.0 - 2.0 * nu) * lap.ux + gdiv.ux
    ry = (1.0 - 2.0 * nu) * lap.uy + gdiv.uy
    free = bc.free
    if not free.any():
        return 0.0
    return float(max(np.abs(rx[free]).max(), np.abs(ry[free]).max()))
