"""Shared fixtures and independent loop-based reference implementations.

The naive_* functions and dense_reference_system deliberately re-derive the
difference equations term by term with explicit Python loops; they must stay
independent of the vectorized implementations they check.
"""

import numpy as np
import pytest

from elastoprobe import BCMap, Grid2D, VectorField2D


def rand_field(grid: Grid2D, rng: np.random.Generator, scale: float = 1.0) -> VectorField2D:
    return VectorField2D(
        grid,
        scale * rng.standard_normal(grid.shape),
        scale * rng.standard_normal(grid.shape),
    )


def naive_laplacian(comp: np.ndarray, dx: float, dy: float) -> np.ndarray:
    h, w = comp.shape
    out = np.zeros((h, w))
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            out[y, x] = (comp[y, x + 1] - 2 * comp[y, x] + comp[y, x - 1]) / dx**2 + (
                comp[y + 1, x] - 2 * comp[y, x] + comp[y - 1, x]
            ) / dy**2
    return out


def naive_cross(comp: np.ndarray, dx: float, dy: float) -> np.ndarray:
    h, w = comp.shape
    out = np.zeros((h, w))
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            out[y, x] = (
                comp[y + 1, x + 1] - comp[y - 1, x + 1] - comp[y + 1, x - 1] + comp[y - 1, x - 1]
            ) / (4 * dx * dy)
    return out


def naive_second_x(comp: np.ndarray, dx: float) -> np.ndarray:
    h, w = comp.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(1, w - 1):
            out[y, x] = (comp[y, x + 1] - 2 * comp[y, x] + comp[y, x - 1]) / dx**2
    return out


def naive_second_y(comp: np.ndarray, dy: float) -> np.ndarray:
    h, w = comp.shape
    out = np.zeros((h, w))
    for y in range(1, h - 1):
        for x in range(w):
            out[y, x] = (comp[y + 1, x] - 2 * comp[y, x] + comp[y - 1, x]) / dy**2
    return out


def dense_reference_system(bc: BCMap, nu: float):
    """Dense A, b built pixel by pixel from the two difference equations.

    Uses the same unknown ordering as the production assembly (interleaved
    x/y per free pixel, row-major) so matrices are directly comparable. Each
    equation is negated, matching the production sign convention.
    """
    grid = bc.grid
    dx, dy = grid.dx, grid.dy
    free_list = [
        (y, x)
        for y in range(grid.height)
        for x in range(grid.width)
        if not bc.dirichlet[y, x]
    ]
    index = {pix: k for k, pix in enumerate(free_list)}
    n = 2 * len(free_list)
    A = np.zeros((n, n))
    b = np.zeros(n)

    def add(row, y, x, comp, coef):
        if bc.dirichlet[y, x]:
            b[row] -= coef * bc.prescribed[y, x, comp]
        else:
            A[row, 2 * index[(y, x)] + comp] += coef

    for (y, x), k in index.items():
        rx, ry = 2 * k, 2 * k + 1
        # x equation: 2(1-nu) d2/dx2 ux + (1-2nu) d2/dy2 ux + cross(uy), negated
        add(rx, y, x + 1, 0, -2 * (1 - nu) / dx**2)
        add(rx, y, x, 0, 4 * (1 - nu) / dx**2)
        add(rx, y, x - 1, 0, -2 * (1 - nu) / dx**2)
        add(rx, y + 1, x, 0, -(1 - 2 * nu) / dy**2)
        add(rx, y, x, 0, 2 * (1 - 2 * nu) / dy**2)
        add(rx, y - 1, x, 0, -(1 - 2 * nu) / dy**2)
        add(rx, y + 1, x + 1, 1, -1 / (4 * dx * dy))
        add(rx, y - 1, x + 1, 1, 1 / (4 * dx * dy))
        add(rx, y + 1, x - 1, 1, 1 / (4 * dx * dy))
        add(rx, y - 1, x - 1, 1, -1 / (4 * dx * dy))
        # y equation: 2(1-nu) d2/dy2 uy + (1-2nu) d2/dx2 uy + cross(ux), negated
        add(ry, y + 1, x, 1, -2 * (1 - nu) / dy**2)
        add(ry, y, x, 1, 4 * (1 - nu) / dy**2)
        add(ry, y - 1, x, 1, -2 * (1 - nu) / dy**2)
        add(ry, y, x + 1, 1, -(1 - 2 * nu) / dx**2)
        add(ry, y, x, 1, 2 * (1 - 2 * nu) / dx**2)
        add(ry, y, x - 1, 1, -(1 - 2 * nu) / dx**2)
        add(ry, y + 1, x + 1, 0, -1 / (4 * dx * dy))
        add(ry, y - 1, x + 1, 0, 1 / (4 * dx * dy))
        add(ry, y + 1, x - 1, 0, 1 / (4 * dx * dy))
        add(ry, y - 1, x - 1, 0, -1 / (4 * dx * dy))
    return A, b, free_list


def random_bc(grid: Grid2D, rng: np.random.Generator, n_handles: int = 3, mag: float = 5.0) -> BCMap:
    """Zero two-pixel ring plus a few random interior handles."""
    dirichlet = ~grid.interior_mask(2)
    prescribed = np.zeros(grid.shape + (2,))
    for _ in range(n_handles):
        x = int(rng.integers(2, grid.width - 2))
        y = int(rng.integers(2, grid.height - 2))
        dirichlet[y, x] = True
        prescribed[y, x] = rng.uniform(-mag, mag, size=2)
    return BCMap(grid, dirichlet, prescribed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
