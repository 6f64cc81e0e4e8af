"""
Periodic cell-centered grids and the finite-difference calculus on them.

Grid functions are plain ``numpy`` arrays of shape ``(m, n)`` indexed as
``a[i, j]`` with ``i`` the x-index. Periodicity is implicit: every stencil wraps
with ``np.roll``. East-west edge functions ``u[i, j]`` live at ``(i+1/2, j)``,
north-south edge functions ``v[i, j]`` at ``(i, j+1/2)``.

Conventions:
    inner_product(a, b)  raw sum  sum_ij a_ij b_ij   (callers multiply by h^2)
    norm_p(a, h, p)      (h^2 sum |a|^p)^(1/p)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    """Inconsistent grid geometry or mismatched grid functions."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid of ``m x n`` square cells on
    ``(x0, x0 + L1) x (y0, y0 + L2)``."""

    L1: float
    L2: float
    m: int
    n: int
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise GridError(f"cell counts must be positive, got m={self.m}, n={self.n}")
        if self.L1 <= 0 or self.L2 <= 0:
            raise GridError(f"domain lengths must be positive, got L1={self.L1}, L2={self.L2}")
        hx, hy = self.L1 / self.m, self.L2 / self.n
        if abs(hx - hy) > 1e-14 * hx:
            raise GridError(f"cells are not square: L1/m={hx!r} differs from L2/n={hy!r}")

    @classmethod
    def square(cls, m: int, L: float = 1.0, origin: float = 0.0) -> "GridSpec":
        return cls(L, L, m, m, origin, origin)

    @property
    def h(self) -> float:
        return self.L1 / self.m

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    @property
    def area(self) -> float:
        return self.L1 * self.L2

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """1D cell-center coordinates ``x0 + (i - 1/2) h`` for i = 1..m (and y)."""
        h = self.h
        x = self.x0 + (np.arange(self.m) + 0.5) * h
        y = self.y0 + (np.arange(self.n) + 0.5) * h
        return x, y

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        x, y = self.centers()
        return np.meshgrid(x, y, indexing="ij")

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.L1, self.L2, self.m * factor, self.n * factor, self.x0, self.y0)

    def nests_in(self, fine: "GridSpec") -> bool:
        """True when ``fine`` splits each cell of this grid into 2x2 cells."""
        return (
            fine.m == 2 * self.m
            and fine.n == 2 * self.n
            and np.isclose(fine.L1, self.L1, rtol=1e-14)
            and np.isclose(fine.L2, self.L2, rtol=1e-14)
            and np.isclose(fine.x0, self.x0, rtol=0, atol=1e-14 * self.L1)
            and np.isclose(fine.y0, self.y0, rtol=0, atol=1e-14 * self.L2)
        )


@dataclass
class Field:
    """A cell-centered grid function bound to its grid."""

    grid: GridSpec
    values: np.ndarray
    role: str = "state"
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise GridError(f"values of shape {self.values.shape} do not fit grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise GridError("field has non-finite entries")

    def at(self, i: int, j: int) -> float:
        """Periodic lookup with the 0-based index convention."""
        return float(self.values[i % self.grid.m, j % self.grid.n])


def _check_same(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise GridError(f"grid functions differ in shape: {a.shape} vs {b.shape}")


def inner_product(a: np.ndarray, b: np.ndarray) -> float:
    _check_same(a, b)
    return float(np.sum(a * b))


def norm_p(a: np.ndarray, h: float, p: float = 2) -> float:
    if p < 1:
        raise ValueError(f"norm_p needs p >= 1, got {p}")
    if p == 2:
        return float(np.sqrt(h * h * np.sum(a * a)))
    return float((h * h * np.sum(np.abs(a) ** p)) ** (1.0 / p))


def norm_inf(a: np.ndarray) -> float:
    return float(np.max(np.abs(a)))


def laplacian(a: np.ndarray, h: float) -> np.ndarray:
    """Five-point periodic Laplacian."""
    return (
        np.roll(a, -1, 0) + np.roll(a, 1, 0) + np.roll(a, -1, 1) + np.roll(a, 1, 1) - 4.0 * a
    ) / (h * h)


def laplacian_symbol(m: int, n: int, h: float, real: bool = False) -> np.ndarray:
    """Eigenvalues of :func:`laplacian` on the DFT modes, laid out like ``fft2``
    (or ``rfft2`` when ``real``)."""
    kx = np.arange(m)
    ky = np.arange(n // 2 + 1) if real else np.arange(n)
    sx = np.sin(np.pi * kx / m) ** 2
    sy = np.sin(np.pi * ky / n) ** 2
    return -4.0 / (h * h) * (sx[:, None] + sy[None, :])


def diff_x(a: np.ndarray, h: float) -> np.ndarray:
    """Center-to-edge difference, stored at east-west edges (i+1/2, j)."""
    return (np.roll(a, -1, 0) - a) / h


def diff_y(a: np.ndarray, h: float) -> np.ndarray:
    """Center-to-edge difference, stored at north-south edges (i, j+1/2)."""
    return (np.roll(a, -1, 1) - a) / h


def avg_x(a: np.ndarray) -> np.ndarray:
    return 0.5 * (np.roll(a, -1, 0) + a)


def avg_y(a: np.ndarray) -> np.ndarray:
    return 0.5 * (np.roll(a, -1, 1) + a)


def edge_diff_x(u: np.ndarray, h: float) -> np.ndarray:
    """Edge-to-center difference d_x: (u_{i+1/2} - u_{i-1/2}) / h."""
    return (u - np.roll(u, 1, 0)) / h


def edge_diff_y(v: np.ndarray, h: float) -> np.ndarray:
    return (v - np.roll(v, 1, 1)) / h


def grad_norm_sq(a: np.ndarray, h: float) -> float:
    """||grad_h a||_2^2 = h^2 (sum (D_x a)^2 + sum (D_y a)^2)."""
    dx = diff_x(a, h)
    dy = diff_y(a, h)
    return float(h * h * (np.sum(dx * dx) + np.sum(dy * dy)))


def mean_value(a: np.ndarray) -> float:
    return float(np.mean(a))
