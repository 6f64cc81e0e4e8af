"""
Vertex-centered kernels and the discrete periodic convolution

    [f * phi]_{i,j} = h^2 sum_{k,l} f_{k+1/2, l+1/2} phi_{i-k, j-l}

The vertex value f_{k+1/2,l+1/2} sits at the physical offset (k h, l h) from
the origin, so the samples g[k, l] = f_{k+1/2,l+1/2} form an ordinary cyclic
sequence and the convolution is a plain circular convolution scaled by h^2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft

from nlpf.grid import GridError, GridSpec

logger = logging.getLogger(__name__)

DIRECT_MAX_SIZE = 32
SYMMETRY_TOL = 1e-12
TAIL_TOL = 1e-12

# FFT worker threads; set from the CLI ``--threads`` flag.
fft_workers: int = 1


class KernelError(ValueError):
    """Kernel samples violate non-negativity, evenness, or periodic truncation."""


def wrapped_offsets(count: int, h: float) -> np.ndarray:
    """Vertex offsets k*h for k = 0..count-1 mapped into (-L/2, L/2]."""
    k = np.arange(count)
    k = np.where(k <= count // 2, k, k - count)
    return k * h


def even_residual(g: np.ndarray) -> float:
    """max |g[k,l] - g[-k,-l]| with periodic indices."""
    reflected = np.roll(np.flip(g, (0, 1)), (1, 1), (0, 1))
    return float(np.max(np.abs(g - reflected)))


def _gaussian_samples(alpha: float, sigma: float, grid: GridSpec, images: int) -> np.ndarray:
    x = wrapped_offsets(grid.m, grid.h)
    y = wrapped_offsets(grid.n, grid.h)
    g = np.zeros(grid.shape)
    # Image sums over neighbouring periods, symmetric so evenness survives.
    for p in range(-images, images + 1):
        gx = np.exp(-((x + p * grid.L1) ** 2) / sigma**2)
        for q in range(-images, images + 1):
            gy = np.exp(-((y + q * grid.L2) ** 2) / sigma**2)
            g += np.outer(gx, gy)
    g *= alpha
    # Subnormal tail samples are numerically zero but stall BLAS.
    g[g < np.finfo(np.float64).tiny] = 0.0
    if images == 0:
        # Edge of the fundamental cell: a visible tail means the naive
        # periodic extension has a kink and image sums are required.
        edge = max(np.max(g[grid.m // 2, :]), np.max(g[:, grid.n // 2]))
        if grid.m > 1 and grid.n > 1 and edge > TAIL_TOL * alpha:
            raise KernelError(
                f"Gaussian with sigma={sigma} does not decay inside the periodic cell "
                f"(edge value {edge:.3e}); pass images >= 1"
            )
    return g


def _circulant_stack(g: np.ndarray) -> np.ndarray:
    # C[k, l', j] = g[k, (j - l') mod n]
    n = g.shape[1]
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    return np.ascontiguousarray(g[:, idx])


def conv_direct(g: np.ndarray, phi: np.ndarray, h: float, stack: Optional[np.ndarray] = None) -> np.ndarray:
    """The convolution as the literal double sum, row by row via circulant matmuls."""
    if g.shape != phi.shape:
        raise GridError(f"kernel {g.shape} and field {phi.shape} live on different grids")
    m = g.shape[0]
    if stack is None:
        stack = _circulant_stack(g)
    out = np.zeros_like(phi, dtype=np.float64)
    for k in range(m):
        out += np.roll(phi, k, 0) @ stack[k]
    return h * h * out


def conv_fft(g: np.ndarray, phi: np.ndarray, h: float, g_hat: Optional[np.ndarray] = None) -> np.ndarray:
    if g.shape != phi.shape:
        raise GridError(f"kernel {g.shape} and field {phi.shape} live on different grids")
    if g_hat is None:
        g_hat = scipy.fft.rfft2(g, workers=fft_workers)
    phi_hat = scipy.fft.rfft2(phi, workers=fft_workers)
    return h * h * scipy.fft.irfft2(g_hat * phi_hat, s=phi.shape, workers=fft_workers)


def resolve_backend(backend: str, shape: tuple[int, int]) -> str:
    if backend == "auto":
        return "direct" if min(shape) <= DIRECT_MAX_SIZE else "fft"
    if backend not in ("direct", "fft"):
        raise ValueError(f"unknown convolution backend {backend!r}")
    return backend


def conv_apply(f: np.ndarray, phi: np.ndarray, h: float, backend: str = "auto") -> np.ndarray:
    if resolve_backend(backend, phi.shape) == "direct":
        return conv_direct(f, phi, h)
    return conv_fft(f, phi, h)


def conv_one(f: np.ndarray, h: float) -> float:
    """[f * 1] = h^2 sum f."""
    return float(h * h * np.sum(f))


@dataclass
class KernelGrid:
    """Vertex samples of the convex part ``jc`` and concave part ``je`` of
    ``J = J_c - J_e``. Treat as immutable once built."""

    grid: GridSpec
    jc: np.ndarray
    je: np.ndarray
    backend: str = "auto"
    _spectra: dict = field(default_factory=dict, repr=False, compare=False)
    _stacks: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.jc = np.asarray(self.jc, dtype=np.float64)
        self.je = np.asarray(self.je, dtype=np.float64)
        for name, g in (("jc", self.jc), ("je", self.je)):
            if g.shape != self.grid.shape:
                raise GridError(f"{name} has shape {g.shape}, grid is {self.grid.shape}")
            if np.any(g < 0):
                raise KernelError(f"{name} has negative samples")
            res = even_residual(g)
            if res > SYMMETRY_TOL:
                raise KernelError(f"{name} is not even under periodic reflection (residual {res:.3e})")
        self.jc_one = conv_one(self.jc, self.grid.h)
        self.je_one = conv_one(self.je, self.grid.h)

    @property
    def j(self) -> np.ndarray:
        return self.jc - self.je

    def component(self, which: str) -> np.ndarray:
        return {"j": self.j, "jc": self.jc, "je": self.je}[which]

    def spectrum(self, which: str = "j") -> np.ndarray:
        if which not in self._spectra:
            self._spectra[which] = scipy.fft.rfft2(self.component(which), workers=fft_workers)
        return self._spectra[which]

    def one(self, which: str = "j") -> float:
        return {"j": self.jc_one - self.je_one, "jc": self.jc_one, "je": self.je_one}[which]

    def apply(self, phi: np.ndarray, which: str = "j", backend: Optional[str] = None) -> np.ndarray:
        """[K * phi] for K one of ``j``, ``jc``, ``je``."""
        backend = resolve_backend(backend or self.backend, phi.shape)
        if phi.shape != self.grid.shape:
            raise GridError(f"field {phi.shape} is not on the kernel grid {self.grid.shape}")
        h = self.grid.h
        if backend == "direct":
            if which not in self._stacks:
                self._stacks[which] = _circulant_stack(self.component(which))
            return conv_direct(self.component(which), phi, h, stack=self._stacks[which])
        return conv_fft(self.component(which), phi, h, g_hat=self.spectrum(which))

    def with_backend(self, backend: str) -> "KernelGrid":
        return KernelGrid(self.grid, self.jc, self.je, backend=backend)


def kernel_gaussian(alpha: float, sigma: float, grid: GridSpec, images: int = 0, backend: str = "auto") -> KernelGrid:
    """``J_c = alpha exp(-(x^2 + y^2)/sigma^2)``, ``J_e = 0``."""
    if alpha <= 0 or sigma <= 0:
        raise KernelError(f"Gaussian needs alpha > 0 and sigma > 0, got alpha={alpha}, sigma={sigma}")
    jc = _gaussian_samples(alpha, sigma, grid, images)
    return KernelGrid(grid, jc, np.zeros(grid.shape), backend=backend)


def kernel_difference_of_gaussians(
    alpha: float,
    sigma1: float,
    beta: float,
    sigma2: float,
    grid: GridSpec,
    images: int = 0,
    backend: str = "auto",
) -> KernelGrid:
    """``J = alpha exp(-r^2/sigma1^2) - beta exp(-r^2/sigma2^2)``, split as
    ``J_c`` (first Gaussian) minus ``J_e`` (second). ``beta = 0`` gives the
    plain Gaussian kernel."""
    if alpha <= 0 or sigma1 <= 0 or sigma2 <= 0 or beta < 0:
        raise KernelError(
            f"invalid difference-of-Gaussians parameters alpha={alpha}, sigma1={sigma1}, "
            f"beta={beta}, sigma2={sigma2}"
        )
    jc = _gaussian_samples(alpha, sigma1, grid, images)
    je = _gaussian_samples(beta, sigma2, grid, images) if beta > 0 else np.zeros(grid.shape)
    return KernelGrid(grid, jc, je, backend=backend)
