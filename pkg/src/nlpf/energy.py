"""
Discrete energy, its convex splitting, the pseudo energy and the half-step
chemical potential of the second-order scheme.

With J = J_c - J_e and ||.||_p carrying the h^2 weight,

    F(phi)   = 1/4 ||phi||_4^4 + (g_c - g_e)/2 ||phi||_2^2
               + [J*1]/2 ||phi||_2^2 - h^2/2 <phi, [J*phi]>
    F_c(phi) = 1/4 ||phi||_4^4 + B_c/2 ||phi||_2^2,        B_c = [J_c*1] + g_c
    F_e(phi) = ([J_e*1] + g_e)/2 ||phi||_2^2 + h^2/2 <phi, [J*phi]>

The time stepper may add S/2 ||phi||_2^2 to both parts (S >= 0 keeps both
convex). The "stabilized" splitting uses S = [J_c*1]; with it the scheme
treats (2[J_c*1] + g_c) phi implicitly and ([J_c*1] + [J_e*1] + g_e) phi
explicitly. "minimal" uses S = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nlpf.convolution import KernelGrid
from nlpf.grid import norm_p

EQUATIONS = ("nac", "nch")
SPLITTINGS = ("stabilized", "minimal")


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters paired with the kernel masses they combine with.

    ``gamma_0 > 0`` (positive effective diffusion) is enforced; ``alpha_0 =
    B_c - 3 B_e`` is only reported. ``stabilization`` is the extra S added
    to both halves of the splitting.
    """

    equation: str
    gamma_c: float
    gamma_e: float
    jc_one: float
    je_one: float
    M: float = 1.0
    stabilization: float = 0.0

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise ValueError(f"equation must be one of {EQUATIONS}, got {self.equation!r}")
        if self.gamma_c < 0 or self.gamma_e < 0:
            raise ValueError(f"gamma_c and gamma_e must be non-negative, got {self.gamma_c}, {self.gamma_e}")
        if self.stabilization < 0:
            raise ValueError(f"stabilization must be non-negative, got {self.stabilization}")
        if self.M < 0:
            raise ValueError(f"mobility M must be non-negative, got {self.M}")
        if not self.gamma_0 > 0:
            raise ValueError(
                "positivity condition violated: gamma_c - gamma_e + [J_c*1] - [J_e*1] = "
                f"{self.gamma_0!r} must be > 0"
            )

    @classmethod
    def for_kernel(
        cls,
        kernel: KernelGrid,
        equation: str,
        gamma_c: float = 0.0,
        gamma_e: float = 0.0,
        M: float = 1.0,
        splitting: str = "stabilized",
    ) -> "ModelParams":
        if splitting not in SPLITTINGS:
            raise ValueError(f"splitting must be one of {SPLITTINGS}, got {splitting!r}")
        stab = kernel.jc_one if splitting == "stabilized" else 0.0
        return cls(equation, gamma_c, gamma_e, kernel.jc_one, kernel.je_one, M, stab)

    @property
    def B_c(self) -> float:
        return self.jc_one + self.gamma_c

    @property
    def B_e(self) -> float:
        return self.je_one + self.gamma_e

    @property
    def implicit_coef(self) -> float:
        return self.B_c + self.stabilization

    @property
    def explicit_coef(self) -> float:
        return self.B_e + self.stabilization

    @property
    def alpha_0(self) -> float:
        return self.B_c - 3.0 * self.B_e

    @property
    def gamma_0(self) -> float:
        return self.gamma_c - self.gamma_e + (self.jc_one - self.je_one)


def _nonlocal(phi: np.ndarray, kernel: KernelGrid) -> float:
    # h^2 <phi, [J*phi]>
    h = kernel.grid.h
    return float(h * h * np.sum(phi * kernel.apply(phi, "j")))


def energy(phi: np.ndarray, kernel: KernelGrid, params: ModelParams) -> float:
    h2 = kernel.grid.h ** 2
    l4 = h2 * np.sum(phi**4)
    l2 = h2 * np.sum(phi * phi)
    return float(
        0.25 * l4
        + 0.5 * (params.gamma_c - params.gamma_e) * l2
        + 0.5 * kernel.one("j") * l2
        - 0.5 * _nonlocal(phi, kernel)
    )


def energy_convex(phi: np.ndarray, kernel: KernelGrid, params: ModelParams) -> float:
    h2 = kernel.grid.h ** 2
    return float(0.25 * h2 * np.sum(phi**4) + 0.5 * params.B_c * h2 * np.sum(phi * phi))


def energy_concave(phi: np.ndarray, kernel: KernelGrid, params: ModelParams) -> float:
    h2 = kernel.grid.h ** 2
    return float(0.5 * params.B_e * h2 * np.sum(phi * phi) + 0.5 * _nonlocal(phi, kernel))


def pseudo_energy(phi_k: np.ndarray, phi_kp1: np.ndarray, kernel: KernelGrid, params: ModelParams) -> float:
    """F(phi^{k+1}) plus the non-negative increment term."""
    d = phi_kp1 - phi_k
    h2 = kernel.grid.h ** 2
    incr = 0.25 * (params.B_c + params.B_e) * h2 * np.sum(d * d) + 0.25 * _nonlocal(d, kernel)
    return energy(phi_kp1, kernel, params) + float(incr)


def pseudo_energy_sharp(phi_k: np.ndarray, phi_kp1: np.ndarray, kernel: KernelGrid, params: ModelParams) -> float:
    """F(phi^{k+1}) + 1/4 ((B_e + S) ||d||_2^2 + h^2 <d, [J*d]>), d = phi^{k+1} - phi^k.

    Testing the scheme against w^{k+1/2} gives exactly
    E(k, k+1) + dissipation <= E(k-1, k) for this form. It coincides with
    :func:`pseudo_energy` when S = [J_c*1] and gamma_c = 0.
    """
    d = phi_kp1 - phi_k
    h2 = kernel.grid.h ** 2
    incr = 0.25 * params.explicit_coef * h2 * np.sum(d * d) + 0.25 * _nonlocal(d, kernel)
    return energy(phi_kp1, kernel, params) + float(incr)


def eta(phi_a: np.ndarray, phi_b: np.ndarray) -> np.ndarray:
    """Second-order cubic 1/4 (a^2 + b^2)(a + b)."""
    return 0.25 * (phi_a * phi_a + phi_b * phi_b) * (phi_a + phi_b)


def extrapolate_half(phi_km1: np.ndarray, phi_k: np.ndarray) -> np.ndarray:
    return 1.5 * phi_k - 0.5 * phi_km1


def explicit_part(phi_km1: np.ndarray, phi_k: np.ndarray, kernel: KernelGrid, params: ModelParams) -> np.ndarray:
    """Every term of w^{k+1/2} that does not involve phi^{k+1}:
    (B_c+S)/2 phi^k - (B_e+S) phi_hat - [J * phi_hat]."""
    phi_hat = extrapolate_half(phi_km1, phi_k)
    return 0.5 * params.implicit_coef * phi_k - params.explicit_coef * phi_hat - kernel.apply(phi_hat, "j")


def chemical_potential_halfstep(
    phi_km1: np.ndarray,
    phi_k: np.ndarray,
    phi_kp1: np.ndarray,
    kernel: KernelGrid,
    params: ModelParams,
) -> np.ndarray:
    phi_half = 0.5 * (phi_k + phi_kp1)
    phi_hat = extrapolate_half(phi_km1, phi_k)
    return (
        eta(phi_k, phi_kp1)
        + params.implicit_coef * phi_half
        - params.explicit_coef * phi_hat
        - kernel.apply(phi_hat, "j")
    )


def l4_apriori_bound(phi0: np.ndarray, kernel: KernelGrid, params: ModelParams) -> float:
    """Uniform-in-time bound on ||phi^k||_4 implied by the energy law:
    (8 (F(phi^0) + (g_c - g_e - 2[J_e*1])^2 / 2 |Omega|))^(1/4)."""
    c = params.gamma_c - params.gamma_e - 2.0 * params.je_one
    total = energy(phi0, kernel, params) + 0.5 * c * c * kernel.grid.area
    return float((8.0 * max(total, 0.0)) ** 0.25)


def l4_norm(phi: np.ndarray, h: float) -> float:
    return norm_p(phi, h, 4)
