"""Randomized property checks runnable without pytest (``nlpf selftest``)."""

from __future__ import annotations

import numpy as np

from nlpf.convolution import conv_direct, conv_fft, kernel_gaussian
from nlpf.energy import ModelParams, energy, energy_concave, energy_convex, pseudo_energy
from nlpf.grid import (
    GridSpec,
    diff_x,
    diff_y,
    edge_diff_x,
    edge_diff_y,
    grad_norm_sq,
    inner_product,
    laplacian,
    norm_inf,
    norm_p,
)
from nlpf.stepper import SchemeState, SolverConfig, step_nch


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def check_summation_by_parts(rng, trials=20):
    worst = 0.0
    for _ in range(trials):
        m = int(rng.integers(4, 24))
        h = 1.0 / m
        phi, f, psi = (rng.standard_normal((m, m)) for _ in range(3))
        worst = max(worst, _rel(h * h * np.sum(diff_x(phi, h) * f), -h * h * np.sum(phi * edge_diff_x(f, h))))
        worst = max(worst, _rel(h * h * np.sum(diff_y(phi, h) * f), -h * h * np.sum(phi * edge_diff_y(f, h))))
        worst = max(worst, _rel(grad_norm_sq(phi, h), -h * h * inner_product(phi, laplacian(phi, h))))
        worst = max(worst, _rel(inner_product(phi, laplacian(psi, h)), inner_product(laplacian(phi, h), psi)))
    return worst <= 1e-11, f"max relative defect {worst:.2e}"


def check_inverse_inequality(rng, trials=20):
    ok = True
    for _ in range(trials):
        m = int(rng.integers(2, 32))
        phi = rng.standard_normal((m, m))
        h = 1.0 / m
        for p in (2, 4):
            ok &= norm_inf(phi) <= h ** (-2.0 / p) * norm_p(phi, h, p)
    return ok, "||phi||_inf <= h^(-2/p) ||phi||_p"


def check_convolution_backends(rng, trials=20):
    worst = 0.0
    for _ in range(trials):
        f = rng.random((16, 16))
        phi = rng.standard_normal((16, 16))
        scale = np.sum(np.abs(f)) * norm_inf(phi) / 256
        worst = max(worst, norm_inf(conv_fft(f, phi, 1 / 16) - conv_direct(f, phi, 1 / 16)) / scale)
    return worst <= 1e-12, f"max scaled difference {worst:.2e}"


def check_exchange(rng, trials=20):
    g = GridSpec.square(16, 1.0, -0.5)
    k = kernel_gaussian(1 / 0.15**2, 0.15, g, images=2)
    worst = 0.0
    for _ in range(trials):
        phi, psi = rng.standard_normal((2, 16, 16))
        worst = max(worst, _rel(inner_product(phi, k.apply(psi, "jc")), inner_product(psi, k.apply(phi, "jc"))))
    return worst <= 1e-11, f"max relative defect {worst:.2e}"


def check_energy_splitting(rng, trials=20):
    g = GridSpec.square(16, 1.0, -0.5)
    k = kernel_gaussian(1 / 0.1**2, 0.1, g, images=2)
    p = ModelParams.for_kernel(k, "nch", 0.3, 1.0)
    worst = 0.0
    ok = True
    for _ in range(trials):
        phi, psi = rng.standard_normal((2, 16, 16))
        fc, fe = energy_convex(phi, k, p), energy_concave(phi, k, p)
        worst = max(worst, abs(fc - fe - energy(phi, k, p)) / (abs(fc) + abs(fe)))
        ok &= pseudo_energy(psi, phi, k, p) >= energy(phi, k, p)
    return ok and worst <= 1e-12, f"max splitting defect {worst:.2e}"


def check_nch_mass_and_uniqueness(rng, trials=3):
    g = GridSpec.square(32, 1.0, -0.5)
    k = kernel_gaussian(400.0, 0.05, g)
    p = ModelParams.for_kernel(k, "nch", 0.0, 1.0)
    worst_mass, worst_gap = 0.0, 0.0
    for _ in range(trials):
        phi0 = 0.3 * rng.standard_normal((32, 32))
        st = SchemeState.initial(phi0)
        a = step_nch(st, 0.1 / 32, k, p, SolverConfig(), guess="current").phi_curr
        b = step_nch(st, 0.1 / 32, k, p, SolverConfig(), guess="extrapolated").phi_curr
        worst_mass = max(worst_mass, abs(g.h**2 * np.sum(a - phi0)))
        worst_gap = max(worst_gap, norm_p(a - b, g.h))
    return worst_mass <= 1e-9 and worst_gap <= 1e-8, f"mass drift {worst_mass:.1e}, two-start gap {worst_gap:.1e}"


CHECKS = [
    ("summation by parts / Green identities", check_summation_by_parts),
    ("inverse inequality", check_inverse_inequality),
    ("FFT vs direct convolution", check_convolution_backends),
    ("convolution exchange identity", check_exchange),
    ("energy splitting and pseudo energy", check_energy_splitting),
    ("nCH mass conservation and unique solvability", check_nch_mass_and_uniqueness),
]


def run_all(seed: int = 0, out=print) -> bool:
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, fn in CHECKS:
        ok, detail = fn(rng)
        all_ok &= bool(ok)
        out(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all_ok
