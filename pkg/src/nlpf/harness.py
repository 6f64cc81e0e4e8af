"""
Initial data, grid-to-grid restriction, Cauchy-difference convergence studies
and the phase-separation energy experiment.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from nlpf.config import RunConfig
from nlpf.grid import GridError, GridSpec, norm_p
from nlpf.stepper import DiagnosticsSeries, check_invariants, run

logger = logging.getLogger(__name__)

RESTRICTION = "2x2 cell average"


def initial_sinusoid(grid: GridSpec) -> np.ndarray:
    """0.5 sin(2 pi x) cos(2 pi y) at cell centers."""
    X, Y = grid.mesh()
    return 0.5 * np.sin(2.0 * np.pi * X) * np.cos(2.0 * np.pi * Y)


def initial_random(grid: GridSpec, mean: float, amplitude: float, seed: int) -> np.ndarray:
    """``mean`` plus uniform noise in (-amplitude, amplitude), shifted so the
    cell average is exactly ``mean``."""
    if amplitude <= 0:
        raise ValueError(f"amplitude must be positive, got {amplitude}")
    rng = np.random.default_rng(seed)
    noise = amplitude * rng.uniform(-1.0, 1.0, size=grid.shape)
    noise -= np.mean(noise)
    return mean + noise


def restrict(fine: np.ndarray) -> np.ndarray:
    m, n = fine.shape
    if m % 2 or n % 2:
        raise GridError(f"cannot restrict a {m}x{n} field onto a 2:1 coarse grid")
    return fine.reshape(m // 2, 2, n // 2, 2).mean(axis=(1, 3))


def prolongate(coarse: np.ndarray) -> np.ndarray:
    """Piecewise-constant injection onto the 2:1 refined grid."""
    return np.repeat(np.repeat(coarse, 2, axis=0), 2, axis=1)


def cauchy_error(coarse: np.ndarray, fine: np.ndarray, h_coarse: float) -> float:
    """||coarse - restrict(fine)||_2 with the coarse-grid weight."""
    m, n = coarse.shape
    if fine.shape != (2 * m, 2 * n):
        raise GridError(f"fine grid {fine.shape} does not nest 2:1 in coarse grid {coarse.shape}")
    return norm_p(coarse - restrict(fine), h_coarse, 2)


def convergence_rate(e_coarse: float, e_fine: float) -> float:
    return math.log2(e_coarse / e_fine)


@dataclass
class LevelResult:
    m: int
    h: float
    s: float
    phi: np.ndarray
    series: DiagnosticsSeries
    seconds: float


@dataclass
class StudyRow:
    coarse_m: int
    fine_m: int
    coarse_h: float
    fine_h: float
    error: float
    rate: Optional[float]


@dataclass
class RefinementStudy:
    """Linear refinement path s = C h over doubling grid levels."""

    config: RunConfig
    levels: list
    refinement_constant: float
    T: float
    rows: list = field(default_factory=list)
    results: dict = field(default_factory=dict)

    @classmethod
    def from_config(cls, config: RunConfig) -> "RefinementStudy":
        if not config.levels:
            raise ValueError("study.levels is empty")
        return cls(config, list(config.levels), config.refinement_constant, config.T)

    def __post_init__(self):
        for a, b in zip(self.levels, self.levels[1:]):
            if b != 2 * a:
                raise ValueError(f"study levels must double, got {a} then {b}")

    def errors(self) -> list:
        return [r.error for r in self.rows]

    def rates(self) -> list:
        return [r.rate for r in self.rows]


def run_level(config: RunConfig, m: int, C: Optional[float] = None, T: Optional[float] = None) -> LevelResult:
    grid = config.grid(m)
    kernel = config.kernel(grid)
    params = config.params(kernel)
    C = config.refinement_constant if C is None else C
    T = config.T if T is None else T
    s = C * grid.h
    phi0 = config.initial(grid)
    t0 = time.perf_counter()
    state, series = run(phi0, T, s, kernel, params, config.solver())
    elapsed = time.perf_counter() - t0
    logger.info("level m=%d: %d steps in %.1fs", m, len(series) - 1, elapsed)
    return LevelResult(m, grid.h, s, state.phi_curr, series, elapsed)


def _run_level_job(args):
    config, m, C, T = args
    return run_level(config, m, C, T)


def convergence_study(study: RefinementStudy, workers: int = 1) -> RefinementStudy:
    """Run every level, then fill the Cauchy-error rows and rates."""
    jobs = [(study.config, m, study.refinement_constant, study.T) for m in study.levels]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_level_job, jobs))
    else:
        results = []
        for job in jobs:
            try:
                results.append(_run_level_job(job))
            except Exception:
                logger.error("level m=%d failed", job[1])
                raise
    study.results = {r.m: r for r in results}
    study.rows = []
    prev = None
    for coarse, fine in zip(results, results[1:]):
        err = cauchy_error(coarse.phi, fine.phi, coarse.h)
        rate = convergence_rate(prev, err) if prev is not None else None
        study.rows.append(StudyRow(coarse.m, fine.m, coarse.h, fine.h, err, rate))
        prev = err
    return study


def _h_label(h: float, L: float, m: int) -> str:
    return f"1/{m}" if L == 1.0 else f"{h:.15f}"


def study_csv(study: RefinementStudy) -> str:
    out = ["coarse_h,fine_h,error_l2,rate"]
    for r in study.rows:
        rate = "" if r.rate is None else f"{r.rate:.17g}"
        out.append(f"{r.coarse_h:.17g},{r.fine_h:.17g},{r.error:.17g},{rate}")
    if not study.rows and study.levels:
        h = study.config.L1 / study.levels[0]
        out.append(f"{h:.17g},,,")
    return "\n".join(out) + "\n"


def study_text(study: RefinementStudy) -> str:
    L = study.config.L1
    lines = [
        f"# equation={study.config.equation} T={study.T!r} s=C*h C={study.refinement_constant!r} "
        f"splitting={study.config.splitting} restriction={RESTRICTION}",
        f"{'coarse h':>12} {'fine h':>12} {'||e_A||_2':>20} {'rate':>20}",
    ]
    for r in study.rows:
        rate = "-" if r.rate is None else f"{r.rate:.15f}"
        lines.append(
            f"{_h_label(r.coarse_h, L, r.coarse_m):>12} {_h_label(r.fine_h, L, r.fine_m):>12} "
            f"{r.error:>20.15f} {rate:>20}"
        )
    if not study.rows and study.levels:
        m = study.levels[0]
        lines.append(f"{_h_label(L / m, L, m):>12} {'-':>12} {'':>20} {'-':>20}")
    return "\n".join(lines) + "\n"


class EnergyDecayError(AssertionError):
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


def energy_decay_experiment(config: RunConfig) -> DiagnosticsSeries:
    """Run ``config`` and require a non-increasing pseudo energy."""
    grid = config.grid()
    kernel = config.kernel(grid)
    params = config.params(kernel)
    s = config.time_step(grid)
    _, series = run(config.initial(grid), config.T, s, kernel, params, config.solver())
    for i in range(1, len(series)):
        if series.pseudo_E[i] > series.pseudo_E[i - 1] + 10.0 * series.tolerance[i]:
            raise EnergyDecayError(
                f"pseudo energy increased at step {series.k[i]}: "
                f"{series.pseudo_E[i - 1]!r} -> {series.pseudo_E[i]!r}",
                series.k[i],
            )
    return series


def study_invariant_violations(study: RefinementStudy) -> dict:
    return {
        m: check_invariants(res.series, study.config.equation)
        for m, res in study.results.items()
    }


def backend_variant(config: RunConfig, backend: str) -> RunConfig:
    return replace(config, backend=backend)
