"""
Implicit second-order convex-splitting time steps.

nAC:  phi^{k+1} - phi^k = -M s w^{k+1/2}     (decouples pointwise)
nCH:  phi^{k+1} - phi^k =  s Lap_h w^{k+1/2} (global Newton-Krylov solve)

with w^{k+1/2} = eta(phi^k, phi^{k+1}) + A_c/2 phi^{k+1} + E and
E = A_c/2 phi^k - A_e phi_hat - [J * phi_hat] collecting the explicit terms;
A_c = B_c + S and A_e = B_e + S are the implicit and explicit coefficients.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Union

import numpy as np
import scipy.fft
import scipy.sparse.linalg as spla

from nlpf import convolution
from nlpf.convolution import KernelGrid
from nlpf.energy import (
    ModelParams,
    chemical_potential_halfstep,
    energy,
    eta,
    explicit_part,
    extrapolate_half,
    l4_apriori_bound,
    l4_norm,
    pseudo_energy,
    pseudo_energy_sharp,
)
from nlpf.grid import grad_norm_sq, laplacian, laplacian_symbol, norm_inf, norm_p

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Nonlinear solve failed to reach its tolerance."""

    def __init__(self, message: str, residuals: Optional[list] = None, step: Optional[int] = None):
        super().__init__(message)
        self.residuals = residuals or []
        self.step = step


@dataclass
class SolverConfig:
    newton_tol: float = 1e-11
    newton_max_iter: int = 50
    krylov_tol: float = 1e-4
    krylov_max_iter: int = 200
    damping: str = "line-search-halving"
    # Scale newton_tol by max(1, ||phi^k||_2).
    relative_tol: bool = True

    def __post_init__(self):
        if self.newton_tol <= 0 or self.krylov_tol <= 0:
            raise ValueError("solver tolerances must be positive")
        if self.newton_max_iter < 1 or self.krylov_max_iter < 1:
            raise ValueError("solver iteration limits must be >= 1")
        if self.damping not in ("none", "line-search-halving"):
            raise ValueError(f"damping must be 'none' or 'line-search-halving', got {self.damping!r}")

    def tolerance(self, phi_k: np.ndarray, h: float) -> float:
        if not self.relative_tol:
            return self.newton_tol
        return self.newton_tol * max(1.0, norm_p(phi_k, h, 2))


@dataclass
class StepInfo:
    newton_iters: int
    residual: float
    w: np.ndarray
    krylov_iters: int = 0
    residual_history: list = field(default_factory=list)


@dataclass
class SchemeState:
    """Two-level history (phi^{k-1}, phi^k) at time t after k steps."""

    phi_prev: np.ndarray
    phi_curr: np.ndarray
    t: float = 0.0
    k: int = 0
    info: Optional[StepInfo] = field(default=None, repr=False)

    @classmethod
    def initial(cls, phi0: np.ndarray) -> "SchemeState":
        phi0 = np.array(phi0, dtype=np.float64)
        return cls(phi0, phi0.copy(), 0.0, 0)


# -- nAC ---------------------------------------------------------------------


def _nac_scalar(x, a, c, bc2, r):
    """g(x) = x + c (eta(a, x) + B_c/2 x) - r and its derivative."""
    g = x + c * (0.25 * (a * a + x * x) * (a + x) + bc2 * x) - r
    dg = 1.0 + c * (0.25 * (3.0 * x * x + 2.0 * a * x + a * a) + bc2)
    return g, dg


def solve_nac_pointwise(a: np.ndarray, c: float, bc2: float, r: np.ndarray, tol: float, max_newton: int = 50):
    """Solve x + c (eta(a, x) + bc2 x) = r at every grid point.

    The left side is strictly increasing in x, so each point has one root.
    Newton steps are kept inside a sign-change bracket and replaced by
    bisection whenever they leave it. Returns (x, iterations, max |g|).
    """
    x = a.copy()
    g, _ = _nac_scalar(x, a, c, bc2, r)
    if np.max(np.abs(g)) <= tol:
        return x, 0, float(np.max(np.abs(g)))

    width = 1.0 + np.abs(r) + np.abs(a)
    below = g > 0
    above = ~below
    lo = np.where(below, x - width, x)
    hi = np.where(above, x + width, x)
    for _ in range(200):
        glo, _ = _nac_scalar(lo, a, c, bc2, r)
        ghi, _ = _nac_scalar(hi, a, c, bc2, r)
        bad_lo = glo > 0
        bad_hi = ghi < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        width = np.where(bad_lo | bad_hi, 2.0 * width, width)
        lo = np.where(bad_lo, lo - width, lo)
        hi = np.where(bad_hi, hi + width, hi)

    total = max_newton + 200
    for it in range(1, total + 1):
        g, dg = _nac_scalar(x, a, c, bc2, r)
        lo = np.where(g < 0, x, lo)
        hi = np.where(g > 0, x, hi)
        xn = x - g / dg
        inside = (xn > lo) & (xn < hi)
        if it > max_newton:
            inside[:] = False
        x_new = np.where(inside, xn, 0.5 * (lo + hi))
        done = g == 0
        x = np.where(done, x, x_new)
        gnew, _ = _nac_scalar(x, a, c, bc2, r)
        worst = float(np.max(np.abs(gnew)))
        # a bracket a few ulps wide pins the root as well as floats allow
        pinned = (np.abs(gnew) <= tol) | (hi - lo <= 8.0 * np.spacing(np.maximum(np.abs(lo), np.abs(hi))))
        if worst <= tol or pinned.all():
            return x, it, worst
    raise SolverError(f"pointwise nAC solve stalled; worst residual {worst:.3e}", [worst])


def step_nac(
    state: SchemeState,
    s: float,
    kernel: KernelGrid,
    params: ModelParams,
    cfg: Optional[SolverConfig] = None,
) -> SchemeState:
    if s <= 0:
        raise ValueError(f"time step must be positive, got {s}")
    cfg = cfg or SolverConfig()
    phi_km1, phi_k = state.phi_prev, state.phi_curr
    c = params.M * s
    E = explicit_part(phi_km1, phi_k, kernel, params)
    r = phi_k - c * E
    tol = cfg.tolerance(phi_k, kernel.grid.h)
    phi_new, iters, resid = solve_nac_pointwise(phi_k, c, 0.5 * params.implicit_coef, r, tol, cfg.newton_max_iter)
    w = eta(phi_k, phi_new) + 0.5 * params.implicit_coef * phi_new + E
    info = StepInfo(iters, resid, w, residual_history=[resid])
    return SchemeState(phi_k, phi_new, state.t + s, state.k + 1, info)


# -- nCH ---------------------------------------------------------------------


def nch_residual(phi, phi_k, E, s, h, bc2):
    """R(phi) = phi - phi^k - s Lap_h(eta(phi^k, phi) + A_c/2 phi + E)."""
    return phi - phi_k - s * laplacian(eta(phi_k, phi) + bc2 * phi + E, h)


class _Preconditioner:
    """Exact inverse of I - s kappa Lap_h in Fourier space."""

    def __init__(self, shape, s, kappa, h):
        self.shape = shape
        self.denom = 1.0 - s * kappa * laplacian_symbol(shape[0], shape[1], h, real=True)

    def __call__(self, v):
        v = v.reshape(self.shape)
        vh = scipy.fft.rfft2(v, workers=convolution.fft_workers)
        return scipy.fft.irfft2(vh / self.denom, s=self.shape, workers=convolution.fft_workers).ravel()


def _solve_nch(phi_k, E, s, h, params, cfg, guess, tol, step_index=None):
    shape = phi_k.shape
    bc2 = 0.5 * params.implicit_coef
    phi = guess + (np.mean(phi_k) - np.mean(guess))
    R = nch_residual(phi, phi_k, E, s, h, bc2)
    rnorm = h * np.linalg.norm(R)
    history = [rnorm]
    kappa = bc2 + 0.75 * (norm_inf(phi_k) + 1e-3) ** 2
    prec = _Preconditioner(shape, s, kappa, h)
    M = spla.LinearOperator((phi.size, phi.size), matvec=prec, dtype=np.float64)
    restart = min(30, cfg.krylov_max_iter)
    krylov_total = 0
    iters = 0
    while rnorm > tol:
        if iters >= cfg.newton_max_iter:
            raise SolverError(
                f"nCH Newton did not converge in {iters} iterations (residual {rnorm:.3e} > {tol:.3e})",
                history,
                step_index,
            )
        iters += 1
        coef = 0.25 * (3.0 * phi * phi + 2.0 * phi * phi_k + phi_k * phi_k) + bc2

        def jac(v, coef=coef):
            v = v.reshape(shape)
            return (v - s * laplacian(coef * v, h)).ravel()

        A = spla.LinearOperator((phi.size, phi.size), matvec=jac, dtype=np.float64)
        count = [0]

        def cb(_, count=count):
            count[0] += 1

        delta, info = spla.gmres(
            A,
            -R.ravel(),
            rtol=cfg.krylov_tol,
            atol=0.0,
            restart=restart,
            maxiter=max(1, math.ceil(cfg.krylov_max_iter / restart)),
            M=M,
            callback=cb,
            callback_type="pr_norm",
        )
        krylov_total += count[0]
        delta = delta.reshape(shape)
        # The exact correction is mean-free; strip round-off drift.
        delta -= np.mean(delta)

        lam = 1.0
        min_lam = 1.0 / 64 if info == 0 else 1.0 / 1024
        while True:
            trial = phi + lam * delta
            R_trial = nch_residual(trial, phi_k, E, s, h, bc2)
            tnorm = h * np.linalg.norm(R_trial)
            if cfg.damping == "none" or tnorm < (1.0 - 1e-4 * lam) * rnorm or lam <= min_lam:
                break
            lam *= 0.5
        if not np.all(np.isfinite(trial)):
            raise SolverError("nCH Newton produced non-finite values", history, step_index)
        if tnorm >= rnorm and tnorm > tol:
            raise SolverError(
                f"nCH Newton stalled at residual {rnorm:.3e} (tolerance {tol:.3e}, gmres info {info})",
                history + [tnorm],
                step_index,
            )
        phi, R, rnorm = trial, R_trial, tnorm
        history.append(rnorm)
    return phi, iters, rnorm, krylov_total, history


def step_nch(
    state: SchemeState,
    s: float,
    kernel: KernelGrid,
    params: ModelParams,
    cfg: Optional[SolverConfig] = None,
    guess: Union[str, np.ndarray] = "linear",
) -> SchemeState:
    """Advance the nCH scheme by one step.

    ``guess`` picks the Newton starting point: ``"linear"`` (2 phi^k -
    phi^{k-1}), ``"current"`` (phi^k), ``"extrapolated"`` (3/2 phi^k - 1/2
    phi^{k-1}) or an explicit array. Starting points are shifted to the mass
    of phi^k before iterating.
    """
    if s <= 0:
        raise ValueError(f"time step must be positive, got {s}")
    cfg = cfg or SolverConfig()
    phi_km1, phi_k = state.phi_prev, state.phi_curr
    h = kernel.grid.h
    if isinstance(guess, str):
        starts = {
            "linear": lambda: 2.0 * phi_k - phi_km1,
            "current": lambda: phi_k.copy(),
            "extrapolated": lambda: extrapolate_half(phi_km1, phi_k),
        }
        if guess not in starts:
            raise ValueError(f"unknown initial guess {guess!r}")
        x0 = starts[guess]()
    else:
        x0 = np.array(guess, dtype=np.float64)
    E = explicit_part(phi_km1, phi_k, kernel, params)
    tol = cfg.tolerance(phi_k, h)
    phi_new, iters, resid, kry, hist = _solve_nch(phi_k, E, s, h, params, cfg, x0, tol, state.k)
    w = eta(phi_k, phi_new) + 0.5 * params.implicit_coef * phi_new + E
    info = StepInfo(iters, resid, w, kry, hist)
    return SchemeState(phi_k, phi_new, state.t + s, state.k + 1, info)


def step(state, s, kernel, params, cfg=None) -> SchemeState:
    if params.equation == "nac":
        return step_nac(state, s, kernel, params, cfg)
    return step_nch(state, s, kernel, params, cfg)


# -- trajectories --------------------------------------------------------------

CSV_COLUMNS = ("k", "t", "mass_deviation", "F", "pseudo_E", "grad_w_norm_sq", "newton_iters", "final_residual")


@dataclass
class DiagnosticsSeries:
    """Per-step diagnostics. ``dissipation`` is s ||grad_h w||^2 (nCH) or
    M s ||w||^2 (nAC), the amount the energy law subtracts each step."""

    k: list = field(default_factory=list)
    t: list = field(default_factory=list)
    mass_deviation: list = field(default_factory=list)
    F: list = field(default_factory=list)
    pseudo_E: list = field(default_factory=list)
    pseudo_E_sharp: list = field(default_factory=list)
    grad_w_norm_sq: list = field(default_factory=list)
    newton_iters: list = field(default_factory=list)
    final_residual: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    l4: list = field(default_factory=list)
    tolerance: list = field(default_factory=list)
    l4_bound: float = math.inf

    def append(self, **row):
        for key, value in row.items():
            getattr(self, key).append(value)

    def __len__(self):
        return len(self.k)

    def rows(self) -> Iterable[tuple]:
        return zip(*(getattr(self, c) for c in CSV_COLUMNS))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in self.rows():
                fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


Observer = Callable[[SchemeState, DiagnosticsSeries], None]


def step_count(T: float, s: float) -> int:
    if T <= 0 or s <= 0:
        raise ValueError(f"need T > 0 and s > 0, got T={T}, s={s}")
    steps = int(round(T / s))
    if steps < 1 or abs(T - steps * s) > 1e-12 * T:
        raise ValueError(f"final time T={T!r} is not an integer multiple of the time step s={s!r}")
    return steps


def run(
    initial: np.ndarray,
    T: float,
    s: float,
    kernel: KernelGrid,
    params: ModelParams,
    cfg: Optional[SolverConfig] = None,
    observers: Iterable[Observer] = (),
) -> tuple[SchemeState, DiagnosticsSeries]:
    """Advance ``initial`` to time ``T`` with step ``s``; phi^{-1} = phi^0."""
    cfg = cfg or SolverConfig()
    steps = step_count(T, s)
    h = kernel.grid.h
    h2 = h * h
    state = SchemeState.initial(initial)
    phi0 = state.phi_curr
    F0 = energy(phi0, kernel, params)
    series = DiagnosticsSeries(l4_bound=l4_apriori_bound(phi0, kernel, params))
    series.append(
        k=0, t=0.0, mass_deviation=0.0, F=F0, pseudo_E=F0, pseudo_E_sharp=F0, grad_w_norm_sq=0.0,
        newton_iters=0, final_residual=0.0, dissipation=0.0, l4=l4_norm(phi0, h),
        tolerance=cfg.tolerance(phi0, h),
    )
    for obs in observers:
        obs(state, series)
    for _ in range(steps):
        tol = cfg.tolerance(state.phi_curr, h)
        try:
            state = step(state, s, kernel, params, cfg)
        except SolverError as exc:
            exc.step = state.k
            raise
        # t = k s exactly, no accumulated round-off
        state.t = state.k * s
        info = state.info
        w = info.w
        gw = grad_norm_sq(w, h)
        if params.equation == "nch":
            diss = s * gw
        else:
            diss = params.M * s * h2 * float(np.sum(w * w))
        series.append(
            k=state.k,
            t=state.t,
            mass_deviation=float(h2 * np.sum(state.phi_curr - phi0)),
            F=energy(state.phi_curr, kernel, params),
            pseudo_E=pseudo_energy(state.phi_prev, state.phi_curr, kernel, params),
            pseudo_E_sharp=pseudo_energy_sharp(state.phi_prev, state.phi_curr, kernel, params),
            grad_w_norm_sq=gw,
            newton_iters=info.newton_iters,
            final_residual=info.residual,
            dissipation=diss,
            l4=l4_norm(state.phi_curr, h),
            tolerance=tol,
        )
        for obs in observers:
            obs(state, series)
    return state, series


def check_invariants(series: DiagnosticsSeries, equation: str, mass_tol: float = 1e-9, slack: float = 10.0) -> list[str]:
    """Energy-law, energy-bound, mass and l4 checks over a finished series.
    Returns human-readable violations (empty when all hold)."""
    problems = []
    F0 = series.F[0]
    for i in range(1, len(series)):
        eps = slack * series.tolerance[i]
        if series.pseudo_E[i] > series.pseudo_E[i - 1] + eps:
            problems.append(
                f"step {series.k[i]}: pseudo energy rose {series.pseudo_E[i - 1]!r} -> {series.pseudo_E[i]!r}"
            )
        lhs = series.pseudo_E_sharp[i] + series.dissipation[i]
        if lhs > series.pseudo_E_sharp[i - 1] + eps:
            problems.append(
                f"step {series.k[i]}: energy law violated, {series.pseudo_E_sharp[i]!r} + dissipation "
                f"{series.dissipation[i]!r} > {series.pseudo_E_sharp[i - 1]!r}"
            )
        if series.F[i] > F0 + eps:
            problems.append(f"step {series.k[i]}: energy {series.F[i]!r} exceeds initial energy {F0!r}")
        if series.l4[i] > series.l4_bound:
            problems.append(f"step {series.k[i]}: ||phi||_4 = {series.l4[i]!r} exceeds a priori bound {series.l4_bound!r}")
        if equation == "nch" and abs(series.mass_deviation[i]) > mass_tol:
            problems.append(f"step {series.k[i]}: mass drift {series.mass_deviation[i]!r} exceeds {mass_tol}")
    return problems
