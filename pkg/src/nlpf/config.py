"""
Run configuration: flat ``key = value`` text with dotted section names.

    # nCH convergence study
    equation = nch
    domain.x0 = -0.5
    kernel.type = gaussian
    kernel.sigma = 0.05
    study.levels = 128, 256, 512

Blank lines and ``#`` comments are ignored. Every error names the key and
the line it came from.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from nlpf.convolution import KernelGrid, kernel_difference_of_gaussians, kernel_gaussian
from nlpf.energy import EQUATIONS, SPLITTINGS, ModelParams
from nlpf.grid import GridSpec
from nlpf.stepper import SolverConfig, step_count


class ConfigError(ValueError):
    pass


_FLOAT_KEYS = {
    "domain.x0": "x0",
    "domain.y0": "y0",
    "domain.L1": "L1",
    "domain.L2": "L2",
    "kernel.alpha": "alpha",
    "kernel.sigma": "sigma",
    "kernel.sigma1": "sigma1",
    "kernel.beta": "beta",
    "kernel.sigma2": "sigma2",
    "model.gamma_c": "gamma_c",
    "model.gamma_e": "gamma_e",
    "model.M": "M",
    "time.s": "s",
    "time.T": "T",
    "initial.mean": "initial_mean",
    "initial.amplitude": "initial_amplitude",
    "study.refinement_constant": "refinement_constant",
    "solver.newton_tol": "newton_tol",
    "solver.krylov_tol": "krylov_tol",
}
_INT_KEYS = {
    "grid.m": "m",
    "grid.n": "n",
    "kernel.images": "images",
    "initial.seed": "initial_seed",
    "output.snapshot_every": "snapshot_every",
    "solver.newton_max_iter": "newton_max_iter",
    "solver.krylov_max_iter": "krylov_max_iter",
}
_STR_KEYS = {
    "equation": "equation",
    "kernel.type": "kernel_type",
    "scheme.splitting": "splitting",
    "convolution.backend": "backend",
    "initial.type": "initial_type",
    "initial.path": "initial_path",
    "output.energy_csv": "energy_csv",
    "output.snapshot_dir": "snapshot_dir",
    "solver.damping": "damping",
}
_LIST_KEYS = {"study.levels": "levels"}


@dataclass
class RunConfig:
    equation: str = "nch"
    x0: float = 0.0
    y0: float = 0.0
    L1: float = 1.0
    L2: float = 1.0
    m: int = 64
    n: Optional[int] = None
    kernel_type: str = "gaussian"
    alpha: float = 400.0
    sigma: float = 0.05
    sigma1: Optional[float] = None
    beta: float = 0.0
    sigma2: Optional[float] = None
    images: int = 0
    gamma_c: float = 0.0
    gamma_e: float = 0.0
    M: float = 1.0
    splitting: str = "stabilized"
    s: Optional[float] = None
    T: float = 0.015625
    backend: str = "auto"
    initial_type: str = "sinusoid"
    initial_mean: float = 0.0
    initial_amplitude: float = 0.05
    initial_seed: int = 0
    initial_path: Optional[str] = None
    energy_csv: str = "energy.csv"
    snapshot_every: int = 0
    snapshot_dir: str = "snapshots"
    levels: list = field(default_factory=list)
    refinement_constant: Optional[float] = None
    newton_tol: float = 1e-11
    newton_max_iter: int = 50
    krylov_tol: float = 1e-4
    krylov_max_iter: int = 200
    damping: str = "line-search-halving"
    source: str = "<memory>"
    base_dir: str = "."

    # -- derived objects --------------------------------------------------

    def grid(self, m: Optional[int] = None) -> GridSpec:
        if m is None:
            m, n = self.m, self.n if self.n is not None else self.m
        else:
            n = int(round(m * self.L2 / self.L1))
        return GridSpec(self.L1, self.L2, m, n, self.x0, self.y0)

    def kernel(self, grid: GridSpec) -> KernelGrid:
        if self.kernel_type == "gaussian":
            return kernel_gaussian(self.alpha, self.sigma, grid, self.images, self.backend)
        return kernel_difference_of_gaussians(
            self.alpha, self.sigma1, self.beta, self.sigma2, grid, self.images, self.backend
        )

    def params(self, kernel: KernelGrid) -> ModelParams:
        return ModelParams.for_kernel(kernel, self.equation, self.gamma_c, self.gamma_e, self.M, self.splitting)

    def solver(self) -> SolverConfig:
        return SolverConfig(
            newton_tol=self.newton_tol,
            newton_max_iter=self.newton_max_iter,
            krylov_tol=self.krylov_tol,
            krylov_max_iter=self.krylov_max_iter,
            damping=self.damping,
        )

    def time_step(self, grid: GridSpec) -> float:
        if self.s is not None:
            return self.s
        if self.refinement_constant is not None:
            return self.refinement_constant * grid.h
        raise ConfigError("time.s is required (or study.refinement_constant for s = C h)")

    def initial(self, grid: GridSpec) -> np.ndarray:
        from nlpf import harness, snapshot

        if self.initial_type == "sinusoid":
            return harness.initial_sinusoid(grid)
        if self.initial_type == "random":
            return harness.initial_random(grid, self.initial_mean, self.initial_amplitude, self.initial_seed)
        path = self.initial_path
        if not os.path.isabs(path):
            path = os.path.join(self.base_dir, path)
        f = snapshot.read_snapshot(path)
        if f.grid.shape != grid.shape:
            raise ConfigError(f"initial.path {self.initial_path!r} holds a {f.grid.shape} field, grid is {grid.shape}")
        return f.values

    def with_backend(self, backend: Optional[str]) -> "RunConfig":
        return self if backend is None else replace(self, backend=backend)

    # -- validation -------------------------------------------------------

    def validate(self, lines: Optional[dict] = None) -> "RunConfig":
        lines = lines or {}

        def fail(key, msg):
            where = f" (line {lines[key]})" if key in lines else ""
            raise ConfigError(f"{self.source}: {key}{where}: {msg}")

        if self.equation not in EQUATIONS:
            fail("equation", f"must be one of {EQUATIONS}, got {self.equation!r}")
        if self.kernel_type not in ("gaussian", "dog"):
            fail("kernel.type", f"must be 'gaussian' or 'dog', got {self.kernel_type!r}")
        if self.kernel_type == "dog":
            for key, val in (("kernel.sigma1", self.sigma1), ("kernel.sigma2", self.sigma2)):
                if val is None:
                    fail(key, "required for kernel.type = dog")
        if self.splitting not in SPLITTINGS:
            fail("scheme.splitting", f"must be one of {SPLITTINGS}, got {self.splitting!r}")
        if self.backend not in ("auto", "direct", "fft"):
            fail("convolution.backend", f"must be auto, direct or fft, got {self.backend!r}")
        if self.initial_type not in ("sinusoid", "random", "file"):
            fail("initial.type", f"must be sinusoid, random or file, got {self.initial_type!r}")
        if self.initial_type == "file" and not self.initial_path:
            fail("initial.path", "required for initial.type = file")
        if self.initial_type == "random" and not self.initial_amplitude > 0:
            fail("initial.amplitude", f"must be > 0, got {self.initial_amplitude}")
        if self.T <= 0:
            fail("time.T", f"must be > 0, got {self.T}")
        try:
            grid = self.grid()
        except ValueError as exc:
            fail("grid.m", str(exc))
        if self.levels:
            if self.refinement_constant is None:
                fail("study.refinement_constant", "required when study.levels is given")
            for a, b in zip(self.levels, self.levels[1:]):
                if b != 2 * a:
                    fail("study.levels", f"consecutive levels must double, got {a} then {b}")
            for lvl in self.levels:
                s = self.refinement_constant * self.L1 / lvl
                try:
                    step_count(self.T, s)
                except ValueError:
                    fail("time.T", f"T = {self.T!r} is not an integer multiple of s = {s!r} (level {lvl})")
        else:
            try:
                s = self.time_step(grid)
            except ConfigError as exc:
                fail("time.s", str(exc))
            if s <= 0:
                fail("time.s", f"must be > 0, got {s}")
            try:
                step_count(self.T, s)
            except ValueError:
                fail("time.T", f"T = {self.T!r} is not an integer multiple of s = {s!r}")
        try:
            kernel = self.kernel(grid)
        except ValueError as exc:
            fail("kernel.type", str(exc))
        try:
            self.params(kernel)
        except ValueError as exc:
            key = "model.gamma_e" if "positivity" in str(exc) else "model.M"
            fail(key, str(exc))
        try:
            self.solver()
        except ValueError as exc:
            fail("solver.newton_tol", str(exc))
        return self


def parse_text(text: str, source: str = "<string>") -> tuple[dict, dict]:
    """Split config text into ``{key: raw value}`` and ``{key: line number}``."""
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not key:
            raise ConfigError(f"{source}: line {lineno}: missing key")
        if key in values:
            raise ConfigError(f"{source}: {key} (line {lineno}): duplicate key, first set on line {lines[key]}")
        values[key] = val
        lines[key] = lineno
    return values, lines


def from_mapping(values: dict, lines: Optional[dict] = None, source: str = "<memory>", base_dir: str = ".") -> RunConfig:
    lines = lines or {}
    kwargs = {}
    for key, raw in values.items():
        where = f" (line {lines[key]})" if key in lines else ""
        try:
            if key in _FLOAT_KEYS:
                kwargs[_FLOAT_KEYS[key]] = float(raw)
            elif key in _INT_KEYS:
                kwargs[_INT_KEYS[key]] = int(raw)
            elif key in _STR_KEYS:
                kwargs[_STR_KEYS[key]] = str(raw)
            elif key in _LIST_KEYS:
                kwargs[_LIST_KEYS[key]] = [int(v) for v in str(raw).replace(",", " ").split()]
            else:
                raise ConfigError(f"{source}: {key}{where}: unknown key")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{source}: {key}{where}: cannot parse value {raw!r}") from None
    cfg = RunConfig(source=source, base_dir=base_dir, **kwargs)
    return cfg.validate(lines)


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        text = fh.read()
    values, lines = parse_text(text, path)
    return from_mapping(values, lines, source=path, base_dir=os.path.dirname(os.path.abspath(path)))


def loads(text: str) -> RunConfig:
    values, lines = parse_text(text)
    return from_mapping(values, lines, source="<string>")
