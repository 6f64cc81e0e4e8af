"""Command-line entry point: ``nlpf {run,converge,energy-test,selftest}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from nlpf import convolution
from nlpf.config import ConfigError, RunConfig, load_config
from nlpf.grid import Field
from nlpf.harness import (
    EnergyDecayError,
    RefinementStudy,
    convergence_study,
    energy_decay_experiment,
    study_csv,
    study_invariant_violations,
    study_text,
)
from nlpf.snapshot import SnapshotFormatError, write_snapshot
from nlpf.stepper import SolverError, check_invariants, run

logger = logging.getLogger("nlpf")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 3
EXIT_INVARIANT = 4


def _out_path(out_dir: str, name: str) -> str:
    return name if os.path.isabs(name) else os.path.join(out_dir, name)


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    return cfg.with_backend(args.backend)


def cmd_run(args) -> int:
    cfg = _load(args)
    os.makedirs(args.out, exist_ok=True)
    grid = cfg.grid()
    kernel = cfg.kernel(grid)
    params = cfg.params(kernel)
    s = cfg.time_step(grid)
    phi0 = cfg.initial(grid)

    observers = []
    if cfg.snapshot_every > 0:
        snap_dir = _out_path(args.out, cfg.snapshot_dir)
        os.makedirs(snap_dir, exist_ok=True)

        def snap(state, series):
            if state.k % cfg.snapshot_every == 0:
                path = os.path.join(snap_dir, f"phi_{state.k:07d}.nlpf")
                write_snapshot(path, Field(grid, state.phi_curr, "state", state.k * s))

        observers.append(snap)

    logger.info(
        "%s on %dx%d, s=%r, T=%r, alpha_0=%.6g, gamma_0=%.6g",
        cfg.equation, grid.m, grid.n, s, cfg.T, params.alpha_0, params.gamma_0,
    )
    state, series = run(phi0, cfg.T, s, kernel, params, cfg.solver(), observers)
    csv_path = _out_path(args.out, cfg.energy_csv)
    series.to_csv(csv_path)
    print(f"wrote {len(series)} rows to {csv_path}")
    problems = check_invariants(series, cfg.equation)
    if problems:
        for p in problems[:20]:
            print(f"invariant violation: {p}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_converge(args) -> int:
    cfg = _load(args)
    if not cfg.levels:
        raise ConfigError(f"{cfg.source}: study.levels: required for converge")
    os.makedirs(args.out, exist_ok=True)
    study = RefinementStudy.from_config(cfg)
    if len(study.levels) < 2:
        logger.warning("single level %s: no Cauchy differences to report", study.levels)
    convergence_study(study, workers=args.threads)
    csv_text = study_csv(study)
    text = study_text(study)
    with open(os.path.join(args.out, "convergence.csv"), "w") as fh:
        fh.write(csv_text)
    with open(os.path.join(args.out, "convergence.txt"), "w") as fh:
        fh.write(text)
    for m, res in study.results.items():
        res.series.to_csv(os.path.join(args.out, f"energy_m{m}.csv"))
    print(text, end="")
    violations = {m: v for m, v in study_invariant_violations(study).items() if v}
    if violations:
        for m, v in violations.items():
            print(f"level {m}: {v[0]}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_energy_test(args) -> int:
    cfg = _load(args)
    os.makedirs(args.out, exist_ok=True)
    try:
        series = energy_decay_experiment(cfg)
    except EnergyDecayError as exc:
        print(f"energy test failed: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    csv_path = _out_path(args.out, cfg.energy_csv)
    series.to_csv(csv_path)
    print(f"pseudo energy non-increasing over {len(series) - 1} steps: {series.pseudo_E[0]:.12g} -> {series.pseudo_E[-1]:.12g}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from nlpf.selftest import run_all

    return EXIT_OK if run_all() else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlpf", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--backend", choices=("direct", "fft"), default=None, help="override convolution backend")
    common.add_argument("--threads", type=int, default=1, help="FFT workers and concurrent study levels")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, needs_cfg in (
        ("run", cmd_run, True),
        ("converge", cmd_converge, True),
        ("energy-test", cmd_energy_test, True),
        ("selftest", cmd_selftest, False),
    ):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--config", required=needs_cfg, help="run configuration file")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    convolution.fft_workers = args.threads
    try:
        return args.func(args)
    except (ConfigError, SnapshotFormatError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
