import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlpf.config import ConfigError, loads
from nlpf.grid import GridError, GridSpec, norm_p
from nlpf.stepper import run
from nlpf.harness import (
    EnergyDecayError,
    RefinementStudy,
    cauchy_error,
    convergence_rate,
    convergence_study,
    energy_decay_experiment,
    initial_random,
    initial_sinusoid,
    prolongate,
    restrict,
    study_csv,
    study_text,
)

SMALL_STUDY = """
equation = {equation}
domain.x0 = -0.5
domain.y0 = -0.5
kernel.alpha = 400.0
kernel.sigma = 0.05
model.gamma_e = {gamma_e}
time.T = 0.015625
study.levels = {levels}
study.refinement_constant = 0.1
"""


class TestInitialData:
    def test_sinusoid_zero_mean_and_bounded(self):
        g = GridSpec.square(128, 1.0, -0.5)
        phi = initial_sinusoid(g)
        assert abs(g.h**2 * np.sum(phi)) <= 1e-13
        assert np.max(np.abs(phi)) <= 0.5

    def test_sinusoid_value_near_point(self):
        g = GridSpec.square(128, 1.0, -0.5)
        x, y = g.centers()
        i, j = np.argmin(np.abs(x - 0.125)), np.argmin(np.abs(y))
        phi = initial_sinusoid(g)
        assert phi[i, j] == pytest.approx(0.5 * math.sin(2 * math.pi * x[i]) * math.cos(2 * math.pi * y[j]), abs=1e-15)
        assert abs(phi[i, j] - 0.5 * math.sin(math.pi / 4)) <= 2 * math.pi * g.h

    def test_random_mean_exact(self):
        g = GridSpec.square(64, 20.0, -10.0)
        phi = initial_random(g, 0.3, 0.05, seed=7)
        assert abs(g.h**2 * np.sum(phi - 0.3)) <= 1e-13 * g.area

    def test_random_deterministic(self):
        g = GridSpec.square(32)
        assert np.array_equal(initial_random(g, 0.0, 0.1, 3), initial_random(g, 0.0, 0.1, 3))
        assert not np.array_equal(initial_random(g, 0.0, 0.1, 3), initial_random(g, 0.0, 0.1, 4))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), amp=st.floats(1e-3, 2.0), mean=st.floats(-1, 1))
    def test_random_amplitude_bound(self, seed, amp, mean):
        g = GridSpec.square(16)
        phi = initial_random(g, mean, amp, seed)
        assert np.max(np.abs(phi - mean)) <= 2 * amp

    def test_random_rejects_zero_amplitude(self):
        with pytest.raises(ValueError):
            initial_random(GridSpec.square(4), 0.0, 0.0, 1)


class TestRestriction:
    def test_constant(self):
        np.testing.assert_array_equal(restrict(np.full((8, 6), 2.5)), np.full((4, 3), 2.5))

    def test_mean_preserved(self, rng):
        fine = rng.standard_normal((32, 16))
        assert np.mean(restrict(fine)) == pytest.approx(np.mean(fine), rel=1e-14, abs=1e-16)

    def test_single_spike(self):
        fine = np.zeros((8, 8))
        fine[5, 2] = 1.0
        coarse = restrict(fine)
        expected = np.zeros((4, 4))
        expected[2, 1] = 0.25
        np.testing.assert_array_equal(coarse, expected)

    def test_matches_loop(self, rng):
        fine = rng.standard_normal((8, 12))
        coarse = np.empty((4, 6))
        for I in range(4):
            for J in range(6):
                coarse[I, J] = 0.25 * (fine[2 * I, 2 * J] + fine[2 * I + 1, 2 * J] + fine[2 * I, 2 * J + 1] + fine[2 * I + 1, 2 * J + 1])
        np.testing.assert_allclose(restrict(fine), coarse, rtol=1e-14, atol=1e-15)

    def test_odd_shape_rejected(self):
        with pytest.raises(GridError):
            restrict(np.zeros((5, 4)))

    def test_restrict_inverts_prolongation(self, rng):
        c = rng.standard_normal((4, 4))
        np.testing.assert_array_equal(restrict(prolongate(c)), c)


class TestCauchyError:
    def test_identical_dynamics(self, rng):
        c = rng.standard_normal((8, 8))
        assert cauchy_error(c, prolongate(c), 1 / 8) == 0.0

    def test_uses_coarse_weight(self, rng):
        c = rng.standard_normal((8, 8))
        f = rng.standard_normal((16, 16))
        assert cauchy_error(c, f, 1 / 8) == pytest.approx(norm_p(c - restrict(f), 1 / 8), rel=1e-15)

    def test_nesting_checked(self):
        with pytest.raises(GridError):
            cauchy_error(np.zeros((8, 8)), np.zeros((12, 12)), 0.125)

    def test_rate(self):
        assert convergence_rate(4e-3, 1e-3) == pytest.approx(2.0)


class TestStudy:
    def test_levels_must_double(self):
        cfg = loads(SMALL_STUDY.format(equation="nac", gamma_e=2.0, levels="32, 64"))
        with pytest.raises(ValueError):
            RefinementStudy(cfg, [32, 96], 0.1, 0.015625)

    def test_level_step_count_validated(self):
        with pytest.raises(ConfigError, match="not an integer multiple"):
            loads(SMALL_STUDY.format(equation="nac", gamma_e=2.0, levels="16, 32"))

    def test_nac_small_study_second_order(self):
        cfg = loads(SMALL_STUDY.format(equation="nac", gamma_e=2.0, levels="32, 64, 128"))
        study = convergence_study(RefinementStudy.from_config(cfg))
        assert len(study.rows) == 2
        assert study.rows[0].rate is None
        assert study.rows[1].rate == pytest.approx(2.0, abs=0.05)
        assert study.results[32].series.k[-1] == 5

    def test_parallel_levels_match_serial(self):
        cfg = loads(SMALL_STUDY.format(equation="nch", gamma_e=1.0, levels="32, 64"))
        a = convergence_study(RefinementStudy.from_config(cfg), workers=1)
        b = convergence_study(RefinementStudy.from_config(cfg), workers=2)
        assert a.errors() == b.errors()

    def test_single_level_table(self):
        cfg = loads(SMALL_STUDY.format(equation="nac", gamma_e=2.0, levels="32"))
        study = convergence_study(RefinementStudy.from_config(cfg))
        assert study.rows == []
        lines = study_csv(study).splitlines()
        assert lines == ["coarse_h,fine_h,error_l2,rate", "0.03125,,,"]
        assert "1/32" in study_text(study)

    def test_text_table_precision(self):
        cfg = loads(SMALL_STUDY.format(equation="nac", gamma_e=2.0, levels="32, 64, 128"))
        study = convergence_study(RefinementStudy.from_config(cfg))
        text = study_text(study).splitlines()
        assert text[0].startswith("#")
        assert "1/32" in text[2] and "1/64" in text[2]
        err = text[3].split()[2]
        assert len(err.split(".")[1]) == 15
        csv_lines = study_csv(study).splitlines()
        assert float(csv_lines[2].split(",")[2]) == study.rows[1].error


class TestEnergyExperiment:
    DOG = """
equation = nac
domain.x0 = -10.0
domain.y0 = -10.0
domain.L1 = 20.0
domain.L2 = 20.0
grid.m = 32
kernel.type = dog
kernel.alpha = 3.90625
kernel.sigma1 = 0.16
kernel.beta = 0.5
kernel.sigma2 = 0.4
time.s = 0.01
time.T = {T}
initial.type = random
initial.amplitude = {amp}
initial.seed = 1
"""

    def test_short_run_monotone(self):
        series = energy_decay_experiment(loads(self.DOG.format(T=0.5, amp=0.05)))
        assert len(series) == 51
        assert all(b <= a + 1e-10 for a, b in zip(series.pseudo_E, series.pseudo_E[1:]))

    def test_one_step(self):
        series = energy_decay_experiment(loads(self.DOG.format(T=0.01, amp=0.05)))
        assert len(series) == 2 and series.pseudo_E[1] <= series.pseudo_E[0]

    def test_zero_data(self):
        cfg = loads(self.DOG.format(T=0.05, amp=0.05))
        g = cfg.grid()
        k = cfg.kernel(g)
        _, series = run(np.zeros(g.shape), cfg.T, cfg.s, k, cfg.params(k))
        assert series.F == [0.0] * 6

    def test_error_carries_step(self):
        err = EnergyDecayError("rose", 7)
        assert err.step == 7


def test_backend_independence_nch_coarse_run():
    from pathlib import Path

    from nlpf.config import load_config
    from nlpf.harness import backend_variant, run_level

    cfg = load_config(str(Path(__file__).resolve().parent.parent / "configs" / "nch_gamma_e1.cfg"))
    a = run_level(backend_variant(cfg, "direct"), 128)
    b = run_level(backend_variant(cfg, "fft"), 128)
    assert len(a.series) == 21
    assert np.max(np.abs(a.phi - b.phi)) <= 1e-10
