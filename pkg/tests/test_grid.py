import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlpf.grid import (
    Field,
    GridError,
    GridSpec,
    diff_x,
    diff_y,
    edge_diff_x,
    edge_diff_y,
    grad_norm_sq,
    inner_product,
    laplacian,
    laplacian_symbol,
    norm_inf,
    norm_p,
)


def naive_laplacian(a, h):
    m, n = a.shape
    out = np.zeros_like(a)
    for i in range(m):
        for j in range(n):
            out[i, j] = (
                a[(i + 1) % m, j] + a[(i - 1) % m, j] + a[i, (j + 1) % n] + a[i, (j - 1) % n] - 4 * a[i, j]
            ) / h**2
    return out


def naive_grad_norm_sq(a, h):
    m, n = a.shape
    total = 0.0
    for i in range(m):
        for j in range(n):
            total += ((a[(i + 1) % m, j] - a[i, j]) / h) ** 2
            total += ((a[i, (j + 1) % n] - a[i, j]) / h) ** 2
    return h * h * total


class TestGridSpec:
    def test_square_cells(self):
        g = GridSpec(2.0, 1.0, 16, 8)
        assert g.h == 0.125
        assert g.shape == (16, 8)
        assert g.area == 2.0

    def test_non_square_cells_rejected(self):
        with pytest.raises(GridError):
            GridSpec(1.0, 1.0, 16, 15)

    def test_centers_offset_by_half_cell(self):
        g = GridSpec.square(4, 1.0, -0.5)
        x, y = g.centers()
        np.testing.assert_allclose(x, [-0.375, -0.125, 0.125, 0.375])
        np.testing.assert_allclose(y, x)

    def test_refinement_nests(self):
        g = GridSpec.square(8)
        assert g.nests_in(g.refined())
        assert not g.nests_in(GridSpec.square(12))

    def test_field_periodic_lookup(self):
        g = GridSpec.square(4)
        v = np.arange(16.0).reshape(4, 4)
        f = Field(g, v)
        assert f.at(5, -1) == v[1, 3]
        assert f.at(-4, 8) == v[0, 0]

    def test_field_rejects_nonfinite(self):
        v = np.zeros((4, 4))
        v[1, 1] = np.nan
        with pytest.raises(GridError):
            Field(GridSpec.square(4), v)


class TestInnerProductAndNorms:
    def test_all_ones(self):
        a = np.ones((4, 4))
        assert inner_product(a, a) == 16

    def test_zero_field(self, rng):
        assert inner_product(np.zeros((5, 5)), rng.standard_normal((5, 5))) == 0

    def test_matches_double_loop(self, rng):
        a, b = rng.standard_normal((2, 8, 8))
        expected = sum(a[i, j] * b[i, j] for i in range(8) for j in range(8))
        assert inner_product(a, b) == pytest.approx(expected, rel=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(GridError):
            inner_product(np.ones((4, 4)), np.ones((4, 5)))

    @pytest.mark.parametrize("m", [1, 3, 16])
    def test_unit_constant_has_unit_norm(self, m):
        assert norm_p(np.ones((m, m)), 1.0 / m) == pytest.approx(1.0, rel=1e-14)

    @pytest.mark.parametrize("c,L", [(0.7, 1.0), (-2.0, 3.0)])
    def test_l4_of_constant(self, c, L):
        m = 12
        assert norm_p(np.full((m, m), c), L / m, 4) == pytest.approx(abs(c) * L**0.5, rel=1e-14)

    @pytest.mark.parametrize("p", [1, 2, 3, 4])
    def test_norm_matches_loop(self, rng, p):
        a = rng.standard_normal((8, 8))
        h = 0.1
        total = 0.0
        for i in range(8):
            for j in range(8):
                total += abs(a[i, j]) ** p
        assert norm_p(a, h, p) == pytest.approx((h * h * total) ** (1 / p), rel=1e-13)

    def test_p_below_one_rejected(self):
        with pytest.raises(ValueError):
            norm_p(np.ones((2, 2)), 0.5, 0.5)

    @settings(max_examples=50, deadline=None)
    @given(m=st.integers(2, 24), seed=st.integers(0, 2**32 - 1), p=st.sampled_from([2, 4]))
    def test_inverse_inequality(self, m, seed, p):
        a = np.random.default_rng(seed).standard_normal((m, m))
        h = 1.0 / m
        assert norm_inf(a) <= h ** (-2 / p) * norm_p(a, h, p) * (1 + 1e-14)


class TestLaplacian:
    def test_constant_annihilated(self):
        assert np.all(laplacian(np.full((6, 6), 3.2), 0.1) == 0)

    def test_discrete_eigenfunction(self):
        g = GridSpec.square(16, 2.0, -1.0)
        X, _ = g.mesh()
        a = np.sin(2 * np.pi * X / g.L1)
        lam = -(2 / g.h**2) * (1 - np.cos(2 * np.pi * g.h / g.L1))
        np.testing.assert_allclose(laplacian(a, g.h), lam * a, atol=1e-11)

    def test_matches_stencil_loop(self, rng):
        a = rng.standard_normal((8, 8))
        np.testing.assert_allclose(laplacian(a, 0.125), naive_laplacian(a, 0.125), rtol=1e-13, atol=1e-12)

    def test_symbol_diagonalizes(self, rng):
        a = rng.standard_normal((8, 6))
        h = 0.3
        via_fft = np.real(np.fft.ifft2(laplacian_symbol(8, 6, h) * np.fft.fft2(a)))
        np.testing.assert_allclose(via_fft, laplacian(a, h), atol=1e-11)


class TestEdgeOperators:
    def test_constant_gives_zero_differences(self):
        a = np.full((5, 7), -1.5)
        assert np.all(diff_x(a, 0.2) == 0) and np.all(diff_y(a, 0.2) == 0)

    def test_composition_is_laplacian(self, rng):
        a = rng.standard_normal((8, 8))
        h = 0.125
        comp = edge_diff_x(diff_x(a, h), h) + edge_diff_y(diff_y(a, h), h)
        np.testing.assert_allclose(comp, laplacian(a, h), rtol=1e-13, atol=1e-11)

    def test_affine_in_index_interior(self):
        g = GridSpec.square(8)
        X, _ = g.mesh()
        dx = diff_x(X, g.h)
        # the wrap-around edge is the only one that sees the period jump
        np.testing.assert_allclose(dx[:-1, :], 1.0, rtol=1e-12)

    def test_grad_norm_constant(self):
        assert grad_norm_sq(np.full((4, 4), 2.0), 0.25) == 0.0

    def test_grad_norm_plane_wave(self):
        g = GridSpec.square(16)
        X, Y = g.mesh()
        a = np.cos(2 * np.pi * (X + 2 * Y))
        assert grad_norm_sq(a, g.h) == pytest.approx(-g.h**2 * inner_product(a, laplacian(a, g.h)), rel=1e-12)

    def test_grad_norm_loop_and_green(self, rng):
        a = rng.standard_normal((16, 16))
        h = 1 / 16
        gn = grad_norm_sq(a, h)
        assert gn == pytest.approx(naive_grad_norm_sq(a, h), rel=1e-13)
        assert gn == pytest.approx(-h * h * inner_product(a, laplacian(a, h)), rel=1e-12)


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def test_summation_by_parts_on_100_random_fields(rng):
    worst = 0.0
    for _ in range(100):
        m, n = rng.integers(3, 20, size=2)
        h = float(rng.uniform(0.05, 1.0))
        phi, f, psi = rng.standard_normal((3, m, n))
        # discrete integration by parts in each direction
        worst = max(worst, _rel(inner_product(diff_x(phi, h), f), -inner_product(phi, edge_diff_x(f, h))))
        worst = max(worst, _rel(inner_product(diff_y(phi, h), f), -inner_product(phi, edge_diff_y(f, h))))
        # first and second Green identities
        worst = max(worst, _rel(grad_norm_sq(phi, h), -h * h * inner_product(phi, laplacian(phi, h))))
        worst = max(worst, _rel(inner_product(phi, laplacian(psi, h)), inner_product(laplacian(phi, h), psi)))
    assert worst <= 1e-11
