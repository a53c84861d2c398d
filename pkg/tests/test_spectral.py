"""Grid, transforms, derivatives, filtering and off-grid series evaluation."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpbreak.spectral import (Fourier, GridSpec, SpectralField, antiderivative_x, decay_report,
                              default_regularization, evaluate_series, inverse_dx_symbol, krasny_filter,
                              l2_norm, partial, relative_l2_drift, transform)


def random_field(grid, seed=0):
    rng = np.random.default_rng(seed)
    return SpectralField(grid, values=rng.standard_normal(grid.shape))


def brute_dft(grid, values):
    """Coefficients by direct summation, in the module's normalization."""
    X, Y = grid.mesh()
    out = np.zeros(grid.shape, dtype=complex)
    for a, ky in enumerate(grid.ky):
        for b, kx in enumerate(grid.kx):
            out[a, b] = np.sum(values * np.exp(-1j * (kx * X + ky * Y))) / grid.size
    return out


class TestGridSpec:
    def test_wavenumbers(self):
        g = GridSpec(8, 4, 2.0, 0.5)
        assert np.allclose(np.sort(g.kx), np.arange(-4, 4) / 2.0)
        assert np.allclose(np.sort(g.ky), np.arange(-2, 2) / 0.5)

    def test_domain(self):
        g = GridSpec(16, 8, 3.0, 1.0)
        assert g.x[0] == pytest.approx(-3 * np.pi)
        assert g.x[-1] + g.dx == pytest.approx(3 * np.pi)
        assert g.shape == (8, 16)

    @pytest.mark.parametrize("nx,ny", [(12, 8), (8, 6), (0, 8)])
    def test_rejects_non_powers_of_two(self, nx, ny):
        with pytest.raises(ValueError):
            GridSpec(nx, ny)

    def test_rejects_bad_lengths(self):
        with pytest.raises(ValueError):
            GridSpec(8, 8, -1.0, 1.0)
        with pytest.raises(ValueError):
            GridSpec(8, 8, 1.0, np.inf)


class TestTransform:
    def test_single_cosine_mode(self):
        g = GridSpec(16, 8, 1.0, 1.0)
        c = SpectralField.from_function(g, lambda x, y: np.cos(x)).coeffs
        expect = np.zeros(g.shape, dtype=complex)
        expect[0, 1] = expect[0, -1] = 0.5
        assert np.abs(c - expect).max() < 1e-14

    def test_zero_field(self):
        g = GridSpec(8, 8)
        assert np.all(SpectralField.zeros(g).coeffs == 0)

    def test_matches_brute_force_dft(self):
        g = GridSpec(8, 8, 1.3, 0.7)
        f = random_field(g, 1)
        assert np.abs(f.coeffs - brute_dft(g, f.values)).max() < 1e-12

    def test_conjugate_symmetry(self):
        g = GridSpec(16, 8)
        c = random_field(g, 2).coeffs
        # c(-k) is c at index -j mod N
        flipped = np.roll(np.flip(c, axis=(0, 1)), 1, axis=(0, 1))
        assert np.abs(c - np.conj(flipped)).max() < 1e-14

    def test_parseval(self):
        g = GridSpec(16, 16, 1.5, 2.5)
        f = random_field(g, 3)
        quad = np.sqrt(np.sum(f.values ** 2) * g.dx * g.dy)
        assert l2_norm(f) == pytest.approx(quad, rel=1e-12)

    def test_direction_argument(self):
        g = GridSpec(8, 8)
        f = random_field(g)
        both = transform(f, "forward")
        assert both.sync == "both"
        with pytest.raises(ValueError):
            transform(f, "sideways")
        with pytest.raises(ValueError):
            transform(f, "inverse")

    def test_non_finite_rejected(self):
        g = GridSpec(8, 8)
        v = np.zeros(g.shape)
        v[2, 3] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            SpectralField(g, values=v).coeffs

    @settings(max_examples=20, deadline=None)
    @given(nx=st.sampled_from([2, 4, 8, 16, 32, 64]), ny=st.sampled_from([2, 4, 8, 16, 32, 64]),
           seed=st.integers(0, 2 ** 16))
    def test_round_trip(self, nx, ny, seed):
        g = GridSpec(nx, ny)
        f = random_field(g, seed)
        back = SpectralField(g, coeffs=f.coeffs).values
        assert np.abs(back - f.values).max() <= 1e-12 * max(1.0, np.abs(f.values).max())


class TestDerivatives:
    def test_dx_sin(self):
        g = GridSpec(32, 8, 1.0, 1.0)
        f = SpectralField.from_function(g, lambda x, y: np.sin(x) + 0 * y)
        X, _ = g.mesh()
        assert np.abs(partial(f, "x").values - np.cos(X)).max() < 1e-12

    def test_dy_of_x_only_field(self):
        g = GridSpec(32, 16)
        f = SpectralField.from_function(g, lambda x, y: np.cos(x / 2) + 0 * y)
        assert np.abs(partial(f, "y").values).max() < 1e-12

    def test_gaussian_on_large_domain(self):
        g = GridSpec(256, 2, 3.0, 1.0)
        f = SpectralField.from_function(g, lambda x, y: np.exp(-x * x) + 0 * y)
        X, _ = g.mesh()
        assert np.abs(partial(f, "x").values - (-2 * X * np.exp(-X * X))).max() < 1e-10

    def test_order_bounds(self):
        g = GridSpec(8, 8)
        with pytest.raises(ValueError):
            partial(random_field(g), "x", 5)
        with pytest.raises(ValueError):
            partial(random_field(g), "z", 1)

    def test_nyquist_dropped_for_odd_orders(self):
        g = GridSpec(8, 8)
        c = partial(random_field(g), "x", 1).coeffs
        assert np.all(c[:, g.Nx // 2] == 0)
        c3 = partial(random_field(g), "y", 3).coeffs
        assert np.all(c3[g.Ny // 2, :] == 0)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2 ** 16))
    def test_mixed_partials_commute(self, seed):
        g = GridSpec(16, 16, 1.1, 0.9)
        f = random_field(g, seed)
        a = partial(partial(f, "x"), "y").values
        b = partial(partial(f, "y"), "x").values
        assert np.abs(a - b).max() < 1e-12 * max(1.0, np.abs(a).max())


class TestAntiderivative:
    def test_cos_to_sin(self):
        g = GridSpec(32, 4, 1.0, 1.0)
        f = SpectralField.from_function(g, lambda x, y: np.cos(x) + 0 * y)
        X, _ = g.mesh()
        assert np.abs(antiderivative_x(f).values - np.sin(X)).max() < 1e-12

    def test_kx0_content_annihilated(self):
        g = GridSpec(8, 8, 1.0, 1.0)
        f = random_field(g, 4)
        got = antiderivative_x(f).coeffs
        reg = default_regularization(g)
        expect = f.coeffs.copy()
        for b, k in enumerate(g.kx):
            expect[:, b] = 0 if k == 0 else expect[:, b] / (1j * (k + reg * np.sign(k)))
        assert np.abs(got - expect).max() < 1e-14
        assert np.all(got[:, g.jx == 0] == 0)

    def test_symbol_zero_at_origin(self):
        s = inverse_dx_symbol(np.array([-1.0, 0.0, 2.0]), 0.0)
        assert s[1] == 0
        assert s[0] == pytest.approx(1j)
        assert s[2] == pytest.approx(-0.5j)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2 ** 16))
    def test_inverts_dx_on_zero_mean_fields(self, seed):
        g = GridSpec(16, 8, 1.0, 1.0)
        c = random_field(g, seed).coeffs
        c[:, g.jx == 0] = 0
        c[:, g.jx == -g.Nx // 2] = 0
        f = SpectralField(g, values=SpectralField(g, coeffs=c).values)
        back = antiderivative_x(partial(f, "x")).values
        assert np.abs(back - f.values).max() < 1e-12


class TestKrasnyFilter:
    def test_zero_threshold_is_identity(self):
        g = GridSpec(8, 8)
        f = random_field(g)
        assert np.array_equal(krasny_filter(f, 0.0).coeffs, f.coeffs)

    def test_small_coefficient_removed(self):
        g = GridSpec(8, 8)
        c = np.zeros(g.shape, dtype=complex)
        c[0, 0] = 1.0
        c[1, 1] = 1e-12
        out = krasny_filter(SpectralField(g, coeffs=c), 1e-10).coeffs
        assert out[0, 0] == 1.0 and out[1, 1] == 0.0

    def test_matches_mask(self):
        g = GridSpec(16, 16)
        f = random_field(g, 5)
        thr = np.median(np.abs(f.coeffs))
        expect = np.where(np.abs(f.coeffs) < thr, 0, f.coeffs)
        assert np.array_equal(krasny_filter(f, thr).coeffs, expect)

    def test_idempotent(self):
        g = GridSpec(16, 16)
        f = random_field(g, 6)
        once = krasny_filter(f, 0.02)
        assert np.array_equal(krasny_filter(once, 0.02).coeffs, once.coeffs)

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            krasny_filter(random_field(GridSpec(8, 8)), -1.0)


class TestEvaluateSeries:
    def test_grid_nodes(self):
        g = GridSpec(16, 16, 1.0, 1.0)
        f = random_field(g, 7)
        for a, b in [(0, 0), (3, 5), (15, 9)]:
            assert evaluate_series(f, g.x[b], g.y[a]) == pytest.approx(f.values[a, b], abs=1e-12)

    def test_derivative_of_sin(self):
        g = GridSpec(16, 4, 1.0, 1.0)
        f = SpectralField.from_function(g, lambda x, y: np.sin(x) + 0 * y)
        assert evaluate_series(f, 0.0, 0.3, dx_order=1) == pytest.approx(1.0, abs=1e-13)

    def test_mixed_derivative_against_finite_differences(self):
        g = GridSpec(16, 16, 1.0, 1.0)
        rng = np.random.default_rng(8)
        c = np.zeros(g.shape, dtype=complex)
        low = (np.abs(g.jy)[:, None] <= 3) & (np.abs(g.jx)[None, :] <= 3)
        c[low] = rng.standard_normal(low.sum())
        f = SpectralField(g, values=SpectralField(g, coeffs=c).values)
        x0, y0, h = 0.37, -1.21, 1e-3
        w = np.array([1, -8, 0, 8, -1]) / (12 * h)
        s = np.arange(-2, 3) * h
        fd = sum(wi * wj * evaluate_series(f, x0 + si, y0 + sj)
                 for wi, si in zip(w, s) for wj, sj in zip(w, s))
        assert evaluate_series(f, x0, y0, 1, 1) == pytest.approx(fd, abs=1e-8)

    def test_order_bounds(self):
        with pytest.raises(ValueError):
            evaluate_series(random_field(GridSpec(8, 8)), 0, 0, 4, 0)


class TestNorms:
    def test_single_mode_norm(self):
        g = GridSpec(16, 16, 1.0, 2.0)
        f = SpectralField.from_function(g, lambda x, y: np.cos(x) + 0 * y)
        assert l2_norm(f) == pytest.approx(np.sqrt(g.area / 2), rel=1e-14)

    def test_identical_fields_have_no_drift(self):
        f = random_field(GridSpec(8, 8))
        assert relative_l2_drift(f, f.copy()) == 0.0

    def test_drift_of_zero_initial(self):
        g = GridSpec(8, 8)
        with pytest.raises(ValueError):
            relative_l2_drift(random_field(g), SpectralField.zeros(g))

    def test_half_spectrum_norm_agrees(self):
        g = GridSpec(32, 16, 1.2, 0.8)
        f = random_field(g, 9)
        four = Fourier(g)
        assert four.l2_norm(four.forward(f.values)) == pytest.approx(l2_norm(f), rel=1e-12)


class TestDecayReport:
    def test_band_below_max(self):
        r = decay_report(random_field(GridSpec(32, 32), 10))
        assert r.max_modulus_outer_band <= r.linf_coeff

    def test_smooth_field_decays(self):
        g = GridSpec(64, 64, 1.0, 1.0)
        f = SpectralField.from_function(g, lambda x, y: np.exp(np.cos(x) + np.sin(y)))
        r = decay_report(f)
        assert r.max_modulus_outer_band < 1e-12 * r.linf_coeff
        assert r.ratio < 1e-12
