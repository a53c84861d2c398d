import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar

from kpbreak.dkp import (DkpNonlinearity, DkpProblem, DkpState, characteristic_slices, delta_field, dkp_nonlinearity,
                         dkp_symbol, evolve_F, reconstruct_u)
from kpbreak.spectral import Fourier, GridSpec, SpectralField, krasny_filter

HOPF_DATA = "24*x*sech(x**2)**2*tanh(x**2)"


def hopf_u0(x):
    e = np.exp(-2 * x * x)
    return 24 * x * np.tanh(x * x) * 4 * e / (1 + e) ** 2


def hopf_tc():
    du = lambda s: (hopf_u0(s + 1e-6) - hopf_u0(s - 1e-6)) / 2e-6
    xs = np.linspace(-4, 4, 40001)
    s0 = xs[np.argmin(du(xs))]
    res = minimize_scalar(du, bracket=(s0 - 1e-3, s0, s0 + 1e-3))
    return -1.0 / res.fun


def hopf_solution(x, t):
    """u(x, t) of u_t + u u_x = 0 by inverting x = xi + t u0(xi) for each point."""
    return np.array([hopf_u0(brentq(lambda s: s + t * hopf_u0(s) - xv, xv - 20, xv + 20, xtol=1e-15))
                     for xv in x])


def dft_derivative(grid, values, p, q):
    """Spectral derivative by explicit DFT matrices."""
    Ex = np.exp(-1j * np.outer(grid.kx, grid.x)) / grid.Nx
    Ey = np.exp(-1j * np.outer(grid.ky, grid.y)) / grid.Ny
    c = Ey @ values @ Ex.T
    sx = (1j * grid.kx) ** p
    sy = (1j * grid.ky) ** q
    if p % 2:
        sx[grid.jx == -grid.Nx // 2] = 0
    if q % 2:
        sy[grid.jy == -grid.Ny // 2] = 0
    c = c * sy[:, None] * sx[None, :]
    return np.real(np.conj(Ey).T @ c @ np.conj(Ex)) * grid.Nx * grid.Ny


def smooth_field(grid, seed, modes=2):
    rng = np.random.default_rng(seed)
    c = np.zeros(grid.shape, dtype=complex)
    low = (np.abs(grid.jx)[None, :] <= modes) & (np.abs(grid.jy)[:, None] <= modes) & (grid.jx[None, :] != 0)
    c[low] = rng.standard_normal(low.sum()) + 1j * rng.standard_normal(low.sum())
    return SpectralField(grid, values=SpectralField(grid, coeffs=c).values)


class TestSymbol:
    def test_unit_mode(self):
        g = GridSpec(8, 8, 1.0, 1.0)
        L = dkp_symbol(g, 1)
        assert L[1, 1] == pytest.approx(1j)

    def test_kxi0_column(self):
        g = GridSpec(8, 8, 1.0, 1.0)
        assert np.all(dkp_symbol(g, -1)[:, 0] == 0)

    def test_elementwise(self):
        g = GridSpec(16, 8, 1.3, 0.4)
        L = dkp_symbol(g, -1, regularization=0.0)
        for a in range(g.Ny):
            for b in range(g.Nx):
                kx, ky = g.kx[b], g.ky[a]
                expect = 0 if kx == 0 else 1j * (-1) * ky ** 2 / kx
                assert L[a, b] == pytest.approx(expect, abs=1e-12)

    def test_half_grid_agrees(self):
        g = GridSpec(16, 8, 1.3, 0.4)
        full = dkp_symbol(g, 1)
        half = dkp_symbol(g, 1, half=True)
        assert np.allclose(half[:, :-1], full[:, : g.Nx // 2])


class TestNonlinearity:
    def test_vanishes_at_t0(self):
        g = GridSpec(16, 16)
        assert np.all(dkp_nonlinearity(smooth_field(g, 0), 0.0, 2, 1).values == 0)

    def test_vanishes_for_y_independent_data(self):
        g = GridSpec(32, 8, 1.0, 1.0)
        F = SpectralField.from_function(g, lambda x, y: np.sin(x) + 0 * y)
        assert np.abs(dkp_nonlinearity(F, 0.3, 1, 1).values).max() < 1e-14

    def test_against_direct_evaluation(self):
        g = GridSpec(8, 8, 1.0, 1.0)
        F = smooth_field(g, 1, modes=1)
        n, t, sigma = 3, 0.5, -1
        v = F.values
        Fxi = dft_derivative(g, v, 1, 0)
        Fy = dft_derivative(g, v, 0, 1)
        Fyy = dft_derivative(g, v, 0, 2)
        # d_xi^{-1} by dividing the DFT by i kx, zero at kx = 0
        Ex = np.exp(-1j * np.outer(g.kx, g.x)) / g.Nx
        c = Fyy @ Ex.T
        inv = np.zeros(g.Nx, dtype=complex)
        nz = g.kx != 0
        inv[nz] = 1 / (1j * g.kx[nz])
        P = np.real((c * inv) @ np.exp(1j * np.outer(g.kx, g.x)))
        expect = sigma * t * n * v ** (n - 1) * (Fxi * P - Fy ** 2)
        got = dkp_nonlinearity(F, t, n, sigma).values
        assert np.abs(got - expect).max() < 1e-9

    def test_negative_time(self):
        with pytest.raises(ValueError):
            dkp_nonlinearity(SpectralField.zeros(GridSpec(8, 8)), -0.1, 1, 1)

    @pytest.mark.parametrize("projection", ["weighted", "uniform"])
    def test_projection_keeps_zero_mean_rhs(self, projection):
        g = GridSpec(32, 16, 1.0, 1.0)
        F = smooth_field(g, 2)
        four = Fourier(g)
        rhs = DkpNonlinearity(four, 1, 1, projection=projection)
        L = dkp_symbol(g, 1, half=True)
        Fh = four.forward(F.values)
        total = rhs(Fh, 0.2) + L * Fh
        assert np.abs(total[:, 0]).max() < 1e-15

    def test_weighted_projection_is_a_row_constant_in_p(self):
        # removing Delta * mean(N) equals shifting d^{-1}F_yy by a row constant
        g = GridSpec(32, 16, 1.0, 1.0)
        F = smooth_field(g, 3)
        four = Fourier(g)
        Fh = four.forward(F.values)
        raw = DkpNonlinearity(four, 1, 1, project=False).physical(Fh, 0.3)
        proj = DkpNonlinearity(four, 1, 1).physical(Fh, 0.3)
        Fxi = four.inverse(four.dx(1) * Fh)
        delta = 1 + 0.3 * Fxi
        c = (raw - proj) / delta
        assert np.abs(c - c[:, :1]).max() < 1e-12

    def test_bad_projection(self):
        with pytest.raises(ValueError):
            DkpNonlinearity(Fourier(GridSpec(8, 8)), 1, 1, projection="nope")


class TestDeltaField:
    def test_identity_at_t0(self):
        g = GridSpec(16, 16)
        d, m = delta_field(smooth_field(g, 4), 0.0, 2)
        assert np.all(d.values == 1.0) and m == 1.0

    def test_bump(self):
        g = GridSpec(128, 8, 2.0, 1.0)
        F = SpectralField.from_function(g, lambda x, y: np.exp(-x * x) + 0 * y)
        X, _ = g.mesh()
        t = 0.05
        d, m = delta_field(F, t, 2)
        gxi = -4 * X * np.exp(-2 * X * X)
        assert np.abs(d.values - (1 + t * gxi)).max() < 1e-12
        assert m == pytest.approx(1 + t * gxi.min(), abs=1e-12)


class TestEvolve:
    def test_y_independent_data_is_frozen(self):
        g = GridSpec(256, 4, 2.0, 1.0)
        p = DkpProblem(n=1, sigma=1, grid=g, initial=HOPF_DATA, t_end=0.05, Nt=50)
        run = evolve_F(p, record_every=10)
        ref = krasny_filter(p.initial_field(), p.krasny_threshold).values
        assert np.abs(run.final.values - ref).max() < 1e-10

    def test_l2_conserved_and_mean_free(self):
        g = GridSpec(128, 128, 4.0, 4.0)
        p = DkpProblem(n=1, sigma=1, grid=g, initial="sym", t_end=0.1, Nt=100)
        run = evolve_F(p, record_every=20)
        assert max(run.diagnostics.delta2) < 1e-9
        assert np.abs(run.final.values.sum(axis=1)).max() * g.dx < 1e-12

    def test_even_data_stays_even(self):
        g = GridSpec(64, 64, 4.0, 4.0)
        run = evolve_F(DkpProblem(n=1, sigma=-1, grid=g, initial="sym", t_end=0.05, Nt=50))
        v = run.final.values
        assert np.abs(v - np.roll(v[::-1], 1, axis=0)).max() < 1e-10

    def test_n3_runs_past_breakup_time(self):
        g = GridSpec(128, 128, 4.0, 4.0)
        run = evolve_F(DkpProblem(n=3, sigma=1, grid=g, initial="sym", t_end=0.0065, Nt=100), record_every=10)
        assert np.all(np.isfinite(run.final.values))
        assert run.diagnostics.min_delta[-1] < 0 < run.diagnostics.min_delta[0]

    def test_snapshots_and_state_api(self):
        g = GridSpec(32, 32, 4.0, 4.0)
        p = DkpProblem(grid=g, t_end=0.02, Nt=20, snapshot_times=(0.01,))
        run = evolve_F(p)
        assert len(run.snapshots) == 1 and run.snapshots[0][0] == pytest.approx(0.01)
        st = DkpState.from_problem(p).advance_to(0.015, h=0.004)
        assert st.t == pytest.approx(0.015)
        with pytest.raises(ValueError):
            DkpState.from_field(p.initial_field(), 1, 1, -1.0, 0.001)

    @pytest.mark.parametrize("kw", [dict(n=0), dict(sigma=0), dict(t_end=0.0), dict(Nt=0)])
    def test_problem_validation(self, kw):
        with pytest.raises(ValueError):
            DkpProblem(**kw)


class TestReconstruction:
    def test_identity_at_t0(self):
        g = GridSpec(64, 8, 2.0, 1.0)
        F = DkpProblem(grid=g, initial=HOPF_DATA).initial_field()
        rec = reconstruct_u(F, 0.0, 1, g.x)
        assert np.abs(rec.u - F.values).max() < 1e-14
        assert rec.non_monotone_rows == []

    def test_hopf_oracle(self):
        g = GridSpec(512, 4, 2.0, 1.0)
        t = 0.5 * hopf_tc()
        p = DkpProblem(n=1, sigma=1, grid=g, initial=HOPF_DATA, t_end=t, Nt=20)
        run = evolve_F(p)
        x = np.linspace(-3, 3, 121)
        rec = reconstruct_u(run.final, run.t, 1, x)
        assert np.abs(rec.u[0] - hopf_solution(x, run.t)).max() < 1e-6

    def test_pchip_method_is_shape_preserving(self):
        g = GridSpec(256, 4, 2.0, 1.0)
        F = DkpProblem(grid=g, initial=HOPF_DATA).initial_field()
        x = np.linspace(-3, 3, 301)
        u = reconstruct_u(F, 0.02, 1, x, method="pchip").u[0]
        ref = hopf_solution(x, 0.02)
        assert np.abs(u - ref).max() < 5e-2
        assert u.max() <= F.values.max() + 1e-12
        with pytest.raises(ValueError):
            reconstruct_u(F, 0.02, 1, x, method="linear")

    def test_non_monotone_rows_flagged(self):
        g = GridSpec(256, 4, 2.0, 1.0)
        F = DkpProblem(grid=g, initial=HOPF_DATA).initial_field()
        t = 1.5 * hopf_tc()
        rec = reconstruct_u(F, t, 1, g.x)
        assert rec.non_monotone_rows == [0, 1, 2, 3]
        assert np.all(np.isnan(rec.u))

    def test_extrapolation_flagged(self):
        g = GridSpec(64, 4, 1.0, 1.0)
        F = DkpProblem(grid=g, initial=HOPF_DATA).initial_field()
        rec = reconstruct_u(F, 0.01, 1, np.array([0.0, 10.0]))
        assert rec.extrapolated and rec.u[0, 1] == 0.0

    def test_monotone_iff_delta_positive(self):
        g = GridSpec(256, 4, 2.0, 1.0)
        F = DkpProblem(grid=g, initial=HOPF_DATA).initial_field()
        tc = hopf_tc()
        for t in (0.5 * tc, 0.99 * tc, 1.05 * tc, 2 * tc):
            for s in characteristic_slices(F, t, 1):
                assert s.monotone == (s.min_delta_row > 0)

    def test_gradient_blows_up_like_inverse_time(self):
        g = GridSpec(2048, 4, 2.0, 1.0)
        F = DkpProblem(grid=g, initial=HOPF_DATA).initial_field()
        tc = hopf_tc()
        dts = tc * np.logspace(-2, -1, 6)
        fxi = np.gradient(F.values[0], g.dx)
        grads = [np.abs(fxi / (1 + (tc - d) * fxi)).max() for d in dts]
        slope = np.polyfit(np.log(dts), np.log(grads), 1)[0]
        assert -2.0 < slope < -0.5
