import numpy as np
import pytest

from kpbreak.errors import BlowUpError, NumericalError
from kpbreak.gkp import (GkpProblem, GkpState, check_constraint_zero_mean, evolve_gkp, gkp_nonlinearity,
                         gkp_symbol)
from kpbreak.spectral import GridSpec, SpectralField, default_regularization


def brute_dx(grid, values):
    """x-derivative by direct DFT summation (no FFT)."""
    X = grid.x
    k = grid.kx
    E = np.exp(-1j * np.outer(k, X)) / grid.Nx
    c = values @ E.T
    c[:, grid.jx == -grid.Nx // 2] = 0
    return np.real((c * (1j * k)) @ np.exp(1j * np.outer(k, X)))


class TestSymbol:
    def test_unit_mode(self):
        g = GridSpec(8, 8, 1.0, 1.0)
        L = gkp_symbol(g, 1.0, 1)
        assert L[0, 1] == pytest.approx(1j)

    def test_kx0_column_vanishes(self):
        g = GridSpec(8, 8, 1.0, 1.0)
        L = gkp_symbol(g, 0.3, -1)
        assert np.all(L[:, g.jx == 0] == 0)

    def test_elementwise_formula(self):
        g = GridSpec(16, 8, 1.7, 0.6)
        eps, reg = 0.2, default_regularization(g)
        L = gkp_symbol(g, eps, -1)
        for a in range(g.Ny):
            for b in range(g.Nx):
                kx, ky = g.kx[b], g.ky[a]
                expect = 0 if kx == 0 else 1j * eps ** 2 * kx ** 3 - (-1) * ky ** 2 / (1j * (kx + reg * np.sign(kx)))
                if kx == 0:
                    expect = 1j * eps ** 2 * kx ** 3
                assert L[a, b] == pytest.approx(expect, abs=1e-12)

    def test_purely_imaginary(self):
        L = gkp_symbol(GridSpec(32, 16), 0.1, 1)
        assert np.abs(L.real).max() == 0


class TestNonlinearity:
    def test_zero(self):
        g = GridSpec(16, 8)
        assert np.all(gkp_nonlinearity(SpectralField.zeros(g), 0.0, 2).values == 0)

    def test_sin_closed_form(self):
        g = GridSpec(32, 4, 1.0, 1.0)
        u = SpectralField.from_function(g, lambda x, y: np.sin(x) + 0 * y)
        X, _ = g.mesh()
        out = gkp_nonlinearity(u, 0.0, 1).values
        assert np.abs(out + np.sin(X) * np.cos(X)).max() < 1e-12

    def test_brute_force_n3(self):
        g = GridSpec(8, 8, 1.0, 1.0)
        rng = np.random.default_rng(0)
        c = np.zeros(g.shape, dtype=complex)
        low = (np.abs(g.jx)[None, :] <= 1) & (np.abs(g.jy)[:, None] <= 1)
        c[low] = rng.standard_normal(low.sum())
        u = SpectralField(g, values=SpectralField(g, coeffs=c).values)
        expect = -brute_dx(g, u.values ** 4) / 4
        assert np.abs(gkp_nonlinearity(u, 0.0, 3).values - expect).max() < 1e-10

    def test_overflow(self):
        g = GridSpec(8, 8)
        u = SpectralField(g, values=np.full(g.shape, 1e200))
        with pytest.raises(NumericalError):
            gkp_nonlinearity(u, 0.0, 2)

    def test_bad_n(self):
        with pytest.raises(ValueError):
            gkp_nonlinearity(SpectralField.zeros(GridSpec(8, 8)), 0.0, 0)


class TestConstraint:
    def test_cos_has_zero_mean(self):
        g = GridSpec(16, 8, 1.0, 1.0)
        f = SpectralField.from_function(g, lambda x, y: np.cos(x) + 0 * y)
        assert check_constraint_zero_mean(f) < 1e-14

    def test_constant_offset(self):
        g = GridSpec(16, 8, 1.5, 1.0)
        f = SpectralField(g, values=np.ones(g.shape))
        assert check_constraint_zero_mean(f) == pytest.approx(2 * np.pi * 1.5)


class TestProblem:
    @pytest.mark.parametrize("kw", [dict(n=0), dict(sigma=2), dict(epsilon=0.0), dict(t_end=-1.0), dict(Nt=0)])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            GkpProblem(**kw)

    def test_snapshot_steps(self):
        p = GkpProblem(t_end=1.0, Nt=100, snapshot_times=(0.25, 0.5), snapshot_count=2)
        assert p.snapshot_steps() == [25, 50, 100]


def small_problem(**kw):
    base = dict(n=1, sigma=1, epsilon=0.1, grid=GridSpec(128, 64, 4.0, 4.0), u0="sym", t_end=0.05, Nt=50)
    base.update(kw)
    return GkpProblem(**base)


class TestEvolve:
    def test_zero_data_stays_zero(self):
        run = evolve_gkp(small_problem(u0="0*x"))
        assert np.all(run.final.values == 0)

    def test_soliton_one_period(self):
        kap, Lx = 0.3, 10.0
        g = GridSpec(256, 1, Lx, 1.0)
        period = 2 * np.pi * Lx / (4 * kap ** 2)
        p = GkpProblem(n=1, sigma=1, epsilon=1.0, grid=g, u0=f"12*{kap ** 2}*sech({kap}*x)**2",
                       t_end=period, Nt=4000)
        run = evolve_gkp(p, record_every=400)
        exact = 12 * kap ** 2 / np.cosh(kap * g.x) ** 2
        assert np.abs(run.final.values[0] - exact).max() < 1e-6

    def test_kx0_modes_stay_zero(self):
        p = small_problem()
        st = GkpState(p)
        for _ in range(5):
            st.step()
        assert np.all(st.uh[:, 0] == 0)
        assert check_constraint_zero_mean(st.field()) <= 1e-12

    def test_y_symmetry_preserved(self):
        run = evolve_gkp(small_problem(sigma=-1))
        v = run.final.values
        # y_j and y_{-j} pair up as rows j and Ny - j
        mirrored = np.roll(v[::-1], 1, axis=0)
        assert np.abs(v - mirrored).max() <= 1e-8

    def test_l2_conserved(self):
        run = evolve_gkp(small_problem(), record_every=10)
        assert max(run.diagnostics.delta2) < 1e-6
        t = run.diagnostics.times
        assert all(b > a for a, b in zip(t, t[1:]))

    def test_snapshots(self):
        run = evolve_gkp(small_problem(snapshot_times=(0.02,), snapshot_count=1))
        assert [round(t, 12) for t, _ in run.snapshots] == [0.02, 0.05]

    def test_restart_matches_continuous_run(self):
        p = small_problem(Nt=20, t_end=0.02)
        full = evolve_gkp(p)
        half = evolve_gkp(small_problem(Nt=20, t_end=0.02, snapshot_times=(0.01,)))
        t0, f0 = half.snapshots[0]
        resumed = evolve_gkp(p, state=GkpState.from_field(p, f0, t0))
        assert np.abs(resumed.final.values - full.final.values).max() < 1e-12

    def test_blow_up_guard(self):
        p = small_problem(n=2, u0="40*x*exp(-x**2-y**2)", Nt=200, t_end=1.0, linf_ceiling_factor=1.5)
        with pytest.raises(BlowUpError) as exc:
            evolve_gkp(p)
        assert exc.value.last_time is not None and exc.value.last_time < 1.0
        assert exc.value.partial.t <= 1.0
