"""Dispersionless gKP in characteristic variables.

With ``u(x, y, t) = F(xi, y, t)`` and ``x = t F^n + xi`` the dispersionless
equation ``(u_t + u^n u_x)_x = sigma u_yy`` becomes

    F_t = sigma * ((1 + t n F^(n-1) F_xi) d_xi^{-1} F_yy - t n F^(n-1) F_y^2)

which stays smooth through the gradient catastrophe of ``u``.  The linear
part ``sigma d_xi^{-1} d_yy`` has the diagonal symbol ``i sigma ky^2 / kxi``
and is integrated exactly by ETDRK4; the rest is the nonlinear term.  The
characteristic map stops being invertible where

    Delta = 1 + t G_xi,   G = F^n

first reaches zero.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import initial as initial_data
from .errors import NumericalError
from .etd import Integrator, StepperConfig
from .spectral import Fourier, GridSpec, SpectralField, inverse_dx_symbol, relative_l2_drift

log = logging.getLogger(__name__)


def ipow(a, k):
    """``a**k`` for a small non-negative integer ``k`` by repeated products."""
    if k == 0:
        return np.ones_like(a)
    out = a
    for _ in range(k - 1):
        out = out * a
    return out


def dkp_symbol(grid, sigma, regularization=None, half=False):
    """``i sigma ky^2 / kxi`` on the full (or half) wavenumber grid; 0 at ``kxi = 0``."""
    if half:
        f = Fourier(grid)
        return sigma * (-(f.ky**2)) * f.inv_dx(regularization)
    reg = 1e-16 * np.max(np.abs(grid.kx)) if regularization is None else regularization
    inv = inverse_dx_symbol(grid.kx, reg)[None, :]
    return sigma * (-(grid.ky[:, None] ** 2)) * inv


class DkpNonlinearity:
    """Nonlinear term of the F equation acting on half-spectrum coefficients."""

    def __init__(self, fourier, n, sigma, project=True, projection="weighted"):
        if projection not in ("weighted", "uniform"):
            raise ValueError(f"projection must be 'weighted' or 'uniform', got {projection!r}")
        self.f = fourier
        self.n = n
        self.sigma = sigma
        self.project = project
        self.projection = projection
        self.dxi = fourier.dx(1)
        self.dy = fourier.dy(1)
        self.inv_dyy = fourier.inv_dx() * fourier.dy(2)

    def physical(self, Fh, t, project=None):
        """Nonlinear term on the grid.

        The zero-mean antiderivative ``P`` is only fixed up to a row constant
        ``c(y)``.  With ``project`` the constant is chosen so that the full
        right-hand side keeps ``int F dxi = 0``; since ``c`` enters as
        ``sigma Delta c`` this removes ``Delta * mean(N)`` per row, not just
        ``mean(N)``.  ``projection="uniform"`` removes the plain row mean
        instead; it also keeps the mean at zero but solves a perturbed
        equation, visible as O(1e-2) violations of the critical-point
        constraints.
        """
        project = self.project if project is None else project
        f = self.f
        F = f.inverse(Fh)
        Fxi = f.inverse(self.dxi * Fh)
        Fy = f.inverse(self.dy * Fh)
        P = f.inverse(self.inv_dyy * Fh)
        Gp = self.n * ipow(F, self.n - 1) if self.n > 1 else 1.0
        N = self.sigma * t * Gp * (Fxi * P - Fy * Fy)
        if project and self.projection == "uniform":
            N -= N.mean(axis=1, keepdims=True)
        elif project:
            delta = 1.0 + t * Gp * Fxi
            N -= delta * N.mean(axis=1, keepdims=True)
        return N

    def __call__(self, Fh, t):
        if t == 0.0:
            return np.zeros_like(Fh)
        N = self.f.forward(self.physical(Fh, t))
        if self.project:
            N *= self.f.keep
        return N


def dkp_nonlinearity(F, t, n, sigma):
    """Nonlinear term ``sigma t n F^(n-1) (F_xi d^{-1}F_yy - F_y^2)`` as a field.

    The x-mean of the result is *not* removed here; the evolution does that.
    """
    if t < 0:
        raise ValueError("negative times are not supported")
    four = Fourier(F.grid)
    Fh = four.forward(F.values)
    with np.errstate(over="raise", invalid="raise"):
        try:
            N = DkpNonlinearity(four, n, sigma, project=False).physical(Fh, t)
        except FloatingPointError as exc:
            raise NumericalError(f"overflow in dKP nonlinearity: {exc}") from None
    return SpectralField(F.grid, values=N)


def delta_values(fourier, Fh, t, n):
    """Samples of ``Delta = 1 + t d_xi(F^n)`` from half-spectrum coefficients."""
    if n == 1:
        Gh = Fh
    else:
        Gh = fourier.forward(ipow(fourier.inverse(Fh), n))
    return 1.0 + t * fourier.inverse(fourier.dx(1) * Gh)


def delta_field(F, t, n):
    """``(Delta, min Delta)`` with ``G = F^n`` formed pointwise and differentiated spectrally."""
    four = Fourier(F.grid)
    d = delta_values(four, four.forward(F.values), t, n)
    return SpectralField(F.grid, values=d), float(d.min())


@dataclass
class DkpProblem:
    n: int = 1
    sigma: int = 1
    grid: GridSpec = field(default_factory=lambda: GridSpec(512, 2048, 4.0, 4.0))
    initial: object = "sym"
    t_end: float = 0.25
    Nt: int = 1000
    krasny_threshold: float = 1e-10
    snapshot_times: tuple = ()
    projection: str = "weighted"

    def __post_init__(self):
        if self.n < 1 or int(self.n) != self.n:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if self.sigma not in (1, -1):
            raise ValueError(f"sigma must be +1 or -1, got {self.sigma}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.Nt < 1:
            raise ValueError("Nt must be positive")

    @property
    def h(self):
        return self.t_end / self.Nt

    def initial_field(self):
        return initial_data.build_initial_data(self.initial, self.grid)


class DkpState:
    """Mutable time-stepping state for the F equation.

    ``Fh`` holds half-spectrum coefficients.  The Krasny filter is applied
    once per completed step.
    """

    def __init__(self, grid, n, sigma, Fh, t=0.0, h=1e-3, krasny_threshold=1e-10, projection="weighted"):
        if t < 0:
            raise ValueError("negative times are not supported")
        self.grid = grid
        self.n = n
        self.sigma = sigma
        self.fourier = Fourier(grid)
        self.Fh = Fh
        self.t = float(t)
        self.krasny_threshold = krasny_threshold
        self.projection = projection
        self.rhs = DkpNonlinearity(self.fourier, n, sigma, projection=projection)
        L = dkp_symbol(grid, sigma, half=True)
        self.integrator = Integrator(L, self.rhs, StepperConfig(h=h))

    @classmethod
    def from_problem(cls, problem):
        four = Fourier(problem.grid)
        Fh = four.forward(problem.initial_field().values) * four.keep
        return cls(problem.grid, problem.n, problem.sigma, Fh, 0.0, problem.h, problem.krasny_threshold,
                   problem.projection)

    @classmethod
    def from_field(cls, F, n, sigma, t, h, krasny_threshold=1e-10, projection="weighted"):
        four = Fourier(F.grid)
        return cls(F.grid, n, sigma, four.forward(F.values) * four.keep, t, h, krasny_threshold, projection)

    def copy(self):
        new = object.__new__(DkpState)
        new.__dict__.update(self.__dict__)
        new.Fh = self.Fh.copy()
        return new

    def step(self, h=None):
        h = self.integrator.config.h if h is None else h
        Fh = self.integrator.step(self.Fh, self.t, h)
        if self.krasny_threshold:
            Fh[np.abs(Fh) < self.krasny_threshold] = 0.0
        self.Fh = Fh
        self.t = self.t + h
        return self

    def advance_to(self, t_target, h=None):
        """Step until ``t_target``; the last step is shortened to land on it."""
        h = self.integrator.config.h if h is None else h
        while self.t < t_target - 1e-14 * max(1.0, abs(t_target)):
            self.step(min(h, t_target - self.t))
        return self

    def delta(self):
        return delta_values(self.fourier, self.Fh, self.t, self.n)

    def min_delta(self):
        return float(self.delta().min())

    def field(self):
        return self.fourier.to_field(self.Fh)

    def l2(self):
        return self.fourier.l2_norm(self.Fh)

    def decay(self):
        return self.fourier.decay(self.Fh)


@dataclass
class DkpDiagnostics:
    times: list = field(default_factory=list)
    delta2: list = field(default_factory=list)
    min_delta: list = field(default_factory=list)
    outer_band: list = field(default_factory=list)
    max_Fyy: list = field(default_factory=list)


@dataclass
class DkpRun:
    final: SpectralField
    t: float
    diagnostics: DkpDiagnostics
    snapshots: list  # (t, SpectralField)


def evolve_F(problem, record_every=1, state=None):
    """Evolve F to ``problem.t_end`` with per-step Krasny filtering.

    Diagnostics (l2 drift, min Delta, outer-band coefficient modulus) are
    recorded every ``record_every`` steps; snapshots at the requested times
    (rounded to the nearest step).
    """
    st = DkpState.from_problem(problem) if state is None else state
    n0 = st.l2()
    diag = DkpDiagnostics()
    snap_steps = {int(round((ts - st.t) / problem.h)): ts for ts in problem.snapshot_times}
    snaps = []
    nsteps = int(round((problem.t_end - st.t) / problem.h))
    warned = False
    for k in range(nsteps + 1):
        if k % record_every == 0 or k == nsteps:
            dec = st.decay()
            diag.times.append(st.t)
            diag.delta2.append(relative_l2_drift(st.l2(), n0) if n0 > 0 else 0.0)
            diag.min_delta.append(st.min_delta())
            diag.outer_band.append(dec.max_modulus_outer_band)
            fyy = st.fourier.inverse(st.fourier.dy(2) * st.Fh)
            diag.max_Fyy.append(float(np.abs(fyy).max()))
            if not warned and st.krasny_threshold and dec.max_modulus_outer_band > 10 * st.krasny_threshold:
                log.warning("F coefficients lost decay at t=%.6g (outer band %.2e)", st.t,
                            dec.max_modulus_outer_band)
                warned = True
        if k in snap_steps:
            snaps.append((st.t, st.field()))
        if k < nsteps:
            st.step()
    return DkpRun(final=st.field(), t=st.t, diagnostics=diag, snapshots=snaps)


@dataclass
class CharacteristicSlice:
    y: float
    x: np.ndarray
    u: np.ndarray
    monotone: bool
    min_delta_row: float


def characteristic_slices(F, t, n):
    """Per-row characteristic data ``x_i = t F^n + xi_i``, ``u_i = F``."""
    grid = F.grid
    Fv = F.values
    D, _ = delta_field(F, t, n)
    out = []
    for iy, yv in enumerate(grid.y):
        x = t * Fv[iy] ** n + grid.x
        out.append(CharacteristicSlice(y=float(yv), x=x, u=Fv[iy].copy(),
                                       monotone=bool(np.all(np.diff(x) > 0)),
                                       min_delta_row=float(D.values[iy].min())))
    return out


@dataclass
class Reconstruction:
    u: np.ndarray  # (Ny, len(target_x))
    non_monotone_rows: list
    extrapolated: bool
    slices: Optional[list] = None


def _row_series(Frow, Lx):
    """Callable ``(F, F_xi)`` of one row's truncated Fourier series at arbitrary ``xi``."""
    N = Frow.size
    c = np.fft.rfft(Frow) / N
    k = np.arange(c.size) / Lx
    w = np.full(c.size, 2.0)
    w[0] = 1.0
    if N % 2 == 0:
        w[-1] = 0.0  # Nyquist term has no well-defined derivative
    c = c * w * np.exp(1j * k * np.pi * Lx)  # grid starts at -pi Lx

    def ev(xi):
        e = np.exp(1j * np.outer(xi, k))
        return (e @ c).real, (e @ (1j * k * c)).real

    return ev


def _newton_rows(s, target, t, n, Lx, iters=6):
    ev = _row_series(s.u, Lx)
    xi = PchipInterpolator(s.x, s.x - t * s.u ** n)(target)
    for _ in range(iters):
        f, fx = ev(xi)
        r = t * f ** n + xi - target
        xi = xi - r / (1.0 + t * n * f ** (n - 1) * fx)
        if np.abs(r).max() < 1e-14 * max(1.0, np.abs(target).max()):
            break
    return ev(xi)[0]


def reconstruct_u(F, t, n, target_x, method="spectral"):
    """Resample ``u(x, y, t)`` onto ``target_x`` row by row.

    ``method="pchip"`` is monotone (shape-preserving) cubic interpolation of
    ``(x_i, u_i)``.  ``method="spectral"`` uses the same interpolant of the
    inverse map ``xi(x)`` as a seed and then solves ``x = t F^n + xi`` by
    Newton's method on the row's Fourier series, which is exact up to the
    series truncation.  Rows whose characteristic map is not monotone are
    reported and left as NaN.  Points outside the characteristic image get
    the decay value 0 and are flagged through ``extrapolated``.
    """
    if method not in ("spectral", "pchip"):
        raise ValueError(f"method must be 'spectral' or 'pchip', got {method!r}")
    target_x = np.asarray(target_x, dtype=float)
    slices = characteristic_slices(F, t, n)
    u = np.full((len(slices), target_x.size), np.nan)
    bad = []
    extrap = False
    for iy, s in enumerate(slices):
        if not s.monotone:
            bad.append(iy)
            continue
        inside = (target_x >= s.x[0]) & (target_x <= s.x[-1])
        if not np.all(inside):
            extrap = True
        row = np.zeros(target_x.size)
        if method == "pchip" or t == 0.0:
            row[inside] = PchipInterpolator(s.x, s.u)(target_x[inside])
        else:
            row[inside] = _newton_rows(s, target_x[inside], t, n, F.grid.Lx)
        u[iy] = row
    return Reconstruction(u=u, non_monotone_rows=bad, extrapolated=extrap, slices=slices)
