"""Generalized KP equation ``(u_t + u^n u_x + eps^2 u_xxx)_x = sigma u_yy``.

Written in evolutionary form ``u_t = L u + N(u)`` with the diagonal symbol
``L = i (eps^2 kx^3 + sigma ky^2 / kx)`` and ``N = -d_x(u^(n+1)) / (n+1)``.
The ``kx = 0`` modes are held at zero, which is the zero-mean constraint on
every line ``y = const``.  With ``Ny == 1`` the solver reduces to the
generalized KdV equation and the mean is left free.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import initial as initial_data
from .dkp import ipow
from .errors import BlowUpError, NumericalError
from .etd import Integrator, StepperConfig
from .spectral import (Fourier, GridSpec, SpectralField, default_regularization, inverse_dx_symbol,
                       relative_l2_drift)

log = logging.getLogger(__name__)


def gkp_symbol(grid, epsilon, sigma, half=False, regularization=None):
    """``i (eps^2 kx^3 + sigma ky^2 / kx)``; the ``ky^2/kx`` part is 0 at ``kx = 0``."""
    if half:
        f = Fourier(grid)
        kx = f.kx * np.ones(f.cshape)
        ky = f.ky
        inv = f.inv_dx(regularization)
    else:
        reg = default_regularization(grid) if regularization is None else regularization
        kx = np.broadcast_to(grid.kx[None, :], grid.shape)
        ky = grid.ky[:, None]
        inv = inverse_dx_symbol(grid.kx, reg)[None, :]
    # i sigma ky^2 / kx == -sigma ky^2 / (i kx)
    return 1j * epsilon ** 2 * kx ** 3 - sigma * ky ** 2 * inv


class GkpNonlinearity:
    """``-d_x(u^(n+1)) / (n+1)`` on half-spectrum coefficients."""

    def __init__(self, fourier, n, keep):
        self.f = fourier
        self.n = n
        self.dx = fourier.dx(1)
        self.keep = keep

    def __call__(self, uh, t):
        u = self.f.inverse(uh)
        return -(self.dx * self.f.forward(ipow(u, self.n + 1))) * (self.keep / (self.n + 1))


def gkp_nonlinearity(u, t, n):
    """Nonlinear term ``-d_x(u^(n+1))/(n+1)`` of a field, as a field."""
    if n < 1:
        raise ValueError("n must be >= 1")
    four = Fourier(u.grid)
    with np.errstate(over="raise", invalid="raise"):
        try:
            p = ipow(u.values, n + 1)
        except FloatingPointError as exc:
            raise NumericalError(f"overflow in u^(n+1): {exc}") from None
    ph = four.forward(p) * four.dx(1) / (n + 1)
    return SpectralField(u.grid, values=-four.inverse(ph))


def check_constraint_zero_mean(fld):
    """Largest ``|integral u dx|`` over the lines ``y = const``."""
    g = fld.grid
    return float(np.abs(fld.values.sum(axis=1) * g.dx).max())


@dataclass
class GkpProblem:
    n: int = 1
    sigma: int = 1
    epsilon: float = 0.1
    grid: GridSpec = field(default_factory=lambda: GridSpec(1024, 512, 2.0, 2.0))
    u0: object = "sym"
    t_end: float = 0.2
    Nt: int = 1000
    filter_threshold: float = 1e-10
    snapshot_times: tuple = ()
    snapshot_count: int = 0
    linf_ceiling_factor: float = 1e3
    decay_ratio_limit: float = 1e-2

    def __post_init__(self):
        if self.n < 1 or int(self.n) != self.n:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if self.sigma not in (1, -1):
            raise ValueError(f"sigma must be +1 or -1, got {self.sigma}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.Nt < 1:
            raise ValueError("Nt must be positive")

    @property
    def h(self):
        return self.t_end / self.Nt

    @property
    def one_dimensional(self):
        return self.grid.Ny == 1

    def initial_field(self):
        if isinstance(self.u0, SpectralField):
            if self.one_dimensional:
                return self.u0
            return initial_data.build_initial_data(self.u0, self.grid)
        if self.one_dimensional:
            f = initial_data.resolve(self.u0).function()
            return SpectralField.from_function(self.grid, f)
        return initial_data.build_initial_data(self.u0, self.grid)

    def snapshot_steps(self):
        steps = {int(round(ts / self.h)) for ts in self.snapshot_times}
        if self.snapshot_count:
            steps |= {int(round(k * self.Nt / self.snapshot_count)) for k in range(1, self.snapshot_count + 1)}
        return sorted(s for s in steps if 0 <= s <= self.Nt)


@dataclass
class RunDiagnostics:
    times: list = field(default_factory=list)
    delta2: list = field(default_factory=list)
    linf: list = field(default_factory=list)
    decay: list = field(default_factory=list)

    def rows(self):
        """``(t, delta2, linf, outer_band)`` tuples."""
        return [(t, d, l, r.max_modulus_outer_band)
                for t, d, l, r in zip(self.times, self.delta2, self.linf, self.decay)]


@dataclass
class GkpRun:
    final: SpectralField
    t: float
    diagnostics: RunDiagnostics
    snapshots: list  # (t, SpectralField)


class GkpState:
    """Half-spectrum state of one gKP evolution."""

    def __init__(self, problem, uh=None, t=0.0):
        self.problem = problem
        grid = problem.grid
        self.fourier = f = Fourier(grid)
        if problem.one_dimensional:
            keep = np.ones(f.cshape)
            keep[:, -1] = 0.0
        else:
            keep = f.keep
        self.keep = keep
        if uh is None:
            uh = f.forward(problem.initial_field().values) * keep
        self.uh = uh
        self.t = float(t)
        L = gkp_symbol(grid, problem.epsilon, problem.sigma, half=True) * keep
        self.integrator = Integrator(L, GkpNonlinearity(f, problem.n, keep), StepperConfig(h=problem.h))

    @classmethod
    def from_field(cls, problem, fld, t):
        """Restart from samples at time ``t``."""
        st = cls(problem, uh=Fourier(problem.grid).forward(fld.values), t=t)
        st.uh = st.uh * st.keep
        return st

    def step(self):
        uh = self.integrator.step(self.uh, self.t)
        thr = self.problem.filter_threshold
        if thr:
            uh[np.abs(uh) < thr] = 0.0
        self.uh = uh
        self.t += self.problem.h
        return self

    def field(self):
        return self.fourier.to_field(self.uh)

    def linf(self):
        return float(np.abs(self.fourier.inverse(self.uh)).max())


def evolve_gkp(problem, record_every=1, state=None):
    """Evolve to ``problem.t_end`` with ``problem.Nt`` ETDRK4 steps.

    Diagnostics are recorded every ``record_every`` steps.  The run stops
    with :class:`BlowUpError` when ``max|u|`` exceeds
    ``linf_ceiling_factor`` times its initial value or the outer-band
    coefficients exceed ``decay_ratio_limit`` times the largest one; the
    error carries the last resolved time and the partial run.
    """
    st = GkpState(problem) if state is None else state
    f = st.fourier
    n0 = f.l2_norm(st.uh)
    linf0 = st.linf()
    ceiling = problem.linf_ceiling_factor * max(linf0, 1e-300)
    diag = RunDiagnostics()
    snaps = []
    snap_steps = set(problem.snapshot_steps())
    k0 = int(round(st.t / problem.h))
    last_ok = st.t

    def partial():
        return GkpRun(final=st.field(), t=st.t, diagnostics=diag, snapshots=snaps)

    for k in range(k0, problem.Nt + 1):
        linf = st.linf()
        dec = f.decay(st.uh)
        if not np.isfinite(linf) or linf > ceiling:
            raise BlowUpError(f"max|u| = {linf:.3g} exceeds the ceiling {ceiling:.3g} at t={st.t:.6g}",
                              last_time=last_ok, partial=partial())
        if dec.ratio > problem.decay_ratio_limit:
            raise BlowUpError(f"Fourier coefficients lost decay at t={st.t:.6g} (outer band ratio {dec.ratio:.2e})",
                              last_time=last_ok, partial=partial())
        last_ok = st.t
        if (k - k0) % record_every == 0 or k == problem.Nt:
            diag.times.append(st.t)
            diag.delta2.append(relative_l2_drift(f.l2_norm(st.uh), n0) if n0 > 0 else 0.0)
            diag.linf.append(linf)
            diag.decay.append(dec)
        if k in snap_steps:
            snaps.append((st.t, st.field()))
        if k < problem.Nt:
            try:
                st.step()
            except NumericalError as exc:
                raise BlowUpError(str(exc), last_time=last_ok, partial=partial()) from None
    return partial()
