"""Local approximation of dispersive solutions near a dispersionless break-up.

Near ``(x_c, y_c, t_c)`` the solution is modelled as

    u ~ u_c + 6/(n u_c^(n-1)) (eps^2/kappa^2)^(1/7) U(X/(kappa eps^6)^(1/7), T/(kappa^3 eps^4)^(1/7))
        + ybar * beta_bar

with ``U`` the PI2 solution and ``(X, T)`` polynomial in the shifted
coordinates, built from the derivative bundle of ``G = F^n``.

Sign convention.  ``kappa = -36 t_c^4 G_xixixi`` is negative for a generic
break-up.  Matching the large-``|X|`` cubic branch of ``U`` to the outer
relation ``X = T zeta - (k/6) zeta^3`` fixes the scalings to use ``|kappa|``;
the literal odd seventh root of a negative ``kappa`` flips the sign of the
scaled ``X`` and is available only as ``branch="odd"`` for comparison.
The same holds for ``gamma`` in the one-dimensional KdV formula.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .pi2 import central_weights, eval_U
from .spectral import SpectralField

_ODD_Y = ("G_y", "G_xiy", "G_xixiy", "G_yyy", "F_y", "F_xiy")


def root7(v, branch="matched"):
    """Seventh root: of ``|v|`` for the matched branch, sign-preserving for ``"odd"``."""
    v = float(v)
    if branch == "matched":
        return abs(v) ** (1.0 / 7.0)
    if branch == "odd":
        return float(np.sign(v)) * abs(v) ** (1.0 / 7.0)
    raise ValueError(f"branch must be 'matched' or 'odd', got {branch!r}")


@dataclass
class AsymptoticParams:
    cp: object  # CriticalPoint
    epsilon: float
    n: Optional[int] = None
    sigma: Optional[int] = None
    symmetric: bool = False
    branch: str = "matched"
    symmetry_tol: float = 1e-6

    def __post_init__(self):
        if self.n is None:
            self.n = self.cp.n
        if self.sigma is None:
            self.sigma = self.cp.sigma
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.kappa == 0 or not np.isfinite(self.kappa):
            raise ValueError("kappa must be finite and nonzero (non-generic break-up)")
        if self.n > 1 and self.cp.u_c == 0:
            raise ValueError("u_c = 0 makes the prefactor 6/(n u_c^(n-1)) infinite")
        root7(1.0, self.branch)
        if self.symmetric:
            d = self.cp.derivs
            bad = {k: d[k] for k in _ODD_Y if k in d and abs(d[k]) > self.symmetry_tol}
            if abs(self.cp.beta_bar) > self.symmetry_tol:
                bad["beta_bar"] = self.cp.beta_bar
            if bad:
                raise ValueError(f"bundle is not y-symmetric: {bad}")

    @property
    def kappa(self):
        return self.cp.kappa

    @property
    def x_scale(self):
        """``(kappa eps^6)^(1/7)``."""
        return root7(self.kappa * self.epsilon ** 6, self.branch)

    @property
    def t_scale(self):
        """``(kappa^3 eps^4)^(1/7)``."""
        return root7(self.kappa ** 3 * self.epsilon ** 4, self.branch)

    @property
    def y_scale(self):
        return self.epsilon ** (2.0 / 7.0)

    @property
    def amplitude(self):
        """``6/(n u_c^(n-1)) (eps^2/kappa^2)^(1/7)``."""
        pre = 6.0 / (self.n * self.cp.u_c ** (self.n - 1)) if self.n > 1 else 6.0
        return pre * (self.epsilon ** 2 / self.kappa ** 2) ** (1.0 / 7.0)


def map_to_XT(params, x, y, t):
    """Shifted coordinates ``(X, T, ybar)`` at physical points.

    The full map keeps every term built from the bundle; the symmetric
    mode uses ``X = xbar - u_c^n tbar - t_c G_yy ybar^2 / 2`` and
    ``T = tbar - t_c^2 G_xiyy ybar^2 / 2``.
    """
    cp = params.cp
    d = cp.derivs
    xb = np.asarray(x, dtype=float) - cp.x_c
    yb = np.asarray(y, dtype=float) - cp.y_c
    tb = np.asarray(t, dtype=float) - cp.t_c
    tc = cp.t_c
    if params.symmetric:
        X = xb - cp.u_c ** params.n * tb - 0.5 * tc * d["G_yy"] * yb ** 2
        T = tb - 0.5 * tc ** 2 * d["G_xiyy"] * yb ** 2
        return X, T, yb
    G3 = d["G_xixixi"]
    G2y = d["G_xixiy"]
    X = (xb - tb * (d["G"] + tc * d["G_t"]) - tb * yb * (d["G_y"] + tc * d["G_yt"])
         - tc * (d["G_y"] * yb + 0.5 * d["G_yy"] * yb ** 2 + d["G_yyy"] * yb ** 3 / 6.0)
         - tc * G2y ** 3 / (3.0 * G3 ** 2) * yb ** 3
         + 0.5 * tc * G2y * d["G_xiyy"] / G3 * yb ** 3
         + d["G_xi"] * G2y / G3 * yb * tb)
    T = tb + 0.5 * tc ** 2 * yb ** 2 * (G2y ** 2 / G3 - d["G_xiyy"])
    return X, T, yb


def eval_kp12(params, pi2, x, y, t):
    """The local approximation at physical points (vectorized)."""
    X, T, yb = map_to_XT(params, x, y, t)
    U = eval_U(pi2, X / params.x_scale, T / params.t_scale)
    u = params.cp.u_c + params.amplitude * U
    if not params.symmetric:
        u = u + yb * params.cp.beta_bar
    return u


# -- one-dimensional KdV ------------------------------------------------------

def _derivative(f, x, order, h=1e-2, half_width=5):
    w = central_weights(order, half_width)
    j = np.arange(-half_width, half_width + 1)
    return float(np.dot(w, f(x + j * h))) / h ** order


@dataclass
class KdvAsymptotics:
    beta: float
    rho: float
    b: float
    gamma: float
    t_c: float
    xi_c: float
    x_c: float
    u_c: float
    u0_d3: float
    branch: str = "matched"

    def scales(self, epsilon):
        """``(amplitude, x factor, t factor)`` with ``U(x_factor xbar, t_factor tbar)``."""
        g = abs(self.gamma) if self.branch == "matched" else self.gamma
        amp = (18.0 * epsilon ** 2 * self.b / self.gamma ** 2) ** (1.0 / 7.0)
        sx = 48.0 ** (1.0 / 7.0) / root7(epsilon ** 6 * self.b ** 3 * g, "odd")
        st = self.beta / root7(3 ** 4 * 2 ** 2 * epsilon ** 4 * self.b ** 2 * g ** 3, "odd")
        return amp, sx, st

    def __call__(self, pi2, x, t, epsilon):
        amp, sx, st = self.scales(epsilon)
        tb = np.asarray(t, dtype=float) - self.t_c
        xb = np.asarray(x, dtype=float) - self.x_c - self.beta * self.u_c * tb
        return self.u_c + amp * eval_U(pi2, sx * xb, st * tb)


def hopf_breakup(beta, u0, du0=None, search=(-10.0, 10.0), points=20001):
    """``(t_c, xi_c)`` minimizing ``-1/(beta u0'(xi))`` over ``u0' beta < 0``.

    Dense scan followed by a bounded scalar polish.
    """
    du0 = du0 or (lambda s: np.array([_derivative(u0, v, 1) for v in np.atleast_1d(s)]))
    xs = np.linspace(search[0], search[1], points)
    slope = beta * np.asarray(du0(xs), dtype=float)
    if not np.any(slope < 0):
        raise ValueError("beta u0' is never negative: no break-up")
    i = int(np.argmin(slope))
    dxs = xs[1] - xs[0]
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, points - 1)]
    res = minimize_scalar(lambda s: float(beta * np.asarray(du0(np.array([s])))[0]),
                          bounds=(lo - dxs, hi + dxs), method="bounded",
                          options={"xatol": 1e-13})
    xi = float(res.x)
    m = float(beta * np.asarray(du0(np.array([xi])))[0])
    return -1.0 / m, xi


def kdv_asymptotic_params(beta, rho, u0_profile, xi_c=None, t_c=None, search=(-10.0, 10.0),
                          derivatives=None, branch="matched"):
    """Constants of the PI2 approximation for ``u_t + beta u u_x + eps^2 rho u_xxx = 0``.

    ``b = 12 rho / beta`` and ``gamma = -t_c^4 beta^3 u0'''(xi_c)``.  The
    break-up point follows the Hopf solution ``x = beta u0(xi) t + xi``.
    ``derivatives`` may supply exact ``(u0', u0''')``; otherwise tenth-order
    central differences are used.
    """
    if beta == 0:
        raise ValueError("beta must be nonzero")
    d1, d3 = derivatives if derivatives else (None, None)
    if t_c is None or xi_c is None:
        t_c, xi_c = hopf_breakup(beta, u0_profile, d1, search)
    u3 = float(np.asarray(d3(np.array([xi_c])))[0]) if d3 else _derivative(u0_profile, xi_c, 3)
    if abs(u3) < 1e-12:
        raise ValueError("u0''' vanishes at the break-up point (non-generic)")
    u_c = float(np.asarray(u0_profile(np.array([xi_c])))[0])
    gamma = -t_c ** 4 * beta ** 3 * u3
    return KdvAsymptotics(beta=beta, rho=rho, b=12.0 * rho / beta, gamma=gamma, t_c=t_c, xi_c=xi_c,
                          x_c=beta * t_c * u_c + xi_c, u_c=u_c, u0_d3=u3, branch=branch)


# -- comparison harness -----------------------------------------------------

@dataclass
class Window:
    half_x: float
    half_y: float
    x_c: float
    y_c: float


def default_window(params, wx=10.0, wy=2.0):
    """``|x - x_c| <= wx (|kappa| eps^6)^(1/7)``, ``|y - y_c| <= wy eps^(2/7)``."""
    s = abs(params.kappa * params.epsilon ** 6) ** (1.0 / 7.0)
    return Window(half_x=wx * s, half_y=wy * params.y_scale, x_c=params.cp.x_c, y_c=params.cp.y_c)


@dataclass
class ComparisonReport:
    window: Window
    t: float
    linf_error: float
    l2_error: float
    amplitude: float  # max |u_num - u_c| over the window
    points: int
    x_slice: np.ndarray  # columns x, u_num, u_asym
    y_slice: np.ndarray  # columns y, u_num, u_asym
    branch: str = "matched"
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {"t": self.t, "linf_error": self.linf_error, "l2_error": self.l2_error,
                "amplitude": self.amplitude, "points": self.points,
                "window_half_x": self.window.half_x, "window_half_y": self.window.half_y,
                "window_x_c": self.window.x_c, "window_y_c": self.window.y_c,
                "branch": self.branch, **self.extra}


def compare(u_numeric, params, pi2, window=None, t=None, reference=None):
    """Window errors between a snapshot and the local approximation.

    The comparison uses the snapshot's grid nodes inside the window.  With
    ``reference`` (another field on the same grid) the approximation is
    replaced by that field.
    """
    if not isinstance(u_numeric, SpectralField):
        raise TypeError("u_numeric must be a SpectralField")
    window = window or default_window(params)
    t = params.cp.t_c if t is None else float(t)
    g = u_numeric.grid
    ix = np.nonzero(np.abs(g.x - window.x_c) <= window.half_x)[0]
    iy = np.nonzero(np.abs(g.y - window.y_c) <= window.half_y)[0]
    if ix.size == 0 or iy.size == 0:
        raise ValueError("comparison window contains no grid points")
    Xg, Yg = np.meshgrid(g.x[ix], g.y[iy])
    un = u_numeric.values[np.ix_(iy, ix)]
    if reference is not None:
        if reference.grid != g:
            raise ValueError("reference field lives on a different grid")
        ua = reference.values[np.ix_(iy, ix)]
    else:
        ua = eval_kp12(params, pi2, Xg, Yg, t)
    err = np.abs(un - ua)
    jy = int(np.argmin(np.abs(g.y[iy] - window.y_c)))
    jx = int(np.argmin(np.abs(g.x[ix] - window.x_c)))
    return ComparisonReport(
        window=window, t=t,
        linf_error=float(err.max()),
        l2_error=float(np.sqrt(np.sum(err ** 2) * g.dx * g.dy)),
        amplitude=float(np.abs(un - params.cp.u_c).max()),
        points=int(err.size),
        x_slice=np.column_stack([g.x[ix], un[jy], ua[jy]]),
        y_slice=np.column_stack([g.y[iy], un[:, jx], ua[:, jx]]),
        branch=params.branch,
    )
