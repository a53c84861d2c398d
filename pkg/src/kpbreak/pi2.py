"""The smooth real solution of the PI2 equation

    X = 6 T U - (U^3 + U_X^2 / 2 + U U_XX + U_XXXX / 10)

with ``U -> -sign(X) |X|^(1/3)`` as ``|X| -> inf``.

Each T slice is a finite-difference boundary value problem on ``[-L, L]``
solved by Newton's method with a banded Jacobian.  Central stencils of
half-width ``p`` are used for every derivative, and ``p`` ghost points per
side carry the outer real root of the cubic ``U^3 - 6 T U + X = 0`` (its
error is O(X^-2), far below the two-term expansion's O(T^3 X^-5/3)).
Slices come from continuation upward from a very negative T, where the
cubic root is already an excellent guess.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from math import comb, factorial
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConvergenceError

log = logging.getLogger(__name__)


@lru_cache(maxsize=None)
def central_weights(derivative, half_width):
    """Central finite-difference weights on offsets ``-p..p``.

    Solves the moment conditions ``sum_j w_j j^k = k! [k == derivative]`` in
    rational arithmetic, so the returned floats are correctly rounded.
    """
    p = half_width
    m = 2 * p + 1
    if derivative >= m:
        raise ValueError("stencil too short for this derivative")
    A = [[Fraction(j) ** k for j in range(-p, p + 1)] for k in range(m)]
    b = [Fraction(factorial(derivative)) if k == derivative else Fraction(0) for k in range(m)]
    for c in range(m):
        piv = next(r for r in range(c, m) if A[r][c] != 0)
        A[c], A[piv] = A[piv], A[c]
        b[c], b[piv] = b[piv], b[c]
        inv = 1 / A[c][c]
        A[c] = [v * inv for v in A[c]]
        b[c] *= inv
        for r in range(m):
            if r != c and A[r][c] != 0:
                f = A[r][c]
                A[r] = [vr - f * vc for vr, vc in zip(A[r], A[c])]
                b[r] -= f * b[c]
    return np.array([float(v) for v in b])


def half_width_for(order):
    """Stencil half-width giving ``order``-accurate fourth derivatives."""
    if order < 2 or order % 2:
        raise ValueError("order must be an even integer >= 2")
    return order // 2 + 1


def cubic_branch(X, T):
    """Real root of ``U^3 - 6 T U + X = 0`` on the branch ``U ~ -X^(1/3)``.

    For ``T <= 0`` the root is unique.  For ``T > 0`` and ``|X|`` inside the
    cusp there are three; the outer one with the sign of ``-X`` is returned,
    and ``0`` at ``X = 0``.
    """
    X = np.asarray(X, dtype=float)
    T = float(T)
    # Newton from above the outer root descends monotonically (convex there)
    U = -np.sign(X) * (np.cbrt(np.abs(X)) + np.sqrt(max(6.0 * T, 0.0)) + 1.0)
    for _ in range(200):
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(X == 0.0, 0.0, (U ** 3 - 6 * T * U + X) / (3 * U * U - 6 * T))
        U = U - step
        if np.all(np.abs(step) <= 1e-15 * (1 + np.abs(U))):
            break
    return np.where(X == 0.0, 0.0, U)


def asymptotic_value(X, T):
    """Two-term large-``|X|`` expansion ``-sign(X) (|X|^(1/3) + 2 T |X|^(-1/3))``."""
    X = np.asarray(X, dtype=float)
    a = np.abs(X)
    return -np.sign(X) * (np.cbrt(a) + 2.0 * T / np.cbrt(a))


def default_half_width(T_min, T_max):
    """``max(60, 8 T^(3/2) + 60, 40 T + 40)`` at ``T = max(T_max, 0)``.

    The last term keeps the whole oscillation zone, whose trailing edge sits
    near ``X = -40 T``, clear of the truncation boundary.
    """
    T = max(T_max, 0.0)
    return max(60.0, 8.0 * T ** 1.5 + 60.0, 40.0 * T + 40.0)


@dataclass
class Pi2Config:
    L: Optional[float] = None
    N: int = 8192
    T_min: float = -10.0
    T_max: float = 2.0
    T_step: float = 0.01
    newton_tol: float = 1e-12
    max_newton_iters: int = 50
    order: int = 12
    floor_tol: float = 1e-8  # accepted when Newton stagnates at the roundoff floor

    def __post_init__(self):
        if self.N < 64:
            raise ValueError("N must be at least 64")
        if not self.T_max > self.T_min:
            raise ValueError("need T_max > T_min")
        if not self.T_step > 0:
            raise ValueError("T_step must be positive")
        half_width_for(self.order)
        if self.L is None:
            self.L = default_half_width(self.T_min, self.T_max)
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def X(self):
        return np.linspace(-self.L, self.L, self.N)

    @property
    def h(self):
        return 2 * self.L / (self.N - 1)

    @property
    def ghost(self):
        return half_width_for(self.order)


class Stencils:
    """Central derivative stencils of one half-width on a uniform grid."""

    def __init__(self, h, order=12):
        self.p = half_width_for(order)
        self.h = h
        self.w = {d: central_weights(d, self.p) / h ** d for d in (1, 2, 3, 4)}

    def apply(self, U, d):
        """``d``-th derivative at the interior nodes ``p .. N-1-p``."""
        n = U.shape[-1] - 2 * self.p
        out = np.zeros(U.shape[:-1] + (n,))
        for j, c in enumerate(self.w[d]):
            if c:
                out += c * U[..., j:j + n]
        return out


def derivatives(U, h, order=12):
    """``(U_X, U_XX, U_XXX, U_XXXX)`` at interior nodes."""
    s = Stencils(h, order)
    U = np.asarray(U, dtype=float)
    return tuple(s.apply(U, d) for d in (1, 2, 3, 4))


def _residual(U, X, T, s):
    p = s.p
    Ui = U[p:-p]
    Ux = s.apply(U, 1)
    Uxx = s.apply(U, 2)
    Uxxxx = s.apply(U, 4)
    return 6 * T * Ui - Ui ** 3 - 0.5 * Ux ** 2 - Ui * Uxx - 0.1 * Uxxxx - X[p:-p]


def pi2_residual(U, X, T, order=12):
    """Residual of the discretized equation at interior nodes.

    ``6 T U - U^3 - U_X^2/2 - U U_XX - U_XXXX/10 - X`` with central
    differences of the given order.  ``X`` must be uniform; the first and
    last ``order/2 + 1`` entries of ``U`` act as boundary values.
    """
    U = np.asarray(U, dtype=float)
    X = np.asarray(X, dtype=float)
    return _residual(U, X, float(T), Stencils(X[1] - X[0], order))


def _bands(U, T, s):
    """Jacobian entries ``dR_i/dU_{i+off}``, one array per ``off = -p..p``."""
    p = s.p
    Ui = U[p:-p]
    Ux = s.apply(U, 1)
    Uxx = s.apply(U, 2)
    out = []
    for j in range(2 * p + 1):
        c = -Ux * s.w[1][j] - Ui * s.w[2][j] - 0.1 * s.w[4][j]
        if j == p:
            c = c + 6 * T - 3 * Ui ** 2 - Uxx
        out.append(c)
    return out


def _banded(bands, p):
    """LAPACK banded storage of the interior-interior block."""
    n = bands[0].size
    ab = np.zeros((2 * p + 1, n))
    for j, c in enumerate(bands):
        off = j - p
        row = p - off
        if off >= 0:
            ab[row, off:] = c[:n - off]
        else:
            ab[row, :n + off] = c[-off:]
    return ab


@dataclass
class NewtonReport:
    iterations: int
    residual: float
    converged: bool


def solve_at_T(T, guess, config, X=None):
    """Newton solve of one slice; the ghost values come from the cubic branch.

    Converged when the interior residual max-norm drops below
    ``config.newton_tol``, or when it stops decreasing (the roundoff floor of
    the fourth-difference stencil, roughly ``eps |U| / h^4``) while under
    ``config.floor_tol``.
    """
    X = config.X if X is None else X
    s = Stencils(X[1] - X[0], config.order)
    p = s.p
    U = np.array(guess, dtype=float, copy=True)
    Ub = cubic_branch(np.r_[X[:p], X[-p:]], T)
    U[:p] = Ub[:p]
    U[-p:] = Ub[p:]
    R = _residual(U, X, T, s)
    res = prev = float(np.abs(R).max())
    if res < config.newton_tol:
        return U, NewtonReport(0, res, True)
    for it in range(1, config.max_newton_iters + 1):
        dU = solve_banded((p, p), _banded(_bands(U, T, s), p), -R)
        U[p:-p] += dU
        R = _residual(U, X, T, s)
        res = float(np.abs(R).max())
        if not np.isfinite(res):
            break
        if res < config.newton_tol:
            return U, NewtonReport(it, res, True)
        if res < config.floor_tol and res > 0.25 * prev:
            return U, NewtonReport(it, res, True)
        prev = res
    return U, NewtonReport(config.max_newton_iters, res, False)


def _branch_slopes(U, T):
    """``(U_X, U_T)`` along the cubic branch at the given values."""
    d = 3 * U * U - 6 * T
    return -1.0 / d, 6 * U / d


def _solve_with_ghosts(U, T, s, rhs, ghost):
    """Solve ``J V = rhs`` at interior nodes given ``V`` on the ghost nodes."""
    p = s.p
    V = np.empty_like(U)
    V[:p] = ghost[:p]
    V[-p:] = ghost[p:]
    bands = _bands(U, T, s)
    n = U.size - 2 * p
    rhs = rhs.copy()
    for j, c in enumerate(bands):
        off = j - p
        for i in range(p):
            if i + off < 0:
                rhs[i] -= c[i] * V[p + i + off]
            r = n - 1 - i
            if r + off >= n:
                rhs[r] -= c[r] * V[p + r + off]
    V[p:-p] = solve_banded((p, p), _banded(bands, p), rhs)
    return V


def _ghosts(U, p):
    return np.r_[U[:p], U[-p:]]


def slope_T(U, X, T, order=12):
    """``U_T`` of a converged slice from the T-derivative of the discrete equation.

    ``J U_T = -6 U`` at interior nodes, with the ghost values moving along
    the cubic branch.
    """
    s = Stencils(X[1] - X[0], order)
    _, gt = _branch_slopes(_ghosts(U, s.p), T)
    return _solve_with_ghosts(U, T, s, -6 * U[s.p:-s.p], gt)


def curvature_T(U, Ut, X, T, order=12):
    """``U_TT`` from the second T-derivative of the discrete equation.

    ``J U_TT = 6 U V^2 + V_X^2 + 2 V V_XX - 12 V`` with ``V = U_T``.
    """
    s = Stencils(X[1] - X[0], order)
    p = s.p
    V = Ut
    Vi = V[p:-p]
    rhs = 6 * U[p:-p] * Vi ** 2 + s.apply(V, 1) ** 2 + 2 * Vi * s.apply(V, 2) - 12 * Vi
    gu = _ghosts(U, p)
    gv = _ghosts(V, p)
    gtt = (12 * gv - 6 * gu * gv ** 2) / (3 * gu ** 2 - 6 * T)
    return _solve_with_ghosts(U, T, s, rhs, gtt)


def slope_X(U, h, T, order=12):
    """``U_X`` on the full grid: central stencil inside, branch slope on ghosts."""
    s = Stencils(h, order)
    p = s.p
    Ux = np.empty_like(U)
    Ux[p:-p] = s.apply(U, 1)
    Ux[:p], _ = _branch_slopes(U[:p], T)
    Ux[-p:], _ = _branch_slopes(U[-p:], T)
    return Ux


@dataclass
class Pi2Solution:
    """Tabulated ``U(X, T)`` with per-slice ``T`` derivatives.

    ``U_X`` is derived from the stored slices on first access.
    """

    config: Pi2Config
    T: np.ndarray
    X: np.ndarray
    U: np.ndarray  # (len(T), len(X))
    U_T: np.ndarray
    U_TT: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray

    @cached_property
    def U_X(self):
        h = self.X[1] - self.X[0]
        return np.stack([slope_X(u, h, t, self.config.order) for u, t in zip(self.U, self.T)])

    def index(self, T):
        j = int(np.argmin(np.abs(self.T - T)))
        if abs(self.T[j] - T) > 1e-9 * max(1.0, abs(T)):
            raise KeyError(f"no stored slice at T={T}")
        return j

    def slice(self, T):
        return self.U[self.index(T)]

    def __call__(self, X, T):
        return eval_U(self, X, T)


def continue_in_T(config=None, progress=None):
    """Sweep ``T`` from ``T_min`` to ``T_max``, each solve seeded by the last.

    The seed is the previous slice advanced by its ``U_T``.  A failed solve
    halves the continuation step (intermediate slices are not stored); steps
    below ``1e-4`` abort with the last good ``T``.
    """
    config = config or Pi2Config()
    X = config.X
    nT = int(round((config.T_max - config.T_min) / config.T_step)) + 1
    Ts = config.T_min + config.T_step * np.arange(nT)
    table = np.empty((nT, X.size))
    tab_t = np.empty_like(table)
    tab_tt = np.empty_like(table)
    res = np.empty(nT)
    its = np.empty(nT, dtype=int)

    U, rep = solve_at_T(Ts[0], cubic_branch(X, Ts[0]), config, X)
    if not rep.converged:
        raise ConvergenceError(f"PI2 solve failed at T={Ts[0]} (residual {rep.residual:.2e})")
    Ut = slope_T(U, X, Ts[0], config.order)
    t_cur = Ts[0]
    for j, T in enumerate(Ts):
        if j > 0:
            dt = T - t_cur
            iters = 0
            while t_cur < T - 1e-12:
                t_try = min(t_cur + dt, T)
                Unew, r = solve_at_T(t_try, U + (t_try - t_cur) * Ut, config, X)
                if r.converged:
                    U, t_cur = Unew, t_try
                    Ut = slope_T(U, X, t_cur, config.order)
                    iters = max(iters, r.iterations)
                    rep = NewtonReport(iters, r.residual, True)
                else:
                    dt /= 2
                    if dt < 1e-4:
                        raise ConvergenceError(
                            f"PI2 continuation stalled: step below 1e-4 after T={t_cur:.6g}")
                    log.info("halving continuation step to %.3g at T=%.6g", dt, t_cur)
            t_cur = T
        table[j] = U
        tab_t[j] = Ut
        tab_tt[j] = curvature_T(U, Ut, X, T, config.order)
        res[j] = rep.residual
        its[j] = rep.iterations
        if progress:
            progress(j, T, rep)
    return Pi2Solution(config=config, T=Ts, X=X, U=table, U_T=tab_t, U_TT=tab_tt, residuals=res, iterations=its)


_LAG = 8  # points of the X interpolant
_BARY = np.array([(-1) ** k * comb(_LAG - 1, k) for k in range(_LAG)], dtype=float)


def _lagrange_rows(X, x):
    """Node indices and weights of the 8-point Lagrange interpolant at each ``x``."""
    h = X[1] - X[0]
    pos = (x - X[0]) / h
    i0 = np.clip(np.floor(pos).astype(int) - (_LAG // 2 - 1), 0, X.size - _LAG)
    j = np.arange(_LAG)
    diff = (pos - i0)[:, None] - j[None, :]
    exact = np.abs(diff) < 1e-13
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = _BARY[None, :] / diff
    hit = exact.any(axis=1)
    terms[hit] = exact[hit].astype(float)
    return i0[:, None] + j[None, :], terms / terms.sum(axis=1, keepdims=True)


def _hermite5(y0, y1, d0, d1, c0, c1, s, w):
    """Quintic Hermite on ``[0, 1]`` from values, first and second derivatives (step ``w``)."""
    s2 = s * s
    s3 = s2 * s
    s4 = s3 * s
    s5 = s4 * s
    h0 = 1 - 10 * s3 + 15 * s4 - 6 * s5
    h1 = s - 6 * s3 + 8 * s4 - 3 * s5
    h2 = 0.5 * (s2 - 3 * s3 + 3 * s4 - s5)
    k0 = 10 * s3 - 15 * s4 + 6 * s5
    k1 = -4 * s3 + 7 * s4 - 3 * s5
    k2 = 0.5 * (s3 - 2 * s4 + s5)
    return (h0 * y0 + h1 * w * d0 + h2 * w * w * c0
            + k0 * y1 + k1 * w * d1 + k2 * w * w * c1)


def eval_U(sol, X, T):
    """Off-grid value of ``U``.

    Eight-point Lagrange interpolation in ``X`` on the two bracketing slices,
    then quintic Hermite in ``T`` using the stored ``U_T`` and ``U_TT``.  Points with
    ``|X| > L`` use the two-term asymptotic expansion.  ``T`` outside the
    sweep is rejected.
    """
    X = np.asarray(X, dtype=float)
    T = np.broadcast_to(np.asarray(T, dtype=float), X.shape)
    Tg = sol.T
    if np.any(T < Tg[0] - 1e-12) or np.any(T > Tg[-1] + 1e-12):
        raise ValueError(f"T outside the tabulated range [{Tg[0]}, {Tg[-1]}]")
    Xf = X.ravel()
    Tf = T.ravel()
    out = np.empty(Xf.size)
    far = np.abs(Xf) > sol.config.L
    out[far] = asymptotic_value(Xf[far], Tf[far])
    near = ~far
    if np.any(near):
        t = Tf[near]
        dT = Tg[1] - Tg[0]
        j = np.clip(np.floor((t - Tg[0]) / dT).astype(int), 0, Tg.size - 2)
        idx, w = _lagrange_rows(sol.X, Xf[near])
        rows = j[:, None]
        v0 = (sol.U[rows, idx] * w).sum(axis=1)
        v1 = (sol.U[rows + 1, idx] * w).sum(axis=1)
        d0 = (sol.U_T[rows, idx] * w).sum(axis=1)
        d1 = (sol.U_T[rows + 1, idx] * w).sum(axis=1)
        c0 = (sol.U_TT[rows, idx] * w).sum(axis=1)
        c1 = (sol.U_TT[rows + 1, idx] * w).sum(axis=1)
        out[near] = _hermite5(v0, v1, d0, d1, c0, c1, (t - Tg[j]) / dT, dT)
    return out.reshape(X.shape)


def _kdv(U, Ut, s, X, margin):
    p = s.p
    r = Ut[p:-p] + 6 * U[p:-p] * s.apply(U, 1) + s.apply(U, 3)
    inside = np.abs(X[p:-p]) <= X[-1] - margin
    return float(np.abs(r[inside]).max())


def kdv_residual(sol, margin=10.0, stride=1):
    """Max of ``|U_T + 6 U U_X + U_XXX|`` using the stored slopes.

    The ``X`` derivatives use the solver's stencils; a strip of width
    ``margin`` at each end is skipped (ghost-value boundary layer).
    Returns ``(max, per-slice maxima)``.
    """
    s = Stencils(sol.X[1] - sol.X[0], sol.config.order)
    per = np.full(sol.T.size, np.nan)
    for j in range(0, sol.T.size, stride):
        per[j] = _kdv(sol.U[j], sol.U_T[j], s, sol.X, margin)
    return float(np.nanmax(per)), per


def kdv_residual_fd(sol, delta=1e-3, margin=10.0, stride=10):
    """KdV residual with ``U_T`` from neighbouring solves.

    At every ``stride``-th stored slice, four auxiliary slices at
    ``T +- delta, T +- 2 delta`` are solved and ``U_T`` is their
    fourth-order central difference.  The table spacing itself is too
    coarse for this once the solution oscillates in ``T``.
    Returns ``(max, {T: residual})``.
    """
    cfg = sol.config
    s = Stencils(sol.X[1] - sol.X[0], cfg.order)
    out = {}
    for j in range(0, sol.T.size, stride):
        T = sol.T[j]
        nb = {}
        for k in (-2, -1, 1, 2):
            Tk = T + k * delta
            U, rep = solve_at_T(Tk, sol.U[j] + k * delta * sol.U_T[j], cfg, sol.X)
            if not rep.converged:
                raise ConvergenceError(f"auxiliary PI2 solve failed at T={Tk:.6g}")
            nb[k] = U
        Ut = (nb[-2] - 8 * nb[-1] + 8 * nb[1] - nb[2]) / (12 * delta)
        out[float(T)] = _kdv(sol.U[j], Ut, s, sol.X, margin)
    return max(out.values()), out


def count_oscillations(U, X, T=None, threshold=1e-3, window=None):
    """Number of local maxima of ``U``.

    With ``T`` given, only maxima deviating from the cubic branch by more
    than ``threshold`` count, which ignores roundoff ripples.
    """
    U = np.asarray(U)
    X = np.asarray(X)
    inner = (U[1:-1] > U[:-2]) & (U[1:-1] > U[2:])
    if T is not None:
        inner &= np.abs(U[1:-1] - cubic_branch(X[1:-1], T)) > threshold
    if window is not None:
        inner &= np.abs(X[1:-1]) <= window
    return int(inner.sum())
