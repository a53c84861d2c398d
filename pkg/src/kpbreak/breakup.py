"""Locating the first gradient catastrophe of the dispersionless solution.

The pipeline is

    bracket_tc -> refine_tc -> polish_tc -> locate_critical_xy -> extract_bundle

``bracket_tc`` watches the grid minimum of ``Delta = 1 + t G_xi`` during a
coarse run and stops at the first sign change.  ``refine_tc`` restarts from
the last positive state with a much smaller step.  The grid minimum lags the
true (off-grid) minimum by up to half a cell, so ``polish_tc`` finishes with a
secant iteration on the off-grid minimum of Delta, obtained by solving
``G_xixi = G_xiy = 0`` on the truncated Fourier series.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage, optimize

from .dkp import DkpState
from .errors import ConvergenceError, NoBreakupError
from .spectral import SeriesEvaluator, SpectralField

log = logging.getLogger(__name__)

G_ORDERS = [(0, 0), (1, 0), (2, 0), (1, 1), (3, 0), (2, 1), (1, 2), (0, 1), (0, 2), (0, 3)]
F_ORDERS = [(0, 0), (1, 0), (0, 1), (0, 2), (1, 1)]
_NAMES = {(0, 0): "", (1, 0): "_xi", (2, 0): "_xixi", (1, 1): "_xiy", (3, 0): "_xixixi",
          (2, 1): "_xixiy", (1, 2): "_xiyy", (0, 1): "_y", (0, 2): "_yy", (0, 3): "_yyy"}


def g_field(F, n):
    """``G = F^n`` formed pointwise and re-transformed."""
    return F if n == 1 else SpectralField(F.grid, values=F.values ** n)


# ---------------------------------------------------------------------------
# monitoring


@dataclass
class Exclusion:
    """Ignore the connected region ``Delta < level`` around already found points."""

    points: list = field(default_factory=list)  # (xi, y)
    level: float = 0.5

    def mask(self, grid, delta):
        """Boolean mask of grid points that take part in the minimum search."""
        keep = np.ones(delta.shape, dtype=bool)
        if not self.points:
            return keep
        labels, _ = ndimage.label(delta < self.level)
        for xi, y in self.points:
            ix = int(np.argmin(np.abs(grid.x - xi)))
            iy = int(np.argmin(np.abs(grid.y - y)))
            lab = labels[iy, ix]
            if lab:
                keep &= labels != lab
            else:
                # the point sits outside any low region: drop a small disc instead
                X, Y = grid.mesh()
                keep &= (X - xi) ** 2 + (Y - y) ** 2 > (4 * grid.dx) ** 2
        return keep


def grid_minimum(state, exclusion=None):
    """``(min Delta, (iy, ix))`` over the grid, honouring an exclusion."""
    d = state.delta()
    if exclusion is not None and exclusion.points:
        d = np.where(exclusion.mask(state.grid, d), d, np.inf)
    idx = np.unravel_index(int(np.argmin(d)), d.shape)
    return float(d[idx]), idx


@dataclass
class Bracket:
    t_i: float
    t_e: float
    state_i: DkpState
    state_e: DkpState
    min_i: float
    min_e: float
    seed: tuple  # grid index of the minimum at t_e
    exclusion: Exclusion
    anchors: list  # states with t <= t_i, oldest first
    l2_initial: Optional[float] = None
    max_drift: float = 0.0

    def __post_init__(self):
        if not self.t_i < self.t_e:
            raise ValueError("bracket needs t_i < t_e")

    @property
    def width(self):
        return self.t_e - self.t_i


def bracket_tc(problem, state=None, exclusion=None, keep_anchors=40, track_l2=True):
    """Coarse run monitoring min Delta every step until it turns negative.

    Starts from ``state`` when given (used to continue past an earlier
    catastrophe), else from the problem's initial data.  Raises
    ``NoBreakupError`` if ``problem.t_end`` is reached without a sign change.
    """
    exclusion = exclusion or Exclusion()
    st = DkpState.from_problem(problem) if state is None else state.copy()
    n0 = st.l2() if track_l2 else None
    drift = 0.0
    prev = st.copy()
    prev_min, _ = grid_minimum(st, exclusion)
    if prev_min <= 0:
        raise NoBreakupError(f"min Delta already non-positive at t={st.t:.6g}")
    anchors = [prev]
    h = problem.h
    while st.t < problem.t_end - 1e-12 * problem.t_end:
        st.step(min(h, problem.t_end - st.t))
        if track_l2:
            drift = max(drift, abs(st.l2() - n0) / n0)
        m, idx = grid_minimum(st, exclusion)
        if m < 0:
            return Bracket(prev.t, st.t, prev, st, prev_min, m, idx, exclusion,
                           anchors[-keep_anchors:], n0, drift)
        prev, prev_min = st.copy(), m
        anchors.append(prev)
        if len(anchors) > keep_anchors:
            anchors.pop(0)
    raise NoBreakupError(f"no break-up in window: min Delta = {prev_min:.3e} > 0 at t_end={st.t:.6g}")


def _refine_once(b, steps):
    h = b.width / steps
    st = b.state_i.copy()
    prev, prev_min = st.copy(), b.min_i
    # second pass covers the widened interval [t_i, t_e + width]
    for k in range(2 * steps):
        st.step(h)
        m, idx = grid_minimum(st, b.exclusion)
        if m < 0:
            if k >= steps:
                log.info("refinement needed the widened interval (t=%.9g)", st.t)
            anchors = b.anchors + [prev]
            return Bracket(prev.t, st.t, prev, st, prev_min, m, idx, b.exclusion, anchors,
                           b.l2_initial, b.max_drift)
        prev, prev_min = st.copy(), m
    raise ConvergenceError(f"sign change of min Delta lost on refinement of [{b.t_i:.9g}, {b.t_e:.9g}]")


def refine_tc(bracket, levels=2, steps=1000):
    """Re-evolve from ``t_i`` with ``steps`` steps across the bracket, ``levels`` times.

    Each level stops at the first sign change.  If none occurs up to ``t_e``
    the interval is widened once by its own width before giving up.
    """
    if levels < 0:
        raise ValueError("levels must be >= 0")
    b = bracket
    for _ in range(levels):
        b = _refine_once(b, steps)
    return b


# ---------------------------------------------------------------------------
# off-grid critical point


@dataclass
class CriticalLocation:
    xi: float
    y: float
    objective: float
    converged: bool
    G_xi: float
    newton_steps: int = 0


def locate_critical_xy(F, t, n, seed=None, exclusion=None, tol=1e-20, newton_iters=8):
    """Solve ``G_xixi = G_xiy = 0`` off-grid near the minimum of Delta.

    The grid argmin of Delta seeds a Nelder-Mead minimization of
    ``G_xixi^2 + G_xiy^2`` on the exact truncated series; a few Newton steps
    with the analytic Hessian of ``G_xi`` finish the job when the simplex
    stalls above ``tol``.  Stagnation is reported through ``converged``.
    """
    grid = F.grid
    G = g_field(F, n)
    ev = SeriesEvaluator(G)
    if seed is None:
        Gxi = SpectralField(grid, coeffs=G.coeffs * (1j * grid.kx)[None, :]).values
        d = 1.0 + t * Gxi
        if exclusion is not None and exclusion.points:
            d = np.where(exclusion.mask(grid, d), d, np.inf)
        iy, ix = np.unravel_index(int(np.argmin(d)), d.shape)
        seed = (grid.x[ix], grid.y[iy])
    seed = np.array(seed, dtype=float)

    def obj(p):
        r = ev.many(p[0], p[1], [(2, 0), (1, 1)])
        return r[(2, 0)] ** 2 + r[(1, 1)] ** 2

    simplex = np.array([seed, seed + [grid.dx / 2, 0.0], seed + [0.0, grid.dy / 2]])
    res = optimize.minimize(obj, seed, method="Nelder-Mead",
                            options={"initial_simplex": simplex, "xatol": 1e-14, "fatol": 1e-32,
                                     "maxiter": 4000, "maxfev": 8000})
    p = np.array(res.x)
    best = float(res.fun)
    steps = 0
    while best >= tol and steps < newton_iters:
        r = ev.many(p[0], p[1], [(2, 0), (1, 1), (3, 0), (2, 1), (1, 2)])
        J = np.array([[r[(3, 0)], r[(2, 1)]], [r[(2, 1)], r[(1, 2)]]])
        try:
            dp = np.linalg.solve(J, -np.array([r[(2, 0)], r[(1, 1)]]))
        except np.linalg.LinAlgError:
            break
        q = p + dp
        f = obj(q)
        steps += 1
        if not f < best:
            break
        p, best = q, f
    converged = best < tol
    if not converged:
        log.warning("critical point solve stalled at objective %.3e (xi=%.8g, y=%.8g)", best, p[0], p[1])
    return CriticalLocation(xi=float(p[0]), y=float(p[1]), objective=best, converged=converged,
                            G_xi=ev(p[0], p[1], 1, 0), newton_steps=steps)


def continuous_min_delta(state, exclusion=None, seed=None):
    """Off-grid minimum of Delta at the state's time and where it is attained."""
    loc = locate_critical_xy(state.field(), state.t, state.n, seed=seed, exclusion=exclusion)
    return 1.0 + state.t * loc.G_xi, loc


def _state_at(anchors, t, h):
    base = None
    for a in anchors:
        if a.t <= t + 1e-15:
            base = a
    if base is None:
        raise ConvergenceError(f"no stored state before t={t:.9g}; widen the anchor set")
    return base.copy().advance_to(t, h)


@dataclass
class PolishResult:
    t_c: float
    state: DkpState
    location: CriticalLocation
    delta_c: float
    iterations: int


def polish_tc(bracket, h=None, tol=1e-12, max_iter=12):
    """Secant iteration on the off-grid minimum of Delta inside (or just before) the bracket."""
    anchors = sorted(bracket.anchors + [bracket.state_i], key=lambda s: s.t)
    h = h if h is not None else anchors[-1].integrator.config.h

    def f(t):
        st = _state_at(anchors, t, h)
        d, loc = continuous_min_delta(st, bracket.exclusion)
        return d, loc, st

    t0, t1 = bracket.t_i, bracket.t_e
    f0, loc0, st0 = f(t0)
    f1, loc1, st1 = f(t1)
    it = 0
    while it < max_iter:
        it += 1
        if f1 == f0:
            break
        t2 = t1 - f1 * (t1 - t0) / (f1 - f0)
        if t2 < anchors[0].t:
            t2 = anchors[0].t
        t0, f0, loc0, st0 = t1, f1, loc1, st1
        t1 = t2
        f1, loc1, st1 = f(t1)
        if abs(f1) < tol or abs(t1 - t0) < tol * max(1.0, abs(t1)):
            break
    if abs(f1) > 1e-6:
        raise ConvergenceError(f"off-grid Delta did not reach zero (Delta={f1:.3e} at t={t1:.9g})")
    return PolishResult(t_c=t1, state=st1, location=loc1, delta_c=f1, iterations=it)


# ---------------------------------------------------------------------------
# derivative bundle


@dataclass
class CriticalPoint:
    t_c: float
    xi_c: float
    y_c: float
    x_c: float
    u_c: float
    n: int
    sigma: int
    derivs: dict
    k: float
    kappa: float
    beta_bar: float
    residuals: dict
    relative_residuals: dict
    genericity: dict
    generic: bool
    objective: float = 0.0

    def to_dict(self):
        out = {"t_c": self.t_c, "xi_c": self.xi_c, "y_c": self.y_c, "x_c": self.x_c, "u_c": self.u_c,
               "n": self.n, "sigma": self.sigma, "k": self.k, "kappa": self.kappa,
               "beta_bar": self.beta_bar, "objective": self.objective, "generic": int(self.generic)}
        out.update(self.derivs)
        out.update({f"residual_{k}": v for k, v in self.residuals.items()})
        out.update({f"relative_residual_{k}": v for k, v in self.relative_residuals.items()})
        out.update({f"genericity_{k}": v for k, v in self.genericity.items()})
        return out

    @classmethod
    def from_dict(cls, d):
        """Inverse of :meth:`to_dict`; values may be strings."""
        def pick(prefix):
            return {k[len(prefix):]: float(v) for k, v in d.items() if k.startswith(prefix)}

        derivs = {k: float(v) for k, v in d.items() if k in ("G", "F") or k[:2] in ("G_", "F_")}
        return cls(t_c=float(d["t_c"]), xi_c=float(d["xi_c"]), y_c=float(d["y_c"]), x_c=float(d["x_c"]),
                   u_c=float(d["u_c"]), n=int(float(d["n"])), sigma=int(float(d["sigma"])), derivs=derivs,
                   k=float(d["k"]), kappa=float(d["kappa"]), beta_bar=float(d["beta_bar"]),
                   residuals=pick("residual_"), relative_residuals=pick("relative_residual_"),
                   genericity=pick("genericity_"), generic=bool(int(float(d.get("generic", 1)))),
                   objective=float(d.get("objective", 0.0)))

    @property
    def max_constraint_residual(self):
        keys = ("F_t", "F_yt", "F_xit")
        return max(self.relative_residuals[k] for k in keys)


def _ddt(ts, vals, t):
    """Derivative at ``t`` of the quadratic through three samples."""
    (t0, t1, t2), (v0, v1, v2) = ts, vals
    return (v0 * (2 * t - t1 - t2) / ((t0 - t1) * (t0 - t2))
            + v1 * (2 * t - t0 - t2) / ((t1 - t0) * (t1 - t2))
            + v2 * (2 * t - t0 - t1) / ((t2 - t0) * (t2 - t1)))


def extract_bundle(snapshots, xi_c, y_c, t_c, n, sigma):
    """Derivatives of ``G = F^n`` and ``F`` at the critical point plus the constants.

    ``snapshots`` is a sequence of ``(t, F)`` pairs; the three closest to
    ``t_c`` are used for the time derivatives, which come from the quadratic
    interpolant (centred differences when ``t_c`` is the middle time).
    """
    if len(snapshots) < 3:
        raise ValueError("need at least three snapshots around t_c")
    snaps = sorted(snapshots, key=lambda s: abs(s[0] - t_c))[:3]
    snaps.sort(key=lambda s: s[0])
    ts = [s[0] for s in snaps]
    if not ts[0] <= t_c <= ts[-1]:
        raise ValueError("snapshots must span t_c")
    evF = [SeriesEvaluator(s[1]) for s in snaps]
    Gs = [g_field(s[1], n) for s in snaps]
    evG = [SeriesEvaluator(g) for g in Gs]
    mid = int(np.argmin([abs(t - t_c) for t in ts]))

    g = evG[mid].many(xi_c, y_c, G_ORDERS)
    f = evF[mid].many(xi_c, y_c, F_ORDERS)
    d = {f"G{_NAMES[o]}": v for o, v in g.items()}
    d.update({f"F{_NAMES[o]}": v for o, v in f.items()})
    gt = [e.many(xi_c, y_c, [(0, 0), (0, 1), (1, 0)]) for e in evG]
    ft = [e.many(xi_c, y_c, [(0, 0), (0, 1), (1, 0)]) for e in evF]
    for o, name in (((0, 0), "t"), ((0, 1), "yt"), ((1, 0), "xit")):
        d[f"G_{name}"] = _ddt(ts, [v[o] for v in gt], t_c)
        d[f"F_{name}"] = _ddt(ts, [v[o] for v in ft], t_c)

    # grid-wide scales for relative residuals
    def ddt_field(a, b, c):
        return np.abs(_ddt(ts, [a, b, c], t_c)).max()

    vals = [s[1] for s in snaps]
    gx = lambda fl, p, q: SpectralField(fl.grid, coeffs=fl.coeffs * ((1j * fl.grid.kx)[None, :] ** p)
                                        * ((1j * fl.grid.ky)[:, None] ** q)).values
    scale_t = ddt_field(*[v.values for v in vals])
    scale_yt = ddt_field(*[gx(v, 0, 1) for v in vals])
    scale_xit = ddt_field(*[gx(v, 1, 0) for v in vals])
    Gm = Gs[mid]
    scale_xixi = float(np.abs(gx(Gm, 2, 0)).max())
    scale_xiy = float(np.abs(gx(Gm, 1, 1)).max())

    G3, G2y = d["G_xixixi"], d["G_xixiy"]
    res = {
        "F_t": d["F_t"] + sigma * t_c * d["G_y"] * d["F_y"],
        "F_yt": d["F_yt"] + sigma * t_c * (d["G_y"] * d["F_yy"] + d["G_yy"] * d["F_y"]),
        "F_xit": d["F_xit"] + sigma * t_c * (d["G_y"] * d["F_xiy"] + d["G_xiy"] * d["F_y"]),
        "G_xit": d["G_xit"],
        "Delta": 1.0 + t_c * d["G_xi"],
        "G_xixi": d["G_xixi"],
        "G_xiy": d["G_xiy"],
    }
    tiny = np.finfo(float).tiny
    rel = {
        "F_t": abs(res["F_t"]) / max(scale_t, tiny),
        "F_yt": abs(res["F_yt"]) / max(scale_yt, tiny),
        "F_xit": abs(res["F_xit"]) / max(scale_xit, tiny),
        "G_xit": abs(res["G_xit"]) / max(scale_xit * n * max(abs(d["F"]), 1.0) ** (n - 1), tiny),
        "Delta": abs(res["Delta"]),
        "G_xixi": abs(res["G_xixi"]) / max(scale_xixi, tiny),
        "G_xiy": abs(res["G_xiy"]) / max(scale_xiy, tiny),
    }
    for key in ("F_t", "F_yt", "F_xit"):
        if rel[key] > 1e-3:
            log.warning("constraint residual %s = %.2e (relative) suggests an imprecise critical point",
                        key, rel[key])

    gen = {"Delta_xixi": t_c * G3, "Delta_xiy": t_c * G2y, "Delta_yy": t_c * d["G_xiyy"]}
    scale3 = max(abs(v) for v in gen.values())
    generic = G3 > 0 and all(abs(v) > 1e-8 * max(scale3, 1.0) for v in gen.values())
    if not generic:
        log.info("critical point flagged non-generic: %s", gen)
    k = t_c ** 4 * G3
    u_c = d["F"]
    return CriticalPoint(
        t_c=t_c, xi_c=xi_c, y_c=y_c, x_c=t_c * u_c ** n + xi_c, u_c=u_c, n=n, sigma=sigma,
        derivs=d, k=k, kappa=-36.0 * k, beta_bar=d["F_y"] - d["F_xi"] * G2y / G3,
        residuals=res, relative_residuals=rel, genericity=gen, generic=generic)


def bundle_snapshots(state, t_c, dt=None):
    """Unfiltered snapshots at ``t_c - dt, t_c, t_c + dt`` starting from an earlier state."""
    dt = 1e-3 * t_c if dt is None else dt
    st = state.copy()
    st.krasny_threshold = 0.0
    if st.t > t_c - dt:
        raise ValueError("starting state must precede t_c - dt")
    h = st.integrator.config.h
    out = []
    for t in (t_c - dt, t_c, t_c + dt):
        st.advance_to(t, h)
        out.append((st.t, st.field()))
    return out


# ---------------------------------------------------------------------------
# full pipeline


@dataclass
class CriticalSearch:
    point: CriticalPoint
    coarse: Bracket
    refined: Bracket
    polish: PolishResult
    location: CriticalLocation


def find_critical(problem, levels=2, steps=1000, state=None, exclusion=None, dt=None):
    """bracket -> refine -> polish -> locate -> bundle for one catastrophe."""
    coarse = bracket_tc(problem, state=state, exclusion=exclusion)
    log.info("coarse bracket [%.6g, %.6g]", coarse.t_i, coarse.t_e)
    refined = refine_tc(coarse, levels=levels, steps=steps)
    log.info("refined bracket [%.12g, %.12g]", refined.t_i, refined.t_e)
    pol = polish_tc(refined, h=problem.h)
    t_c = pol.t_c
    dt = 1e-3 * t_c if dt is None else dt
    anchors = sorted(refined.anchors + [refined.state_i], key=lambda s: s.t)
    start = [a for a in anchors if a.t <= t_c - dt]
    if not start:
        raise ConvergenceError("no stored state precedes the bundle stencil")
    snaps = bundle_snapshots(start[-1], t_c, dt)
    loc = locate_critical_xy(snaps[1][1], t_c, problem.n, seed=(pol.location.xi, pol.location.y))
    cp = extract_bundle(snaps, loc.xi, loc.y, t_c, problem.n, problem.sigma)
    cp.objective = loc.objective
    return CriticalSearch(point=cp, coarse=coarse, refined=refined, polish=pol, location=loc)


def find_next_critical(problem, previous, levels=2, steps=1000, dt=None):
    """Continue past an earlier catastrophe and locate the next one elsewhere."""
    excl = Exclusion(points=list(previous.coarse.exclusion.points)
                     + [(previous.point.xi_c, previous.point.y_c)])
    return find_critical(problem, levels=levels, steps=steps, state=previous.coarse.state_e,
                         exclusion=excl, dt=dt)
