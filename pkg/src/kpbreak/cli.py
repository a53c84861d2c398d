"""Command line front end.

    kpbreak evolve-gkp    --config run.cfg --output out/
    kpbreak evolve-dkp    --config run.cfg --output out/ [--resume snap.dbl]
    kpbreak find-critical --config run.cfg --output out/ [--levels K]
    kpbreak pi2           --config run.cfg --output out/
    kpbreak compare       --snapshot u.dbl --critical critical.txt --pi2 pi2.npz --output out/
    kpbreak diagnose      --snapshot u.dbl

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import io
from .errors import NumericalError, SnapshotFormatError

log = logging.getLogger("kpbreak")


def _floats(text, n=None):
    vals = [float(v) for v in text.split(",") if v.strip()]
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def load_config(args):
    d = io.read_kv(args.config) if args.config else {}
    for item in args.set or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        d[k.strip()] = v.strip()
    if getattr(args, "snapshots", None):
        d["snapshot_times"] = args.snapshots
    if getattr(args, "levels", None) is not None:
        d["levels"] = str(args.levels)
    if args.output:
        d["output_dir"] = args.output
    return io.RunConfig.from_dict(d)


def _out(cfg, name):
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, name)


def _tag(t):
    return f"{t:.6f}".replace(".", "p")


def run_evolve_gkp(cfg, args):
    from .gkp import GkpProblem, GkpState, evolve_gkp

    prob = GkpProblem(n=cfg.n, sigma=cfg.sigma, epsilon=cfg.epsilon, grid=cfg.grid, u0=cfg.initial(),
                      t_end=cfg.t_end, Nt=cfg.Nt, filter_threshold=cfg.filter_threshold,
                      snapshot_times=cfg.snapshot_times)
    rep = io.PipelineReport("evolve-gkp", cfg.to_dict())
    state = None
    if args.resume:
        snap = io.restore(args.resume, cfg)
        state = GkpState.from_field(prob, snap.field, snap.t)
    run = evolve_gkp(prob, state=state)
    for t, fld in run.snapshots:
        rep.add_artifact(io.checkpoint(_out(cfg, f"u_{_tag(t)}.dbl"), fld, t, cfg, cfg.epsilon, cfg.n, cfg.sigma))
    rep.add_artifact(io.checkpoint(_out(cfg, "u_final.dbl"), run.final, run.t, cfg, cfg.epsilon, cfg.n, cfg.sigma))
    rep.add_artifact(io.write_csv(_out(cfg, "diagnostics.csv"), ["t", "delta2", "linf", "outer_band"],
                                  run.diagnostics.rows()))
    d = run.diagnostics
    rep.diagnostics = {"t_final": run.t, "delta2_max": max(d.delta2), "linf_final": d.linf[-1],
                       "outer_band_final": d.decay[-1].max_modulus_outer_band}
    return rep


def _dkp_problem(cfg):
    from .dkp import DkpProblem

    return DkpProblem(n=cfg.n, sigma=cfg.sigma, grid=cfg.grid, initial=cfg.initial(), t_end=cfg.t_end,
                      Nt=cfg.Nt, krasny_threshold=cfg.filter_threshold, snapshot_times=cfg.snapshot_times,
                      projection=cfg.projection)


def run_evolve_dkp(cfg, args):
    from .dkp import DkpState, evolve_F

    prob = _dkp_problem(cfg)
    state = None
    if args.resume:
        snap = io.restore(args.resume, cfg)
        state = DkpState.from_field(snap.field, cfg.n, cfg.sigma, snap.t, prob.h, cfg.filter_threshold,
                                    cfg.projection)
    run = evolve_F(prob, state=state)
    rep = io.PipelineReport("evolve-dkp", cfg.to_dict())
    for t, fld in run.snapshots:
        rep.add_artifact(io.checkpoint(_out(cfg, f"F_{_tag(t)}.dbl"), fld, t, cfg, 0.0, cfg.n, cfg.sigma))
    rep.add_artifact(io.checkpoint(_out(cfg, "F_final.dbl"), run.final, run.t, cfg, 0.0, cfg.n, cfg.sigma))
    d = run.diagnostics
    rep.add_artifact(io.write_csv(_out(cfg, "diagnostics.csv"), ["t", "delta2", "min_delta", "outer_band"],
                                  zip(d.times, d.delta2, d.min_delta, d.outer_band)))
    rep.diagnostics = {"t_final": run.t, "delta2_max": max(d.delta2), "min_delta_final": d.min_delta[-1]}
    return rep


def run_find_critical(cfg, args):
    from .breakup import find_critical, find_next_critical

    prob = _dkp_problem(cfg)
    res = find_critical(prob, levels=cfg.levels, steps=cfg.refine_steps)
    rep = io.PipelineReport("find-critical", cfg.to_dict())
    rep.critical = res.point.to_dict()
    rep.add_artifact(io.write_kv(_out(cfg, "critical.txt"), res.point.to_dict()))
    found = [res]
    for i in range(cfg.next_critical):
        nxt = find_next_critical(prob, found[-1], levels=cfg.levels, steps=cfg.refine_steps)
        found.append(nxt)
        rep.add_artifact(io.write_kv(_out(cfg, f"critical_{i + 2}.txt"), nxt.point.to_dict()))
        rep.diagnostics.update({f"next_{i + 2}.t_c": nxt.point.t_c, f"next_{i + 2}.x_c": nxt.point.x_c,
                                f"next_{i + 2}.y_c": nxt.point.y_c})
    rep.diagnostics.update({"l2_drift_max": res.coarse.max_drift, "bracket_width": res.refined.width,
                            "max_constraint_residual": res.point.max_constraint_residual})
    return rep


def run_pi2(cfg, args):
    from .pi2 import Pi2Config, continue_in_T, kdv_residual

    pc = Pi2Config(L=cfg.pi2_L or None, N=cfg.pi2_N, T_min=cfg.pi2_T_min, T_max=cfg.pi2_T_max,
                   T_step=cfg.pi2_T_step, order=cfg.pi2_order)
    sol = continue_in_T(pc)
    rep = io.PipelineReport("pi2", cfg.to_dict())
    rep.add_artifact(io.save_pi2(_out(cfg, "pi2.npz"), sol))
    rep.add_artifact(io.export_pi2_csv(_out(cfg, "pi2.csv"), sol, cfg.pi2_export_stride_x,
                                       cfg.pi2_export_stride_t))
    rep.diagnostics = {"L": pc.L, "N": pc.N, "order": pc.order, "max_residual": float(sol.residuals.max()),
                       "max_newton_iterations": int(sol.iterations.max()),
                       "kdv_residual": kdv_residual(sol)[0]}
    return rep


def run_compare(cfg, args):
    from .asymptotics import AsymptoticParams, Window, compare, default_window
    from .breakup import CriticalPoint

    if not (args.snapshot and args.critical):
        raise ValueError("compare needs --snapshot and --critical")
    snap = io.read_snapshot(args.snapshot)
    cp = CriticalPoint.from_dict(io.read_kv(args.critical))
    eps = snap.epsilon if snap.epsilon > 0 else cfg.epsilon
    params = AsymptoticParams(cp=cp, epsilon=eps, n=snap.n, sigma=snap.sigma, symmetric=args.symmetric)
    window = default_window(params)
    if args.window:
        wx, wy = _floats(args.window, 2)
        window = Window(half_x=wx, half_y=wy, x_c=cp.x_c, y_c=cp.y_c)
    reference = io.read_snapshot(args.reference).field if args.reference else None
    pi2 = None
    if reference is None:
        if not args.pi2:
            raise ValueError("compare needs --pi2 (or --reference)")
        pi2 = io.load_pi2(args.pi2)
    r = compare(snap.field, params, pi2, window=window, t=snap.t, reference=reference)
    rep = io.PipelineReport("compare", cfg.to_dict())
    rep.comparison = r.to_dict()
    rep.add_artifact(io.write_csv(_out(cfg, "compare_x.csv"), ["x", "u_num", "u_asym"], r.x_slice))
    rep.add_artifact(io.write_csv(_out(cfg, "compare_y.csv"), ["y", "u_num", "u_asym"], r.y_slice))
    rep.add_artifact(io.write_kv(_out(cfg, "comparison.txt"), r.to_dict()))
    return rep


def run_diagnose(cfg, args):
    from .gkp import check_constraint_zero_mean
    from .spectral import decay_report, l2_norm

    if not args.snapshot:
        raise ValueError("diagnose needs --snapshot")
    snap = io.read_snapshot(args.snapshot)
    dec = decay_report(snap.field)
    rep = io.PipelineReport("diagnose", cfg.to_dict())
    rep.diagnostics = {"t": snap.t, "l2": l2_norm(snap.field), "linf": float(np.abs(snap.field.values).max()),
                       "outer_band": dec.max_modulus_outer_band, "linf_coeff": dec.linf_coeff,
                       "decay_ok": int(dec.max_modulus_outer_band <= 1e-7),
                       "max_row_integral": check_constraint_zero_mean(snap.field)}
    if args.initial:
        init = io.read_snapshot(args.initial)
        from .spectral import relative_l2_drift

        rep.diagnostics["delta2"] = relative_l2_drift(snap.field, init.field)
    return rep


COMMANDS = {
    "evolve-gkp": run_evolve_gkp,
    "evolve-dkp": run_evolve_dkp,
    "find-critical": run_find_critical,
    "pi2": run_pi2,
    "compare": run_compare,
    "diagnose": run_diagnose,
}


def build_parser():
    p = argparse.ArgumentParser(prog="kpbreak", description="Break-up of dispersionless KP solutions "
                                "and their dispersive regularization.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="key=value configuration file")
        s.add_argument("--output", help="output directory")
        s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        if name in ("evolve-gkp", "evolve-dkp"):
            s.add_argument("--snapshots", help="comma-separated snapshot times")
            s.add_argument("--resume", help="restart from this checkpoint")
        if name == "find-critical":
            s.add_argument("--levels", type=int, help="refinement levels")
        if name in ("compare", "diagnose"):
            s.add_argument("--snapshot", help="snapshot file")
        if name == "compare":
            s.add_argument("--critical", help="critical-point report (key=value)")
            s.add_argument("--pi2", help="PI2 table (.npz written by the pi2 command)")
            s.add_argument("--reference", help="compare against this snapshot instead of the approximation")
            s.add_argument("--window", metavar="WX,WY", help="window half-widths in x and y")
            s.add_argument("--symmetric", action="store_true", help="use the y-symmetric reduction")
        if name == "diagnose":
            s.add_argument("--initial", help="initial snapshot for the l2 drift")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        rep = COMMANDS[args.command](cfg, args)
        path = rep.write(_out(cfg, f"report_{args.command}.txt"))
        print(io.dump_kv({k: v for k, v in rep.to_dict().items() if not k.startswith("config.")}), end="")
        print(f"report written to {path}")
        return 0
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError, SnapshotFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
