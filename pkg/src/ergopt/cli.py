"""Command line interface.

Exit codes: 0 on success, 2 on a certified negative outcome (refusal, failed
certificate), 1 on a computational or input error.  Outputs go to ``--out``;
diagnostics go to standard error and are mirrored in ``diagnostics.json``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .config import ConfigError, ProblemConfig, load_config
from .kernel import (
    H_beta,
    H_infinity,
    KernelContext,
    dual_periodic_maximum,
    h_limit,
    involution_residual,
    series_dual,
)
from .optimize import (
    I_star,
    NotUniquelyMaximizing,
    R_star,
    aubry_test,
    calibrated_subaction,
    deviation_I,
    dual_calibrated_subaction,
    error_R,
    mane_potential,
    max_ergodic_average,
    peierls_barrier,
    r_star_good,
)
from .piecewise import OrientationRefused, V_dual, HInfinityKernel, optimal_selection, run_piecewise
from .symbolic import parse_point
from .transfer import TransferOperator, log_eigenfunction_scaled

EXIT_OK, EXIT_ERROR, EXIT_CERTIFIED_FAIL = 0, 1, 2


class _Run:
    """Output sink for one invocation: single writer, shortest round-trip floats."""

    def __init__(self, out: Path, cfg: ProblemConfig):
        self.out = out
        self.cfg = cfg
        self.diagnostics: list[dict] = []
        out.mkdir(parents=True, exist_ok=True)

    def diag(self, level: str, message: str, **data) -> None:
        rec = {"level": level, "message": message, **_jsonable(data)}
        self.diagnostics.append(rec)
        print(f"[{level}] {message}", file=sys.stderr)
        print(json.dumps(rec, sort_keys=True), file=sys.stderr)

    def write_json(self, name: str, payload: dict) -> None:
        path = self.out / name
        path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")

    def write_csv(self, name: str, header: list[str], rows, meta: dict) -> None:
        keys = sorted(meta)
        with open(self.out / name, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header + keys)
            for row in rows:
                w.writerow([_cell(v) for v in row] + [_cell(meta[k]) for k in keys])

    def close(self) -> None:
        self.write_json("diagnostics.json", {"diagnostics": self.diagnostics})


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    return str(obj)


def _context(cfg: ProblemConfig) -> KernelContext:
    fmap = cfg.fmap()
    n = cfg.numerics
    return KernelContext(fmap, cfg.potential(), n.grid_n, cfg.x_bar, cfg.omega_point(fmap.d),
                         n.depth_cap)


def _meta(cfg: ProblemConfig, **extra) -> dict:
    n = cfg.numerics
    return {"grid_n": n.grid_n, **extra}


# ---------------------------------------------------------------- commands

def cmd_eigen(run: _Run, args) -> int:
    cfg = run.cfg
    op = TransferOperator(cfg.fmap(), cfg.potential(), cfg.numerics.grid_n)
    eig = op.leading_eigen(args.beta, cfg.numerics.eigen_tol, cfg.numerics.max_iter)
    run.write_json("eigen.json", {
        "beta": eig.beta, "alpha": eig.alpha, "log_alpha": eig.log_alpha,
        "residual": eig.residual, "iterations": eig.iterations,
        "mu_residual": eig.mu_residual, "mu_v_defect": eig.mu_v_defect,
        "grid_n": cfg.numerics.grid_n, "tol": cfg.numerics.eigen_tol})
    rows = zip(op.nodes, eig.v.values, eig.mu_weights)
    run.write_csv("eigen.csv", ["node", "v", "mu_weight"], rows,
                  _meta(cfg, beta=eig.beta, tol=cfg.numerics.eigen_tol))
    return EXIT_OK


def _lax(cfg: ProblemConfig, op=None):
    fmap, pot = cfg.fmap(), cfg.potential()
    best = max_ergodic_average(fmap, pot, cfg.numerics.max_period)
    sub = calibrated_subaction(fmap, pot, best.m, cfg.numerics.grid_n, cfg.x_bar,
                               cfg.numerics.subaction_tol, operator=op)
    return best, sub


def cmd_anneal(run: _Run, args) -> int:
    cfg = run.cfg
    schedule = ([float(b) for b in args.schedule.split(",")] if args.schedule
                else list(cfg.numerics.beta_schedule))
    op = TransferOperator(cfg.fmap(), cfg.potential(), cfg.numerics.grid_n)
    best, sub = _lax(cfg, op)
    cols, summary = [], []
    lax = sub.V.values
    for b in schedule:
        vb = log_eigenfunction_scaled(op, b).values
        eig = op.leading_eigen(b)
        cols.append(vb)
        summary.append({"beta": b, "pressure_over_beta": eig.log_alpha / b,
                        "sup_distance": float(np.max(np.abs(vb - lax)))})
    dist = [s["sup_distance"] for s in summary]
    trend = all(b < a for a, b in zip(dist, dist[1:]))
    run.write_json("anneal.json", {"m": best.m, "schedule": schedule, "betas": summary,
                                   "strictly_decreasing": trend, "grid_n": cfg.numerics.grid_n})
    rows = zip(op.nodes, lax, *cols)
    run.write_csv("anneal.csv", ["x", "V_lax"] + [f"V_beta_{b!r}" for b in schedule], rows,
                  _meta(cfg, tol=cfg.numerics.eigen_tol))
    if not trend:
        run.diag("warning", "zero-temperature distances do not decrease strictly", distances=dist)
    return EXIT_OK


def cmd_subaction(run: _Run, args) -> int:
    cfg = run.cfg
    best, sub = _lax(cfg)
    xs = sub.V.nodes
    R = error_R(sub, xs)
    I = [deviation_I(sub, float(x), args.depth).value for x in xs]
    run.write_json("subaction.json", {
        "m": best.m, "orbit": str(best.orbit.itinerary), "orbit_points": best.orbit.points,
        "caveat": best.caveat, "residual": sub.residual, "iterations": sub.iterations,
        "drift": sub.drift, "calibration_defect": sub.calibration_defect(),
        "anchor_x": sub.anchor_x, "min_R": float(np.min(R))})
    run.write_csv("subaction.csv", ["x", "V", "R", "I_partial"], zip(xs, sub.V.values, R, I),
                  _meta(cfg, tol=cfg.numerics.subaction_tol, depth=args.depth))
    return EXIT_OK


def cmd_dual(run: _Run, args) -> int:
    cfg, n = run.cfg, run.cfg.numerics
    ctx = _context(cfg)
    A_star = _cached_dual(ctx, n.series_depth)
    m_star, cycle = dual_periodic_maximum(ctx, n.max_period, n.series_depth)
    table = dual_calibrated_subaction(A_star, m_star, n.table_depth, ctx.map.d, cycle,
                                      holder=ctx.potential.lipschitz() * ctx.lam / (1 - ctx.lam),
                                      lam=ctx.lam)
    report = {"m_star": m_star, "cycle": "".join(map(str, cycle)), "residual": table.residual,
              "error_bound": table.error_bound, "iterations": table.iterations,
              "table_depth": n.table_depth, "series_depth": n.series_depth}
    code = EXIT_OK
    try:
        rep = r_star_good(cycle, table, A_star, m_star, 0.0, n.max_period)
        report.update(r_star_good=rep.ok, min_R_star=rep.min_R,
                      witnesses=[str(w) for w, _ in rep.witnesses])
        if not rep.ok:
            code = EXIT_CERTIFIED_FAIL
    except NotUniquelyMaximizing as exc:
        report.update(r_star_good=None, refusal=str(exc))
        run.diag("warning", str(exc))
    run.write_json("dual.json", report)
    rows = []
    for i in range(len(table.values)):
        w = table.representative(i)
        rows.append((str(w), table.values[i], R_star(w, table, A_star, m_star),
                     I_star(w, table, A_star, m_star, cycle).value))
    run.write_csv("dual.csv", ["word", "V_star", "R_star", "I_star"], rows,
                  {"table_depth": n.table_depth, "series_depth": n.series_depth})
    return code


def _cached_dual(ctx: KernelContext, depth: int):
    """Series dual evaluator that batches the points it has not seen yet."""
    cache: dict = {}

    def A_star(pts):
        todo = list(dict.fromkeys(p for p in pts if p not in cache))
        if todo:
            cache.update(zip(todo, series_dual(ctx, todo, depth)))
        return np.array([cache[p] for p in pts])

    return A_star


def cmd_kernel(run: _Run, args) -> int:
    cfg, n = run.cfg, run.cfg.numerics
    ctx = _context(cfg)
    omega = parse_point(args.omega, ctx.map.d)
    xs = [float(v) for v in args.x.split(",")]
    rows, report = [], []
    for x in xs:
        w1 = h_limit(ctx, omega, x, 1.0, n.kernel_tol)
        hb = [H_beta(ctx, omega, x, b, n.kernel_tol).value for b in n.beta_schedule]
        hinf = H_infinity(ctx, omega, x, n.beta_schedule, n.kernel_tol)
        res = involution_residual(ctx, omega, x, 1.0, n.series_depth)
        rows.append((str(omega), x, w1.value, *hb, hinf.value, hinf.tail_bound))
        report.append({"x": x, "W1": w1.value, "W1_depth": w1.depth_used,
                       "W1_tail_bound": w1.tail_bound, "H_infinity": hinf.value,
                       "H_infinity_defect": hinf.tail_bound, "converged": hinf.converged,
                       "involution_residual": res})
        if not hinf.converged:
            run.diag("warning", "beta schedule defects do not decrease", x=x)
    run.write_json("kernel.json", {"omega": str(omega), "points": report,
                                   "schedule": list(n.beta_schedule), "tol": n.kernel_tol})
    header = ["omega", "x", "W1"] + [f"H_beta_{b!r}" for b in n.beta_schedule] + [
        "H_infinity", "tail_bound"]
    run.write_csv("kernel.csv", header, rows, _meta(cfg, tol=n.kernel_tol))
    return EXIT_OK


def cmd_piecewise(run: _Run, args) -> int:
    cfg, n = run.cfg, run.cfg.numerics
    ctx = _context(cfg)
    try:
        rep = run_piecewise(ctx, n.N_bar, n.max_period, n.table_depth, n.series_depth,
                            n.beta_schedule, n.scan_points, n.refine_tol, n.tie_tol)
    except OrientationRefused as exc:
        run.diag("refusal", str(exc))
        run.write_json("piecewise.json", {"refused": True, "reason": str(exc)})
        return EXIT_CERTIFIED_FAIL
    bp = rep.breakpoints
    run.write_json("piecewise.json", {
        "refused": False, "m_star": rep.m_star, "cycle": "".join(map(str, rep.cycle)),
        "breakpoints": bp.breakpoints, "segment_words": [str(w) for w in bp.segment_words],
        "certified": bp.certified, "consistent": bp.consistent,
        "tie_tol": bp.tie_tol, "refine_tol": bp.refine_tol,
        "candidates": [{"word": str(w), "I_star": i}
                       for w, i in zip(rep.candidates.words, rep.candidates.istar)],
        "N_bar": rep.candidates.N_bar, "closure_slack": rep.closure_slack,
        "r_star_good": rep.r_star_ok, "min_R_star": rep.r_star_min,
        "twist": rep.twist.status, "twist_min_margin": rep.twist.min_margin,
        "monotone": rep.monotone, "table_residual": rep.table_residual,
        "warnings": rep.warnings})
    for w in rep.warnings:
        run.diag("warning", w)
    best, sub = _lax(cfg, ctx.op)
    kernel = HInfinityKernel(ctx, n.beta_schedule)
    xs = np.linspace(0.0, 1.0, n.scan_points)
    dv = V_dual(xs, rep.candidates, kernel, n.tie_tol)
    sel = optimal_selection(xs, rep.candidates, kernel, n.tie_tol)
    rows = zip(xs, dv.values, sub(xs), (str(u) for u in sel.u_plus))
    run.write_csv("piecewise.csv", ["x", "V_dual", "V_lax", "selected_word"], rows,
                  _meta(cfg, tie_tol=n.tie_tol, N_bar=n.N_bar))
    ok = rep.r_star_ok and bp.consistent and all(bp.certified)
    return EXIT_OK if ok else EXIT_CERTIFIED_FAIL


def cmd_orbits(run: _Run, args) -> int:
    cfg = run.cfg
    pot = cfg.potential()
    orbits = cfg.fmap().enumerate_periodic_orbits(args.max_period, pot.A)
    rows = [(str(o.itinerary), o.period, o.average, " ".join(repr(p) for p in o.points))
            for o in orbits]
    run.write_csv("orbits.csv", ["word", "period", "average", "points"], rows,
                  {"max_period": args.max_period})
    return EXIT_OK


def cmd_mane(run: _Run, args) -> int:
    cfg, n = run.cfg, run.cfg.numerics
    fmap, pot = cfg.fmap(), cfg.potential()
    m = max_ergodic_average(fmap, pot, n.max_period).m
    eps = args.eps or n.mane_eps
    max_n = args.max_n or n.mane_max_n
    S = mane_potential(fmap, pot, m, args.x, args.y, eps, max_n)
    h = peierls_barrier(fmap, pot, m, args.x, args.y, eps, args.k_min, max_n)
    aub = aubry_test(fmap, pot, m, args.x, 10 * eps, eps, max_n)
    if S.truncated or h.truncated:
        run.diag("warning", "search budget exhausted; values are lower bounds")
    run.write_json("mane.json", {"x": args.x, "y": args.y, "m": m, "eps": eps, "max_n": max_n,
                                 "S": S.value, "S_length": S.length, "h": h.value,
                                 "k_min": args.k_min, "truncated": S.truncated or h.truncated,
                                 "aubry_x": aub})
    return EXIT_OK


def cmd_validate(run: _Run, args) -> int:
    cfg, n = run.cfg, run.cfg.numerics
    ctx = _context(cfg)
    lam_emp, ok = ctx.map.contraction_audit()
    gmin = ctx.potential.validate(1024)
    omega = parse_point("|01", ctx.map.d)
    res = max(involution_residual(ctx, omega, x, 1.0, n.series_depth) for x in (0.1, 0.5, 0.9))
    passed = ok and gmin > 0 and res <= 1e-8
    run.write_json("validate.json", {"lambda_empirical": lam_emp, "contraction_ok": ok,
                                     "g_min": gmin, "involution_residual": res,
                                     "series_depth": n.series_depth, "passed": passed})
    if not ok:
        run.diag("error", "declared contraction bound is violated", lambda_empirical=lam_emp)
    return EXIT_OK if passed else EXIT_CERTIFIED_FAIL


COMMANDS = {
    "eigen": cmd_eigen, "anneal": cmd_anneal, "subaction": cmd_subaction, "dual": cmd_dual,
    "kernel": cmd_kernel, "piecewise": cmd_piecewise, "orbits": cmd_orbits, "mane": cmd_mane,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ergopt", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="problem configuration (JSON)")
    common.add_argument("--out", default="ergopt_out", help="output directory")
    common.add_argument("--threads", type=int, default=None,
                        help="worker thread cap (default: $ERGOPT_THREADS)")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("eigen", parents=[common], help="leading eigendata at one beta")
    s.add_argument("--beta", type=float, default=1.0)
    s = sub.add_parser("anneal", parents=[common], help="(1/beta) log v_beta along a schedule")
    s.add_argument("--schedule", default=None, help="comma separated betas")
    s = sub.add_parser("subaction", parents=[common], help="Lax-Oleinik calibrated subaction")
    s.add_argument("--depth", type=int, default=20, help="deviation partial-sum depth")
    sub.add_parser("dual", parents=[common], help="dual potential, V* table and R* test")
    s = sub.add_parser("kernel", parents=[common], help="involution kernel at (omega, x)")
    s.add_argument("--omega", required=True, help="point as head|cycle")
    s.add_argument("--x", required=True, help="comma separated x values")
    sub.add_parser("piecewise", parents=[common], help="candidate duality and breakpoints")
    s = sub.add_parser("orbits", parents=[common], help="periodic orbits by average")
    s.add_argument("--max-period", type=int, default=8)
    s = sub.add_parser("mane", parents=[common], help="Mane potential and Peierls barrier")
    s.add_argument("--x", type=float, required=True)
    s.add_argument("--y", type=float, required=True)
    s.add_argument("--eps", type=float, default=None)
    s.add_argument("--max-n", type=int, default=None)
    s.add_argument("--k-min", type=int, default=10)
    sub.add_parser("validate", parents=[common], help="input audits and a residual smoke test")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = args.threads or os.environ.get("ERGOPT_THREADS")
    if threads:
        _kernels.set_threads(int(threads))
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"[error] {exc}", file=sys.stderr)
        print(json.dumps({"level": "error", "message": str(exc)}), file=sys.stderr)
        return EXIT_ERROR
    run = _Run(Path(args.out), cfg)
    try:
        code = COMMANDS[args.command](run, args)
    except Exception as exc:  # report every computational failure uniformly
        run.diag("error", f"{type(exc).__name__}: {exc}")
        code = EXIT_ERROR
    run.close()
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
