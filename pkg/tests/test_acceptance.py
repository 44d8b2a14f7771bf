"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is printed at the end."""

import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import kendalltau

from ergopt import ExpandingMapSpec, GridFunction, KernelContext, PotentialSpec, TransferOperator
from ergopt.cli import main
from ergopt.kernel import (
    H_beta,
    dual_periodic_maximum,
    dual_potential,
    dual_roundtrip_residual,
    h_word,
    involution_residual,
    scaling_function,
    series_dual,
)
from ergopt.optimize import (
    I_star,
    calibrated_subaction,
    dual_calibrated_subaction,
    error_R,
    max_ergodic_average,
    r_star_good,
)
from ergopt.piecewise import (
    HInfinityKernel,
    V_dual,
    candidate_words,
    cross_validate,
    monotonicity_check,
    optimal_selection,
    run_piecewise,
    scan_breakpoints,
)
from ergopt.symbolic import EventuallyPeriodicPoint as EPP
from ergopt.symbolic import lyndon_words
from ergopt.transfer import log_eigenfunction_scaled, spectral_projection_rho

from conftest import ACCEPTANCE

ROOT = Path(__file__).resolve().parent.parent
DOUBLING = ExpandingMapSpec(["x/2", "(x+1)/2"], 0.5)
MINUS_DOUBLING = ExpandingMapSpec(["(1-x)/2", "(2-x)/2"], 0.5, "reversing")
ONE = EPP((), (1,))


@pytest.fixture(scope="module", autouse=True)
def compiled_kernels():
    # compile the numba kernels outside the timed sections
    ctx = KernelContext(DOUBLING, PotentialSpec(A="x"), 16)
    involution_residual(ctx, ONE, 0.5, depth=8)
    h_word(ctx, (0, 1), np.linspace(0, 1, 3))
    scaling_function(ctx, EPP((0,), (1,)))
    dual_potential(ctx, ONE, mode="scaling")
    series_dual(ctx, [ONE], 8)
    max_ergodic_average(DOUBLING, ctx.potential, 2)


def record(n, name, checks, detail=""):
    """Store the outcome of criterion ``n``; ``checks`` maps label to bool."""
    failed = [k for k, ok in checks.items() if not ok]
    ok = not failed
    msg = detail if ok else f"failed: {', '.join(failed)}; {detail}"
    ACCEPTANCE[n] = (ok, name, msg)
    assert ok, msg


# ------------------------------------------------------------------ 1

def test_constant_potential_exactness():
    t0 = time.perf_counter()
    c = 3.0
    ctx = KernelContext(DOUBLING, PotentialSpec(g="3"), 32)
    rng = np.random.default_rng(1)
    checks = {}
    for beta in (1.0, 2.0, 4.0):
        eig = ctx.eig(beta)
        checks[f"alpha b={beta:g}"] = abs(eig.alpha - 2 * c**beta) <= 1e-10 * 2 * c**beta
        checks[f"v b={beta:g}"] = np.max(np.abs(eig.v.values - 1.0)) <= 1e-10
    words = [tuple(rng.integers(0, 2, rng.integers(1, 9))) for _ in range(10)]
    xs = np.linspace(0, 1, 5)
    checks["h"] = max(np.max(np.abs(h_word(ctx, w, xs))) for w in words) <= 1e-10
    pts = [EPP((0, 1), (1, 0)), EPP((), (0,)), EPP((1,), (0, 1, 1))]
    checks["s"] = all(abs(scaling_function(ctx, w).value - 0.5) <= 1e-10 for w in pts)
    checks["A*"] = all(abs(dual_potential(ctx, w, mode=m) - np.log(c)) <= 1e-10
                       for w in pts for m in ("scaling", "series"))
    dt = time.perf_counter() - t0
    checks["runtime"] = dt < 1.0
    record(1, "constant potential", checks, f"{dt:.2f} s")


# ------------------------------------------------------------------ 2

def test_doubling_linear_end_to_end():
    t0 = time.perf_counter()
    pot = PotentialSpec(A="x")
    ctx = KernelContext(DOUBLING, pot, 128)
    checks = {}
    res = max_ergodic_average(DOUBLING, pot, 8)
    checks["m"] = abs(res.m - 1.0) <= 1e-12
    checks["orbit"] = res.orbit.period == 1 and abs(res.orbit.points[0] - 1.0) <= 1e-12
    lax = calibrated_subaction(DOUBLING, pot, 1.0, 128, anchor_x=1.0)
    lax_err = float(np.max(np.abs(lax.V.values - (lax.V.nodes - 1.0))))
    checks["V_lax"] = lax_err <= 1e-8
    rng = np.random.default_rng(2)
    pts = [EPP(tuple(rng.integers(0, 2, 3)), tuple(rng.integers(0, 2, rng.integers(1, 4))))
           for _ in range(50)]
    dual_err = float(np.max(np.abs(series_dual(ctx, pts, 40)
                                   - [p.symbol(0) for p in pts])))
    checks["A*"] = dual_err <= 1e-9
    A_star = lambda p: series_dual(ctx, p, 40)  # noqa: E731
    table = dual_calibrated_subaction(A_star, 1.0, 10, 2, (1,))
    checks["V*"] = max(float(np.max(np.abs(table.values))), table.residual) <= 1e-10
    # the depth-40 series carries a truncation of exactly 2^-41 per off-cycle symbol
    trunc = 2.0**-41
    istar = [I_star(EPP((0,) * j, (1,)), table, A_star, 1.0).value for j in range(1, 8)]
    checks["I*"] = all(abs(v - j) <= j * trunc + 1e-15 for j, v in zip(range(1, 8), istar))
    rep = run_piecewise(ctx, N_bar=2, table_depth=10, series_depth=40)
    checks["segments"] = (rep.breakpoints.segment_words == (ONE,)
                          and rep.breakpoints.breakpoints == ())
    xs = np.linspace(0, 1, 33)
    dv = V_dual(xs, rep.candidates, HInfinityKernel(ctx)).values
    v_err = float(np.max(np.abs((dv - dv[-1]) - lax(xs))))
    checks["V_dual"] = v_err <= 1e-4
    dt = time.perf_counter() - t0
    checks["runtime"] = dt < 30.0
    record(2, "doubling, A=x", checks,
           f"V err {lax_err:.1e}, A* err {dual_err:.1e}, "
           f"I* max dev {max(abs(v - j) for j, v in zip(range(1, 8), istar)):.1e}, "
           f"V_dual err {v_err:.1e}, {dt:.1f} s")


# ------------------------------------------------------------------ 3

def test_example_reversing_quadratic():
    t0 = time.perf_counter()
    pot = PotentialSpec(A="-(1-x)^2")
    checks = {}
    res = max_ergodic_average(MINUS_DOUBLING, pot, 8)
    checks["m"] = abs(res.m + 1 / 9) <= 1e-10
    checks["support"] = res.orbit.period == 1 and abs(res.orbit.points[0] - 2 / 3) <= 1e-12
    sub = calibrated_subaction(MINUS_DOUBLING, pot, res.m, 128, anchor_x=1.0)
    x = sub.V.nodes
    quad = -x**2 / 3 + 2 * x / 9
    v_err = float(np.max(np.abs((sub.V.values - sub(1.0)) - (quad - quad[-1]))))
    checks["V"] = v_err <= 1e-6
    r = float(error_R(sub, 1 / 6))
    checks["R(1/6)"] = abs(r - 5 / 9) <= 1e-6
    dt = time.perf_counter() - t0
    checks["runtime"] = dt < 10.0
    record(3, "reversing doubling, quadratic", checks,
           f"V err {v_err:.1e}, R(1/6) = {r:.9f} vs 5/9 (printed 0.665 differs by "
           f"{abs(r - 0.665):.3f}), {dt:.1f} s")


# ------------------------------------------------------------------ 4

def test_spectral_projection_contracts():
    t0 = time.perf_counter()
    eig = TransferOperator(DOUBLING, PotentialSpec(g="exp(x)"), 128).leading_eigen(1.0)
    z = GridFunction.from_function(lambda x: x, 128)
    xs = np.linspace(0, 1, 33)
    target = eig.v(xs) * float(eig.mu_weights @ z.values)
    d10, d12 = (float(np.max(np.abs(spectral_projection_rho(z, k, xs, eig) - target)))
                for k in (10, 12))
    dt = time.perf_counter() - t0
    record(4, "spectral projection", {"ratio": d12 <= 0.6 * d10, "runtime": dt < 20.0},
           f"defect k=10 {d10:.2e}, k=12 {d12:.2e}, ratio {d12 / d10:.3f}, {dt:.1f} s")


# ------------------------------------------------------------------ 5

def test_involution_identity():
    t0 = time.perf_counter()
    ctx = KernelContext(DOUBLING, PotentialSpec(g="exp(x)"), 128)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        w = EPP(tuple(rng.integers(0, 2, rng.integers(0, 5))),
                tuple(rng.integers(0, 2, rng.integers(1, 4))))
        for x in np.linspace(0, 1, 9):
            worst = max(worst, involution_residual(ctx, w, float(x), depth=40))
    dt = time.perf_counter() - t0
    record(5, "involution identity", {"residual": worst <= 1e-8, "runtime": dt < 20.0},
           f"max residual {worst:.1e}, {dt:.1f} s")


# ------------------------------------------------------------------ 6

def test_duality_of_values():
    checks, parts = {}, []
    for src in ("x", "cos(2*pi*x)"):
        ctx = KernelContext(DOUBLING, PotentialSpec(A=src), 128)
        m = max_ergodic_average(DOUBLING, ctx.potential, 8).m
        # dual side from cylinder-mass ratios at depth 12
        m_star = max(np.mean([dual_potential(ctx, r, mode="scaling", depth=12)
                              for r in EPP.periodic(lw).cycle_rotations()])
                     for lw in lyndon_words(2, 8))
        m_series, _ = dual_periodic_maximum(ctx, 8, 40)
        checks[src] = abs(m - m_star) <= 2e-3 and abs(m - m_series) <= 2e-3
        parts.append(f"{src}: |m-m*| {abs(m - m_star):.1e} (series {abs(m - m_series):.1e})")
    record(6, "duality of values", checks, "; ".join(parts))


# ------------------------------------------------------------------ 7

def test_coboundary_round_trip():
    checks, parts = {}, []
    for src in ("x", "cos(2*pi*x)"):
        ctx = KernelContext(DOUBLING, PotentialSpec(A=src), 128)
        r = dual_roundtrip_residual(ctx, 40, 6)
        checks[src] = r <= 1e-5
        parts.append(f"{src}: {r:.1e}")
    record(7, "coboundary round trip", checks, ", ".join(parts))


# ------------------------------------------------------------------ 8

def test_zero_temperature_trend():
    ctx = KernelContext(DOUBLING, PotentialSpec(A="x"), 128)
    lax = calibrated_subaction(DOUBLING, ctx.potential, 1.0, 128, anchor_x=1.0)
    betas = (8.0, 16.0, 32.0, 64.0)
    curves = {b: log_eigenfunction_scaled(ctx.op, b) for b in betas}
    xs = np.linspace(0, 1, 65)
    cv = cross_validate(xs, lax, lax, curves, 1.0, anchor_betas=False)
    errs = [cv.beta_errors[b] for b in betas]
    checks = {"strictly decreasing": all(b < a for a, b in zip(errs, errs[1:])),
              "final": errs[-1] <= np.log(2) / 64 + 5e-3}
    record(8, "zero-temperature trend", checks,
           "sup err " + ", ".join(f"{e:.2e}" for e in errs))


# ------------------------------------------------------------------ 9

def test_uniform_lipschitz_in_beta():
    betas = (1.0, 4.0, 16.0, 64.0)
    words = (ONE, EPP((0, 1), (0,)), EPP((1, 0), (0, 1, 1)), EPP((0,), (0, 1)))
    xs = np.linspace(0, 1, 33)
    checks, parts = {}, []
    for src in ("x", "cos(2*pi*x)"):
        ctx = KernelContext(DOUBLING, PotentialSpec(A=src), 128)
        maxima = []
        for b in betas:
            q = 0.0
            for w in words:
                v = H_beta(ctx, w, xs, b).value
                q = max(q, float(np.max(np.abs(np.diff(v)) / np.diff(xs))))
            maxima.append(q)
        maxima = np.array(maxima)
        # quotients equal to 1e-9 relative count as ties
        ranked = np.round(maxima / maxima.max(), 9)
        tau = 0.0 if np.ptp(ranked) == 0 else float(kendalltau(betas, ranked).statistic)
        bound = ctx.potential.lipschitz() * ctx.lam / (1 - ctx.lam)
        checks[f"{src} tau"] = tau <= 0
        checks[f"{src} bound"] = maxima.max() <= 1.01 * bound
        parts.append(f"{src}: max quotient {maxima.max():.4f} <= {bound:.4f}, tau {tau:+.2f}")
    record(9, "uniform-in-beta regularity", checks, "; ".join(parts))


# ------------------------------------------------------------------ 10

def crossing(w, xs):
    xs = np.atleast_1d(xs)
    return -xs if w == ONE else np.full(xs.shape, -0.5)


def planted_dual(points):
    # 1 on [1]; 1 - 2^-r on [0 1^r 0]
    out = []
    for p in points:
        syms = p.expand(64)
        if syms[0] == 1:
            out.append(1.0)
            continue
        r = next((i for i, s in enumerate(syms[1:]) if s == 0), 63)
        out.append(1.0 - 2.0**-r)
    return np.array(out)


def test_pipeline_guards(tmp_path):
    checks = {}
    code = main(["piecewise", str(ROOT / "configs" / "minus_doubling.json"),
                 "--out", str(tmp_path)])
    refused = json.loads((tmp_path / "piecewise.json").read_text()).get("refused")
    checks["orientation refusal"] = code == 2 and refused is True
    table = dual_calibrated_subaction(planted_dual, 1.0, 8, 2, (1,))
    rep = r_star_good((1,), table, planted_dual, 1.0)
    checks["planted R*"] = (not rep.ok and [w for w, _ in rep.witnesses] == [EPP((0,), (1,))])
    cand = candidate_words((1,), 1).with_istar([0.0, 0.0])
    bp = scan_breakpoints(cand, crossing, refine_tol=1e-4)
    mono, _ = monotonicity_check(optimal_selection(np.linspace(0, 1, 129), cand, crossing))
    checks["planted crossing"] = (len(bp.breakpoints) == 1
                                  and abs(bp.breakpoints[0] - 0.5) <= 1e-4 and mono)
    record(10, "pipeline guards", checks,
           f"exit {code}, witness {[str(w) for w, _ in rep.witnesses]}, "
           f"breakpoint {bp.breakpoints[0] if bp.breakpoints else None}")


# ------------------------------------------------------------------ 11

PROPERTY_SUITES = [
    "tests/test_optimize.py::test_calibration_inequalities",
    "tests/test_optimize.py::test_holder_budget",
    "tests/test_optimize.py::test_value_is_one_lipschitz",
    "tests/test_transfer.py::test_kolmogorov_consistency",
    "tests/test_optimize.py::test_subaction_unique_up_to_constant",
    "tests/test_optimize.py::test_aubry_membership",
]


def test_property_suites():
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *PROPERTY_SUITES], cwd=ROOT, capture_output=True, text=True)
    dt = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    record(11, "property suites", {"passed": proc.returncode == 0, "runtime": dt < 300.0},
           f"{tail}, {dt:.1f} s")
