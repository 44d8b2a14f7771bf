"""Finite-candidate duality for the subaction and its breakpoint structure.

``V(x) = max_w [H_inf(w, x) - I*(w)]`` over the pre-orbit words of the
maximizing cycle; between breakpoints one word is selected, and ``V`` agrees
there with a single analytic kernel section.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .kernel import H_infinity, KernelContext, dual_periodic_maximum, series_W, series_dual
from .symbolic import EventuallyPeriodicPoint, lex_compare

__all__ = [
    "OrientationRefused",
    "CandidateSet",
    "HInfinityKernel",
    "DualValue",
    "SelectionFunction",
    "BreakpointReport",
    "TwistReport",
    "UniquenessStats",
    "CrossValidation",
    "PiecewiseReport",
    "candidate_words",
    "V_dual",
    "optimal_selection",
    "scan_breakpoints",
    "twist_check",
    "monotonicity_check",
    "cross_validate",
    "generic_uniqueness_probe",
    "closure_diagnostic",
    "run_piecewise",
]

Kernel = Callable[[EventuallyPeriodicPoint, np.ndarray], np.ndarray]
_lex_key = functools.cmp_to_key(lex_compare)


class OrientationRefused(ValueError):
    """The duality formula needs an orientation preserving map."""


@dataclass(frozen=True)
class CandidateSet:
    """Pre-orbit words of the maximizing cycle up to ``N_bar`` extra symbols."""

    words: tuple[EventuallyPeriodicPoint, ...]
    N_bar: int
    cycle: tuple[int, ...]
    istar: tuple[float, ...] = ()

    def __len__(self) -> int:
        return len(self.words)

    def with_istar(self, values: Sequence[float]) -> "CandidateSet":
        values = tuple(float(v) for v in values)
        if len(values) != len(self.words) or not all(np.isfinite(values)):
            raise ValueError("need one finite I* per candidate")
        return CandidateSet(self.words, self.N_bar, self.cycle, values)


def candidate_words(cycle: Sequence[int], N_bar: int, d: int = 2,
                    istar: Callable[[EventuallyPeriodicPoint], float] | None = None) -> CandidateSet:
    """All ``s_1..s_j + m`` with ``m`` on the cycle and ``j <= N_bar``, deduplicated.

    Ordered by preperiod, then lexicographically.
    """
    if N_bar < 0:
        raise ValueError("N_bar must be >= 0")
    M = EventuallyPeriodicPoint.periodic(tuple(cycle), d).cycle_rotations()
    seen = dict.fromkeys(M)
    layer = list(M)
    for _ in range(N_bar):
        nxt = []
        for w in layer:
            for s in range(d):
                p = w.prepend((s,))
                if p not in seen:
                    seen[p] = None
                    nxt.append(p)
        layer = nxt
    words = sorted(seen, key=lambda w: (w.preperiod, _lex_key(w)))
    cand = CandidateSet(tuple(words), int(N_bar), M[0].cycle)
    if istar is not None:
        cand = cand.with_istar([istar(w) for w in words])
    return cand


class HInfinityKernel:
    """``G(w, x) = H_inf(w, x)`` for a problem.

    With ``mode="gauge"`` the limit is taken once per word at ``x_bar`` and the
    x-dependence is the series ``W(w, x)``, which equals
    ``H_beta(w, x) - H_beta(w, x_bar)`` for every beta.  ``mode="direct"``
    runs the beta schedule at every requested ``x``.
    """

    def __init__(self, ctx: KernelContext, schedule=(8, 16, 32, 64), tol: float = 1e-10,
                 series_depth: int = 60, mode: str = "gauge"):
        if mode not in ("gauge", "direct"):
            raise ValueError(f"unknown mode {mode!r}")
        self.ctx = ctx
        self.map = ctx.map
        self.anchor_x = ctx.anchor_x
        self.schedule = tuple(schedule)
        self.tol = tol
        self.series_depth = series_depth
        self.mode = mode
        self._base: dict = {}

    def base(self, w: EventuallyPeriodicPoint):
        """The converged value record of ``H_inf(w, x_bar)``."""
        hit = self._base.get(w)
        if hit is None:
            hit = H_infinity(self.ctx, w, self.ctx.anchor_x, self.schedule, self.tol)
            self._base[w] = hit
        return hit

    def __call__(self, w: EventuallyPeriodicPoint, xs) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
        if self.mode == "direct":
            return np.asarray(H_infinity(self.ctx, w, xs, self.schedule, self.tol).value)
        syms = np.tile(np.array(w.expand(self.series_depth), dtype=np.int64), (xs.size, 1))
        return self.base(w).value + series_W(self.ctx, syms, xs)


def _refuse_reversing(kernel) -> None:
    fmap = getattr(kernel, "map", None)
    if fmap is not None and fmap.orientation != "preserving":
        raise OrientationRefused(
            "the finite-candidate formula and the twist argument need an orientation "
            "preserving map; this map reverses orientation")


class DualValue(NamedTuple):
    values: np.ndarray
    argmax: tuple[tuple[int, ...], ...]
    offset: float
    warnings: tuple[str, ...]


def _scores(xs, cand: CandidateSet, kernel: Kernel) -> np.ndarray:
    if not cand.istar:
        raise ValueError("candidate set carries no I* values")
    return np.array([kernel(w, xs) - i for w, i in zip(cand.words, cand.istar)])


def V_dual(xs, cand: CandidateSet, kernel: Kernel, tie_tol: float = 1e-7,
           anchor_x: float | None = None, warnings: Sequence[str] = ()) -> DualValue:
    """``max_w [G(w, x) - I*(w)]`` with the argmax set per ``x``.

    Values are shifted to vanish at ``anchor_x`` (default: the kernel's
    anchor when it has one).
    """
    _refuse_reversing(kernel)
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    sc = _scores(xs, cand, kernel)
    best = sc.max(axis=0)
    argmax = tuple(tuple(int(i) for i in np.flatnonzero(sc[:, j] >= best[j] - tie_tol))
                   for j in range(xs.size))
    if anchor_x is None:
        anchor_x = getattr(kernel, "anchor_x", None)
    offset = 0.0
    if anchor_x is not None:
        offset = float(_scores(np.array([anchor_x]), cand, kernel).max())
    return DualValue(best - offset, argmax, offset, tuple(warnings))


@dataclass(frozen=True)
class SelectionFunction:
    """Per-``x`` argmax sets with their lexicographic extremes."""

    x: np.ndarray
    U: tuple[tuple[EventuallyPeriodicPoint, ...], ...]
    u_plus: tuple[EventuallyPeriodicPoint, ...]
    u_minus: tuple[EventuallyPeriodicPoint, ...]
    V: np.ndarray
    tie_tol: float


def optimal_selection(xs, cand: CandidateSet, kernel: Kernel,
                      tie_tol: float = 1e-7) -> SelectionFunction:
    """Argmax sets ``U(x)`` and ``u+ = max U``, ``u- = min U`` in lexicographic order."""
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    dv = V_dual(xs, cand, kernel, tie_tol)
    U = tuple(tuple(cand.words[i] for i in a) for a in dv.argmax)
    up = tuple(max(u, key=_lex_key) for u in U)
    um = tuple(min(u, key=_lex_key) for u in U)
    return SelectionFunction(xs, U, up, um, dv.values, tie_tol)


@dataclass(frozen=True)
class BreakpointReport:
    """Interior breakpoints and the word selected on each segment.

    ``edges`` adds the end points 0 and 1.  ``certified[j]`` is True when all
    random probes inside segment ``j`` select ``segment_words[j]``.
    """

    breakpoints: tuple[float, ...]
    segment_words: tuple[EventuallyPeriodicPoint, ...]
    certified: tuple[bool, ...]
    tie_tol: float
    refine_tol: float
    consistent: bool
    message: str = ""

    @property
    def edges(self) -> tuple[float, ...]:
        return (0.0,) + self.breakpoints + (1.0,)


def _selector(cand, kernel, tie_tol):
    def sel(x: float) -> EventuallyPeriodicPoint:
        return optimal_selection(np.array([x]), cand, kernel, tie_tol).u_plus[0]
    return sel


def _bisect(sel, lo, wlo, hi, whi, tol, out, budget=200):
    if budget <= 0:
        out.append((0.5 * (lo + hi), wlo, whi))
        return
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        wm = sel(mid)
        if wm == wlo:
            lo = mid
        elif wm == whi:
            hi = mid
        else:
            # a third word in between; split the interval
            _bisect(sel, lo, wlo, mid, wm, tol, out, budget - 1)
            _bisect(sel, mid, wm, hi, whi, tol, out, budget - 1)
            return
    out.append((0.5 * (lo + hi), wlo, whi))


def scan_breakpoints(cand: CandidateSet, kernel: Kernel, grid_n: int = 257,
                     refine_tol: float = 1e-6, tie_tol: float = 1e-7, probes: int = 16,
                     seed: int = 0) -> BreakpointReport:
    """Locate changes of the selected word (``u+``) and certify each segment."""
    _refuse_reversing(kernel)
    xs = np.linspace(0.0, 1.0, grid_n)
    sel_grid = optimal_selection(xs, cand, kernel, tie_tol).u_plus
    sel = _selector(cand, kernel, tie_tol)
    found: list = []
    for i in range(grid_n - 1):
        if sel_grid[i] != sel_grid[i + 1]:
            _bisect(sel, xs[i], sel_grid[i], xs[i + 1], sel_grid[i + 1], refine_tol, found)
    bps = tuple(float(z) for z, _, _ in found)
    words = (sel_grid[0],) + tuple(w for _, _, w in found)
    rng = np.random.default_rng(seed)
    edges = (0.0,) + bps + (1.0,)
    certified = []
    for j, w in enumerate(words):
        a, b = edges[j] + refine_tol, edges[j + 1] - refine_tol
        if b <= a:
            certified.append(False)
            continue
        pts = rng.uniform(a, b, probes)
        got = optimal_selection(pts, cand, kernel, tie_tol).u_plus
        certified.append(all(g == w for g in got))
    consistent = len(bps) <= len(cand) - 1 and all(
        words[j] != words[j + 1] for j in range(len(words) - 1))
    msg = "" if consistent else (
        f"{len(bps)} breakpoints for {len(cand)} candidates: selection is not a "
        "monotone finite selection")
    return BreakpointReport(bps, words, tuple(certified), tie_tol, refine_tol, consistent, msg)


class TwistReport(NamedTuple):
    ok: bool
    status: str
    min_margin: float
    violations: tuple


def twist_check(G: Kernel, words: Sequence[EventuallyPeriodicPoint], xs=None,
                samples: int = 200, margin_tol: float = 1e-12, seed: int = 0) -> TwistReport:
    """Sampled rectangle test ``G(a,b) + G(a',b') < G(a,b') + G(a',b)`` for ``a < a'``, ``b < b'``.

    ``status`` is ``"strict"``, ``"non-strict"`` (all margins zero within
    ``margin_tol`` or positive) or ``"violated"``.
    """
    words = sorted(set(words), key=_lex_key)
    if len(words) < 2:
        raise ValueError("need at least two distinct words")
    xs = np.linspace(0.0, 1.0, 33) if xs is None else np.sort(np.asarray(xs, dtype=np.float64))
    table = np.array([G(w, xs) for w in words])
    rng = np.random.default_rng(seed)
    i = rng.integers(0, len(words), (samples, 2))
    j = rng.integers(0, xs.size, (samples, 2))
    keep = (i[:, 0] != i[:, 1]) & (j[:, 0] != j[:, 1])
    i, j = np.sort(i[keep], axis=1), np.sort(j[keep], axis=1)
    a, a2, b, b2 = i[:, 0], i[:, 1], j[:, 0], j[:, 1]
    margin = table[a, b2] + table[a2, b] - table[a, b] - table[a2, b2]
    bad = margin <= margin_tol
    viol = tuple((words[p], words[q], float(xs[r]), float(xs[s]), float(mg))
                 for p, q, r, s, mg in zip(a[bad], a2[bad], b[bad], b2[bad], margin[bad]))
    if not bad.any():
        status = "strict"
    elif np.all(margin >= -margin_tol):
        status = "non-strict"
    else:
        status = "violated"
    return TwistReport(status == "strict", status, float(margin.min()), viol)


def monotonicity_check(sel: SelectionFunction):
    """Whether ``u+`` and ``u-`` are non-increasing along the grid.

    Returns ``(ok, first_violation)`` where the violation is
    ``(which, x_i, x_{i+1}, word_i, word_{i+1})`` or None.
    """
    for name, seq in (("u_plus", sel.u_plus), ("u_minus", sel.u_minus)):
        for k in range(len(seq) - 1):
            if lex_compare(seq[k + 1], seq[k]) > 0:
                return False, (name, float(sel.x[k]), float(sel.x[k + 1]), seq[k], seq[k + 1])
    return True, None


class CrossValidation(NamedTuple):
    dual_error: float
    beta_errors: dict
    trend_decreasing: bool
    passed: bool


def cross_validate(xs, v_dual: Callable, v_lax: Callable, v_betas: dict, anchor_x: float,
                   tol: float = 1e-4, anchor_betas: bool = True,
                   noise: float = 1e-9) -> CrossValidation:
    """Compare the three routes to ``V`` after anchoring at ``anchor_x``.

    ``v_betas`` maps beta to ``(1/beta) log phi_beta`` as a callable.  With
    ``anchor_betas=False`` those keep their eigenmeasure normalisation.  The
    trend counts as decreasing when it strictly decreases or stays below
    ``noise``.
    """
    xs = np.asarray(xs, dtype=np.float64)
    anchored = lambda f: np.asarray(f(xs)) - float(np.asarray(f(np.array([anchor_x])))[0])  # noqa: E731
    lax = anchored(v_lax)
    dual_err = float(np.max(np.abs(anchored(v_dual) - lax)))
    errs = {}
    for b in sorted(v_betas):
        f = v_betas[b]
        vb = anchored(f) if anchor_betas else np.asarray(f(xs))
        errs[b] = float(np.max(np.abs(vb - lax)))
    seq = [errs[b] for b in sorted(errs)]
    trend = all(e2 < e1 or max(e1, e2) <= noise for e1, e2 in zip(seq, seq[1:]))
    return CrossValidation(dual_err, errs, trend, dual_err <= tol and trend)


class UniquenessStats(NamedTuple):
    singleton_fraction: float
    max_cluster_width: float
    localized: bool


def generic_uniqueness_probe(sel: SelectionFunction,
                             report: BreakpointReport | None = None) -> UniquenessStats:
    """Fraction of grid points with a single optimal word and the widest tie run.

    ``localized`` says every tie run lies within one grid step of a reported
    breakpoint (always True without a report).
    """
    single = np.array([len(u) == 1 for u in sel.U])
    x = sel.x
    step = float(np.max(np.diff(x))) if x.size > 1 else 0.0
    widest, localized = 0.0, True
    k = 0
    while k < x.size:
        if single[k]:
            k += 1
            continue
        j = k
        while j + 1 < x.size and not single[j + 1]:
            j += 1
        widest = max(widest, float(x[j] - x[k]))
        if report is not None:
            near = [z for z in report.breakpoints if x[k] - step - report.refine_tol <= z
                    <= x[j] + step + report.refine_tol]
            localized = localized and bool(near)
        k = j + 1
    return UniquenessStats(float(single.mean()), widest, localized)


def closure_diagnostic(cand: CandidateSet, kernel: Kernel, xs=None) -> float:
    """``min I*`` over the deepest candidates minus ``max_x [max_w G - min_w G]``.

    Positive slack means no longer pre-orbit word can be selected, at the
    sampled resolution.
    """
    xs = np.linspace(0.0, 1.0, 65) if xs is None else np.asarray(xs, dtype=np.float64)
    g = np.array([kernel(w, xs) for w in cand.words])
    spread = float(np.max(g.max(axis=0) - g.min(axis=0)))
    deepest = max(w.preperiod for w in cand.words)
    if deepest == 0:
        return float("inf")
    tail = min(i for w, i in zip(cand.words, cand.istar) if w.preperiod == deepest)
    # each extra symbol costs at least the least positive step of I* seen so far
    return float(tail - spread)


@dataclass(frozen=True, eq=False)
class PiecewiseReport:
    """Everything the candidate pipeline produced for one problem."""

    m_star: float
    cycle: tuple[int, ...]
    candidates: CandidateSet
    r_star_ok: bool
    r_star_min: float
    breakpoints: BreakpointReport
    twist: TwistReport
    monotone: bool
    closure_slack: float
    table_residual: float
    warnings: tuple[str, ...] = field(default=())


def run_piecewise(ctx: KernelContext, N_bar: int = 2, max_period: int = 8,
                  table_depth: int = 10, series_depth: int = 40,
                  schedule=(8, 16, 32, 64), grid_n: int = 129, refine_tol: float = 1e-6,
                  tie_tol: float = 1e-7) -> PiecewiseReport:
    """Full pipeline: dual cycle, ``V*`` table, candidates with ``I*``, breakpoints."""
    from .optimize import I_star, NotUniquelyMaximizing, dual_calibrated_subaction, r_star_good

    _refuse_reversing(ctx)
    d = ctx.map.d
    A_star = lambda pts: series_dual(ctx, pts, series_depth)  # noqa: E731
    m_star, cycle = dual_periodic_maximum(ctx, max_period, series_depth)
    lip = ctx.potential.lipschitz()
    table = dual_calibrated_subaction(A_star, m_star, table_depth, d, cycle,
                                      holder=lip * ctx.lam / (1 - ctx.lam), lam=ctx.lam)
    warnings = []
    try:
        rep = r_star_good(cycle, table, A_star, m_star, 0.0, max_period)
        ok, rmin = rep.ok, rep.min_R
        if not ok:
            warnings.append("R* is not good: some off-cycle preimage has R* <= 0")
    except NotUniquelyMaximizing as exc:
        ok, rmin = False, float("nan")
        warnings.append(str(exc))
    cand = candidate_words(cycle, N_bar, d,
                           lambda w: I_star(w, table, A_star, m_star, cycle).value)
    kernel = HInfinityKernel(ctx, schedule)
    report = scan_breakpoints(cand, kernel, grid_n, refine_tol, tie_tol)
    xs = np.linspace(0.0, 1.0, grid_n)
    sel = optimal_selection(xs, cand, kernel, tie_tol)
    mono, _ = monotonicity_check(sel)
    twist = twist_check(kernel, cand.words, np.linspace(0, 1, 17)) if len(cand) > 1 else \
        TwistReport(True, "strict", float("inf"), ())
    if not twist.ok:
        warnings.append(f"twist condition {twist.status}; monotone selection is empirical")
    slack = closure_diagnostic(cand, kernel)
    return PiecewiseReport(m_star, tuple(cycle), cand, ok, rmin, report, twist, mono, slack,
                           table.residual, tuple(warnings))
