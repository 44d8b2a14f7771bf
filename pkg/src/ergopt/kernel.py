"""Involution kernels, scaling function and the dual potential.

Notation: for an eventually periodic ``omega`` and ``k >= 1`` the truncation
``omega_k`` is the word of its first ``k`` symbols, and

    log h_beta(omega_k, x) = log htilde(omega_k, x) - k log alpha - log mu~(I_{omega_k})

with ``log htilde(gamma, x) = beta * sum_j A(psi_{gamma_j}(x))`` over the
prefixes ``gamma_j``.  The series route to the kernel uses

    W(omega, x) = sum_{j >= 1} A(psi_{omega_j}(x)) - A(psi_{omega_j}(x_bar)),

which vanishes at the anchor ``x_bar`` and gives
``A*(omega) = A(psi_{omega_0}(x_bar)) + W(sigma omega, psi_{omega_0}(x_bar))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ExpandingMapSpec
from .symbolic import EventuallyPeriodicPoint, Word, lyndon_words
from .transfer import EigenData, PotentialSpec, TransferOperator

__all__ = [
    "KernelConvergenceError",
    "SeriesTruncationError",
    "ConvergedValue",
    "KernelContext",
    "h_word",
    "h_limit",
    "scaling_function",
    "dual_potential",
    "series_dual",
    "series_W",
    "involution_residual",
    "H_beta",
    "H_infinity",
    "dual_roundtrip_residual",
    "dual_periodic_maximum",
]

_EPS = np.finfo(float).eps


class KernelConvergenceError(RuntimeError):
    """Requested tolerance not reached before the depth cap."""

    def __init__(self, message: str, defect: float, depth: int):
        self.defect = defect
        self.depth = depth
        super().__init__(f"{message} (defect {defect:.3e} at depth {depth})")


class SeriesTruncationError(ValueError):
    """Series depth too small for the requested tolerance."""


@dataclass(frozen=True)
class ConvergedValue:
    """A limit computed by deepening, with its geometric tail estimate.

    ``history`` carries per-depth or per-beta values when useful; ``converged``
    is False only for reports that flag non-convergence rather than raise.
    """

    value: float
    depth_used: int
    tail_bound: float
    history: tuple = field(default=(), compare=False)
    converged: bool = True


class KernelContext:
    """Everything the kernel computations share for one problem.

    Parameters
    ----------
    fmap : ExpandingMapSpec
    potential : PotentialSpec
    n : int
        Chebyshev grid size.
    anchor_x : float
        ``x_bar``; additive normalisations vanish here.
    anchor_omega : EventuallyPeriodicPoint, optional
        ``omega_bar``; defaults to ``0^inf``.
    depth_cap : int
        Largest word depth used by limits.
    """

    def __init__(self, fmap: ExpandingMapSpec, potential: PotentialSpec, n: int = 128,
                 anchor_x: float = 1.0, anchor_omega: EventuallyPeriodicPoint | None = None,
                 depth_cap: int = 64):
        self.map = fmap
        self.potential = potential
        self.op = TransferOperator(fmap, potential, n)
        self.anchor_x = float(anchor_x)
        self.anchor_omega = anchor_omega or EventuallyPeriodicPoint.periodic((0,), fmap.d)
        self.depth_cap = int(depth_cap)
        self._mass_cache: dict = {}

    @property
    def lam(self) -> float:
        return self.map.lam

    def eig(self, beta: float) -> EigenData:
        return self.op.leading_eigen(beta)

    def prefix_sums(self, symbols, pts, beta: float) -> np.ndarray:
        """``log htilde`` of every prefix: row ``k-1`` holds depth ``k``."""
        pts = np.atleast_1d(np.asarray(pts, dtype=np.float64))
        out = np.empty((len(symbols), pts.size))
        y = pts
        acc = np.zeros_like(pts)
        for k, s in enumerate(symbols):
            y = self.map.branches[s](y)
            acc = acc + beta * self.potential.A(y)
            out[k] = acc
        return out

    def prefix_log_masses(self, omega: EventuallyPeriodicPoint, beta: float,
                          depth: int) -> np.ndarray:
        """``log mu~(I_{omega_k})`` for ``k = 0..depth``."""
        key = (omega, float(beta), depth)
        hit = self._mass_cache.get(key)
        if hit is not None:
            return hit
        for (o, b, dd), val in self._mass_cache.items():
            if o == omega and b == float(beta) and dd >= depth:
                return val[: depth + 1]
        eig = self.eig(beta)
        out = np.zeros(depth + 1)
        if depth:
            s = self.prefix_sums(omega.expand(depth), self.op.nodes, beta)
            out[1:] = self.op.log_mu(s.T, eig) - np.arange(1, depth + 1) * eig.log_alpha
        self._mass_cache[key] = out
        return out

    def log_h_table(self, omega: EventuallyPeriodicPoint, xs, beta: float,
                    depth: int) -> np.ndarray:
        """``log h_beta(omega_k, x)`` for ``k = 1..depth`` (rows) and each ``x``."""
        eig = self.eig(beta)
        s = self.prefix_sums(omega.expand(depth), xs, beta)
        masses = self.prefix_log_masses(omega, beta, depth)[1:]
        k = np.arange(1, depth + 1)[:, None]
        return s - k * eig.log_alpha - masses[:, None]


def _as_point(omega, d: int) -> EventuallyPeriodicPoint:
    if isinstance(omega, EventuallyPeriodicPoint):
        return omega
    from .symbolic import parse_point

    return parse_point(str(omega), d)


def h_word(ctx: KernelContext, gamma, x, beta: float = 1.0):
    """``log h_beta(gamma, x)`` for a finite word."""
    syms = tuple(gamma.symbols if isinstance(gamma, Word) else gamma)
    if not syms:
        return 0.0 if np.ndim(x) == 0 else np.zeros(np.shape(x))
    eig = ctx.eig(beta)
    s = ctx.prefix_sums(syms, x, beta)[-1]
    lm = ctx.op.log_cylinder_masses(np.array([syms]), eig)[0]
    out = s - len(syms) * eig.log_alpha - lm
    return float(out[0]) if np.ndim(x) == 0 else out


def _cauchy_limit(rows: np.ndarray, lam: float, tol: float, scale: np.ndarray,
                  what: str, window: int = 1) -> ConvergedValue:
    """First depth whose geometric tail estimate meets ``tol``.

    ``rows[k-1]`` holds the depth-``k`` approximation (scalar or vector).
    Defects of a periodic tail oscillate with the cycle phase, so the tail is
    extrapolated from the largest defect over the last ``window`` steps.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64).T).T
    depth = rows.shape[0]
    defects = np.abs(np.diff(rows, axis=0)).max(axis=1)
    floor = 64 * _EPS * np.maximum(1.0, np.abs(scale)).max(axis=-1)
    floor = np.broadcast_to(floor, (depth,))
    best = (np.inf, depth)
    for k in range(1, depth):
        # value at depth k+1, tail from the last defect and the declared rate
        if k < window:
            continue
        tail = defects[max(0, k - window):k].max() * lam / (1.0 - lam) + floor[k]
        if window == 1 and k >= 2 and defects[k - 1] > defects[k - 2] * max(lam, 0.75) + floor[k]:
            continue
        if tail <= tol:
            val = rows[k]
            return ConvergedValue(float(val[0]) if val.size == 1 else val, k + 1, float(tail),
                                  tuple(defects[:k]))
        if tail < best[0]:
            best = (tail, k + 1)
    raise KernelConvergenceError(f"{what}: tolerance {tol:.1e} unreachable", best[0], depth)


def h_limit(ctx: KernelContext, omega, x, beta: float = 1.0, tol: float = 1e-10,
            max_depth: int | None = None) -> ConvergedValue:
    """``W_1(omega, x) = lim_k log h_beta(omega_k, x)`` to tolerance ``tol``."""
    omega = _as_point(omega, ctx.map.d)
    cap = max_depth or ctx.depth_cap
    depth = min(16, cap)
    while True:
        rows = ctx.log_h_table(omega, x, beta, depth)
        scale = ctx.prefix_sums(omega.expand(depth), x, beta)
        try:
            return _cauchy_limit(rows, ctx.lam, tol, scale, "kernel limit", omega.period)
        except KernelConvergenceError:
            if depth >= cap:
                raise
            depth = min(2 * depth, cap)


def _log_scaling_rows(ctx, omega, beta, depth):
    sig = omega.shift(1)
    m_omega = ctx.prefix_log_masses(omega, beta, depth)
    m_sig = ctx.prefix_log_masses(sig, beta, depth - 1)
    # log mu~(I_{omega_k}) - log mu~(I_{sigma(omega_k)}), k = 1..depth
    return m_omega[1:] - m_sig[:depth], m_omega


def scaling_function(ctx: KernelContext, omega, beta: float = 1.0, tol: float = 1e-10,
                     max_depth: int | None = None) -> ConvergedValue:
    """``s(omega) = lim mu~(I_{omega_k}) / mu~(I_{sigma(omega_k)})``.

    The returned ``history`` holds the log-ratio defects per depth.
    """
    omega = _as_point(omega, ctx.map.d)
    cap = max_depth or ctx.depth_cap
    depth = min(16, cap)
    while True:
        rows, m_omega = _log_scaling_rows(ctx, omega, beta, depth)
        try:
            cv = _cauchy_limit(rows, ctx.lam, tol, m_omega[1:], "scaling function",
                               omega.period)
            s = float(np.exp(cv.value))
            return ConvergedValue(s, cv.depth_used, s * cv.tail_bound, cv.history)
        except KernelConvergenceError:
            if depth >= cap:
                raise
            depth = min(2 * depth, cap)


def _apply_rows(ctx, syms, y):
    """``psi_{syms[r]}(y[r])`` row by row."""
    out = np.empty_like(y)
    for b, psi in enumerate(ctx.map.branches):
        sel = syms == b
        if sel.any():
            out[sel] = psi(y[sel])
    return out


def series_W(ctx: KernelContext, syms: np.ndarray, x) -> np.ndarray:
    """Truncated ``W(omega, x) = sum_j A(psi_{omega_j} x) - A(psi_{omega_j} x_bar)`` per row.

    Summed as differences, which decay geometrically, to keep rounding at the
    level of the first term.
    """
    syms = np.asarray(syms, dtype=np.int64)
    y = np.broadcast_to(np.asarray(x, dtype=np.float64), syms.shape[:1]).copy()
    yb = np.full(syms.shape[0], ctx.anchor_x)
    acc = np.zeros(syms.shape[0])
    A = ctx.potential.A
    for j in range(syms.shape[1]):
        y = _apply_rows(ctx, syms[:, j], y)
        yb = _apply_rows(ctx, syms[:, j], yb)
        acc += A(y) - A(yb)
    return acc


def series_dual(ctx: KernelContext, points, depth: int = 40, x: float | None = None) -> np.ndarray:
    """Series-route dual potential ``A*`` at each eventually periodic point.

    ``A*(omega) = A(psi_{omega_0} x) + W(sigma omega, psi_{omega_0} x) - W(omega, x)``
    with ``W`` truncated at ``depth`` terms; ``x`` defaults to ``x_bar``, where
    the last term vanishes.
    """
    full = np.array([p.expand(depth + 1) for p in points], dtype=np.int64).reshape(-1, depth + 1)
    xv = ctx.anchor_x if x is None else float(x)
    y0 = _apply_rows(ctx, full[:, 0], np.full(full.shape[0], xv))
    out = ctx.potential.A(y0) + series_W(ctx, full[:, 1:], y0)
    if xv != ctx.anchor_x:
        out -= series_W(ctx, full[:, :-1], xv)
    return out


def series_tail_bound(ctx: KernelContext, depth: int) -> float:
    """Bound on the truncation error of the series kernel at ``depth``."""
    lam = ctx.lam
    return 2.0 * ctx.potential.lipschitz() * lam ** (depth + 1) / (1.0 - lam)


def dual_potential(ctx: KernelContext, omega, beta: float = 1.0, mode: str = "scaling",
                   depth: int | None = None, tol: float = 1e-9) -> float:
    """``A*(omega)`` for the potential ``beta * A``.

    Parameters
    ----------
    mode : {"scaling", "series"}
        ``scaling``: ``log alpha + log s(omega)``; ``series``: the telescoped
        kernel series, truncated at ``depth`` (default 40).
    """
    omega = _as_point(omega, ctx.map.d)
    if mode == "scaling":
        eig = ctx.eig(beta)
        if depth is None:
            return eig.log_alpha + float(np.log(scaling_function(ctx, omega, beta, tol).value))
        rows, _ = _log_scaling_rows(ctx, omega, beta, depth)
        return eig.log_alpha + float(rows[-1])
    if mode != "series":
        raise ValueError(f"unknown mode {mode!r}")
    depth = 40 if depth is None else depth
    bound = series_tail_bound(ctx, depth)
    if bound > tol:
        raise SeriesTruncationError(
            f"series depth {depth} leaves a tail of {bound:.2e} > {tol:.1e}")
    vals = [series_dual(ctx, [omega], depth, x)[0] for x in (0.0, 0.5, 1.0)]
    if max(vals) - min(vals) > max(tol, 2 * bound):
        raise SeriesTruncationError(
            f"series dual depends on x (spread {max(vals) - min(vals):.2e})")
    return beta * float(series_dual(ctx, [omega], depth)[0])


def involution_residual(ctx: KernelContext, omega, x: float, beta: float = 1.0,
                        depth: int = 40) -> float:
    """``|[log g*(omega) - beta A(psi_{omega_0} x)] - [log h(sigma omega, psi x) - log h(omega, x)]|``.

    Every term is taken at the same truncation depth.
    """
    omega = _as_point(omega, ctx.map.d)
    sig = omega.shift(1)
    y = ctx.map.branches[omega.symbol(0)](np.float64(x))
    log_gstar = dual_potential(ctx, omega, beta, "scaling", depth)
    lhs = log_gstar - beta * float(ctx.potential.A(y))
    rhs = float(ctx.log_h_table(sig, y, beta, depth)[-1, 0]) - float(
        ctx.log_h_table(omega, x, beta, depth)[-1, 0])
    return abs(lhs - rhs)


def H_beta(ctx: KernelContext, omega, x, beta: float, tol: float = 1e-10) -> ConvergedValue:
    """``(1/beta) log h_beta(omega, x)`` to tolerance ``tol``."""
    if beta < 1:
        raise ValueError("beta must be >= 1")
    cv = h_limit(ctx, omega, x, beta, tol * beta)
    return ConvergedValue(cv.value / beta, cv.depth_used, cv.tail_bound / beta, cv.history)


def H_infinity(ctx: KernelContext, omega, x, schedule=(8, 16, 32, 64),
               tol: float = 1e-10) -> ConvergedValue:
    """Zero-temperature kernel along an increasing ``schedule`` of beta.

    Returns the value at the last beta; ``tail_bound`` is the last observed
    change between consecutive betas and ``converged`` is False when those
    changes do not decrease.
    """
    schedule = [float(b) for b in schedule]
    if len(schedule) < 3 or any(b2 <= b1 for b1, b2 in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be increasing with at least 3 entries")
    vals = [H_beta(ctx, omega, x, b, tol) for b in schedule]
    seq = [np.asarray(v.value) for v in vals]
    defects = [float(np.max(np.abs(b - a))) for a, b in zip(seq, seq[1:])]
    decreasing = all(d2 <= d1 + 1e-12 for d1, d2 in zip(defects, defects[1:]))
    last = vals[-1]
    return ConvergedValue(last.value, last.depth_used, defects[-1],
                          tuple(zip(schedule, (v.value for v in vals))), decreasing)


def _dual_on_orbit(ctx, cycle, depth):
    pts = EventuallyPeriodicPoint.periodic(cycle, ctx.map.d).cycle_rotations()
    return series_dual(ctx, pts, depth)


def dual_periodic_maximum(ctx: KernelContext, max_period: int = 8,
                          depth: int = 40) -> tuple[float, tuple[int, ...]]:
    """Largest periodic average of the series dual over primitive cycles."""
    best = (-np.inf, ())
    for lw in lyndon_words(ctx.map.d, max_period):
        avg = float(np.mean(_dual_on_orbit(ctx, lw, depth)))
        if avg > best[0] + 1e-12:
            best = (avg, lw)
    return best


def dual_roundtrip_residual(ctx: KernelContext, depth: int = 40, max_period: int = 6,
                            tol: float = 1e-5) -> float:
    """Max over periodic orbits of ``|average of L*(A*) - A|``.

    ``L*(A*)(x) = A*(w_bar) + sum_{n=0}^{depth} [A*(nu_n..nu_0 w_bar) - A*(nu_n..nu_1 w_bar)]``
    with ``nu_j`` the symbol of ``f^j(x)``; along a periodic orbit the
    itinerary is read exactly from the defining word.
    """
    bound = series_tail_bound(ctx, depth)
    if bound > tol:
        raise SeriesTruncationError(f"series depth {depth} leaves a tail of {bound:.2e}")
    d = ctx.map.d
    wbar = ctx.anchor_omega
    worst = 0.0
    for lw in lyndon_words(d, max_period):
        p = len(lw)
        xs = np.array(ctx.map.orbit_points(lw))
        points = []
        for j in range(p):
            # forward itinerary of f^j(x*) reads the word right to left
            nu = [lw[(p - 1 - j - i) % p] for i in range(depth + 1)]
            for n in range(depth + 1):
                with_0 = tuple(reversed(nu[: n + 1]))
                without = tuple(reversed(nu[1: n + 1]))
                points.append(wbar.prepend(with_0))
                points.append(wbar.prepend(without))
        vals = series_dual(ctx, points + [wbar], depth)
        base = vals[-1]
        diffs = (vals[:-1:2] - vals[1:-1:2]).reshape(p, depth + 1)
        lstar = base + diffs.sum(axis=1)
        avg = float(np.mean(lstar - ctx.potential.A(xs)))
        worst = max(worst, abs(avg))
    return worst
