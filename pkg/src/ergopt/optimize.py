"""Ergodic optimization: maximizing averages, calibrated subactions on both
sides, error and deviation functions, Mañé potential and Peierls barrier.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import _kernels
from .dynamics import ExpandingMapSpec, PeriodicOrbit
from .symbolic import EventuallyPeriodicPoint, lyndon_words
from .transfer import GridFunction, PotentialSpec, TransferOperator, interpolation_matrix

__all__ = [
    "SubactionConvergenceError",
    "NotUniquelyMaximizing",
    "MaximumAverage",
    "SubactionGrid",
    "DualSubactionTable",
    "DeviationValue",
    "ChainSearch",
    "RStarReport",
    "max_ergodic_average",
    "calibrated_subaction",
    "error_R",
    "deviation_I",
    "mane_potential",
    "peierls_barrier",
    "aubry_test",
    "dual_calibrated_subaction",
    "I_star",
    "R_star",
    "r_star_good",
]

PERIODIC_CAVEAT = ("correct only if the maximizing measure is supported on a periodic orbit "
                   "of period at most max_period")


class SubactionConvergenceError(RuntimeError):
    """Max-plus iteration did not settle; ``drift`` estimates the error in ``m``."""

    def __init__(self, message: str, residual: float, iterations: int, drift: float):
        self.residual = residual
        self.iterations = iterations
        self.drift = drift
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} "
                         f"iterations, drift {drift:.3e})")


class NotUniquelyMaximizing(ValueError):
    """Several periodic orbits attain the maximum; the R* test is undefined."""


class MaximumAverage(NamedTuple):
    m: float
    orbit: PeriodicOrbit

    @property
    def caveat(self) -> str:
        return PERIODIC_CAVEAT


def max_ergodic_average(fmap: ExpandingMapSpec, potential: PotentialSpec,
                        max_period: int = 8) -> MaximumAverage:
    """Best Birkhoff average over primitive periodic orbits up to ``max_period``."""
    orbits = fmap.enumerate_periodic_orbits(max_period, potential.A)
    return MaximumAverage(orbits[0].average, orbits[0])


@dataclass(frozen=True, eq=False)
class SubactionGrid:
    """Calibrated subaction on the Chebyshev grid, zero at ``anchor_x``."""

    V: GridFunction
    m: float
    anchor_x: float
    residual: float
    iterations: int
    drift: float
    fmap: ExpandingMapSpec = field(repr=False)
    potential: PotentialSpec = field(repr=False)

    def __call__(self, x):
        return self.V(x)

    def calibration_defect(self) -> float:
        """Sup over nodes of ``|V(x) - max_i [V(psi_i x) + A(psi_i x) - m]|``."""
        x = self.V.nodes
        rhs = np.max([self.V(b(x)) + self.potential.A(b(x)) - self.m
                      for b in self.fmap.branches], axis=0)
        return float(np.max(np.abs(rhs - self.V.values)))


def calibrated_subaction(fmap: ExpandingMapSpec, potential: PotentialSpec, m: float,
                         n: int = 128, anchor_x: float = 1.0, tol: float = 1e-12,
                         max_iter: int = 20000,
                         operator: TransferOperator | None = None) -> SubactionGrid:
    """Lax–Oleinik iteration ``V <- max_i [V o psi_i + A o psi_i - m]`` on the grid.

    Each step is renormalised so that ``V(anchor_x) = 0``; the removed shift
    tends to zero when ``m`` is right and to the error in ``m`` otherwise.

    Raises
    ------
    SubactionConvergenceError
        No convergence within ``max_iter``, or a nonzero limiting shift
        (reported as ``drift``), which means ``m`` is wrong.
    """
    op = operator if operator is not None and operator.n == n else TransferOperator(fmap, potential, n)
    anchor_row = interpolation_matrix(n, np.array([anchor_x]))[0]
    gains = op.A_images - m
    v = np.zeros(n)
    res, shift, it = np.inf, 0.0, 0
    for it in range(1, max_iter + 1):
        new = np.max(np.einsum("bij,j->bi", op.L, v) + gains, axis=0)
        shift = float(anchor_row @ new)
        new -= shift
        res = float(np.max(np.abs(new - v)))
        v = new
        if res <= tol:
            break
    else:
        raise SubactionConvergenceError("subaction iteration stalled", res, it, shift)
    if abs(shift) > max(1e-9, 100 * tol):
        # the fixed point of the renormalised map exists for any m; the shift is m's error
        raise SubactionConvergenceError("m is not the max-plus eigenvalue", res, it, shift)
    return SubactionGrid(GridFunction(v), float(m), float(anchor_x), res, it, shift, fmap, potential)


def error_R(sub: SubactionGrid, x):
    """``R(x) = V(f(x)) - V(x) - A(x) + m``."""
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    fx = np.array([sub.fmap.forward_step(float(t))[0] for t in xs])
    out = sub.V(fx) - sub.V(xs) - sub.potential.A(xs) + sub.m
    return float(out[0]) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class DeviationValue:
    """Partial sum of ``R`` along an orbit; ``infinite`` is a heuristic flag."""

    value: float
    terms: tuple[float, ...]
    infinite: bool = False


def deviation_I(sub: SubactionGrid, x: float, depth: int) -> DeviationValue:
    """``I(x) = sum_{i < depth} R(f^i x)``; flagged infinite when the last 10 terms exceed 0.01."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    pts = [float(x)]
    for _ in range(depth - 1):
        pts.append(sub.fmap.forward_step(pts[-1])[0])
    terms = np.maximum(error_R(sub, np.array(pts)), 0.0)
    flag = depth >= 10 and bool(np.all(terms[-10:] > 0.01))
    return DeviationValue(float(terms.sum()), tuple(float(t) for t in terms), flag)


class ChainSearch(NamedTuple):
    """Result of a backward-chain search; ``value`` is ``-inf`` if nothing qualified."""

    value: float
    length: int
    visited: int
    truncated: bool


def _step_bound(potential: PotentialSpec, m: float, samples: int = 8193) -> float:
    xs = np.linspace(0.0, 1.0, samples)
    slack = potential.lipschitz() / (2 * (samples - 1))
    return float(np.max(potential.A(xs))) + slack - m


def _chain_search(fmap, potential, m, x, y, eps, k_min, max_n, budget):
    if eps <= 0:
        raise ValueError("eps must be positive")
    best, n, visited, trunc = _kernels.mane_search(
        x, y, eps, k_min, max_n, m, fmap.programs, potential.program,
        _step_bound(potential, m), budget)
    if np.isnan(best):
        raise ValueError("potential or branch left its domain during the chain search")
    return ChainSearch(float(best), int(n), int(visited), bool(trunc))


def mane_potential(fmap: ExpandingMapSpec, potential: PotentialSpec, m: float, x: float,
                   y: float, eps: float = 1e-3, max_n: int = 20,
                   budget: int = 2_000_000) -> ChainSearch:
    """Sup of ``sum_{i<n} [A(f^i z) - m]`` over ``z = psi_gamma(y)``, ``|gamma| <= max_n``, ``|z - x| < eps``."""
    return _chain_search(fmap, potential, m, x, y, eps, 1, max_n, budget)


def peierls_barrier(fmap: ExpandingMapSpec, potential: PotentialSpec, m: float, x: float,
                    y: float, eps: float = 1e-3, k_min: int = 10, max_n: int = 20,
                    budget: int = 2_000_000) -> ChainSearch:
    """As :func:`mane_potential` restricted to chains of length at least ``k_min``."""
    return _chain_search(fmap, potential, m, x, y, eps, k_min, max_n, budget)


def aubry_test(fmap: ExpandingMapSpec, potential: PotentialSpec, m: float, x: float,
               tol: float = 1e-3, eps: float = 1e-3, max_n: int = 20,
               budget: int = 2_000_000) -> bool:
    """``S(x, x) >= -tol``; raises if the search returns a positive value beyond ``tol``."""
    s = mane_potential(fmap, potential, m, x, x, eps, max_n, budget).value
    if s > tol:
        raise AssertionError(f"S(x, x) = {s:.3e} > 0 contradicts the choice of m")
    return s >= -tol


# ---------------------------------------------------------------- dual side

DualEvaluator = Callable[[Sequence[EventuallyPeriodicPoint]], np.ndarray]


@dataclass(frozen=True, eq=False)
class DualSubactionTable:
    """Cylinder-constant calibrated subaction of the dual potential.

    ``values[i]`` belongs to the depth-``k`` cylinder whose word is the base-``d``
    digits of ``i`` (first symbol most significant).
    """

    depth: int
    d: int
    values: np.ndarray
    m_star: float
    cycle: tuple[int, ...]
    residual: float = 0.0
    error_bound: float = float("nan")
    iterations: int = 0
    drift: float = 0.0

    def index(self, w: EventuallyPeriodicPoint) -> int:
        idx = 0
        for s in w.expand(self.depth):
            idx = idx * self.d + s
        return idx

    def __call__(self, w: EventuallyPeriodicPoint) -> float:
        return float(self.values[self.index(w)])

    def representative(self, i: int) -> EventuallyPeriodicPoint:
        digits = []
        for _ in range(self.depth):
            i, r = divmod(i, self.d)
            digits.append(r)
        return EventuallyPeriodicPoint(tuple(reversed(digits)), self.cycle, self.d)


def dual_calibrated_subaction(A_star: DualEvaluator, m_star: float, depth: int, d: int,
                              cycle: Sequence[int], tol: float = 1e-12,
                              max_iter: int = 20000, holder: float | None = None,
                              lam: float = 0.5) -> DualSubactionTable:
    """Max-plus value iteration for ``V*`` on the ``d**depth`` cylinder table.

    The preimage ``s + w`` of a cylinder is looked up by truncation, while
    ``A*`` is evaluated at ``s`` prepended to the representative of ``w``
    (its word followed by the maximizing ``cycle``).  ``holder`` is a
    Lipschitz constant of ``A*`` in the ``lam**n`` metric, used only for the
    reported error bound.
    """
    if depth < 4:
        raise ValueError("depth must be >= 4")
    cycle = tuple(EventuallyPeriodicPoint.periodic(cycle, d).cycle)
    size = d ** depth
    table = DualSubactionTable(depth, d, np.zeros(size), m_star, cycle)
    reps = [table.representative(i) for i in range(size)]
    pre_pts = [r.prepend((s,)) for r in reps for s in range(d)]
    gains = np.asarray(A_star(pre_pts), dtype=np.float64).reshape(size, d) - m_star
    idx = np.arange(size)
    pre = (np.arange(d)[None, :] * d ** (depth - 1) + (idx // d)[:, None]).astype(np.int64)
    anchor = table.index(EventuallyPeriodicPoint.periodic(cycle, d))
    v, res, it, shift = _kernels.maxplus_table(np.zeros(size), pre, gains, anchor, tol, max_iter)
    if res > tol:
        raise SubactionConvergenceError("dual table iteration stalled", float(res), int(it),
                                        float(shift))
    bound = float("nan") if holder is None else holder * lam ** depth / (1.0 - lam)
    return DualSubactionTable(depth, d, v, float(m_star), cycle, float(res), bound, int(it),
                              float(shift))


def _landing_time(w: EventuallyPeriodicPoint, cycle: tuple[int, ...]) -> int | None:
    rots = {cycle[i:] + cycle[:i] for i in range(len(cycle))}
    return len(w.head) if w.cycle in rots else None


def R_star(w: EventuallyPeriodicPoint, table: DualSubactionTable, A_star: DualEvaluator,
           m_star: float) -> float:
    """``R*(w) = V*(sigma w) - V*(w) - A*(w) + m*``."""
    a = float(np.asarray(A_star([w]))[0])
    return table(w.shift(1)) - table(w) - a + m_star


def I_star(w: EventuallyPeriodicPoint, table: DualSubactionTable, A_star: DualEvaluator,
           m_star: float, cycle: Sequence[int] | None = None) -> DeviationValue:
    """Closed-form deviation of a word that lands on the maximizing cycle.

    ``I*(w) = V*(o(w)) - V*(w) - sum_{j < k(w)} (A*(sigma^j w) - m*)`` with
    ``k(w)`` the landing time and ``o(w) = sigma^k(w)``.  Words that never land
    get ``value = inf`` and ``infinite = True``.
    """
    cycle = tuple(EventuallyPeriodicPoint.periodic(cycle or table.cycle, w.d).cycle)
    k = _landing_time(w, cycle)
    if k is None:
        return DeviationValue(float("inf"), (), True)
    if k == 0:
        return DeviationValue(0.0, (), False)
    orbit = [w.shift(j) for j in range(k + 1)]
    a = np.asarray(A_star(orbit[:k]), dtype=np.float64)
    vs = np.array([table(p) for p in orbit])
    terms = vs[1:] - vs[:-1] - a + m_star
    value = vs[-1] - vs[0] - float(np.sum(a - m_star))
    return DeviationValue(float(value), tuple(float(t) for t in terms), False)


class RStarReport(NamedTuple):
    ok: bool
    min_R: float
    witnesses: tuple


def _check_unique(A_star, d, cycle, max_period, tol):
    best = None
    avgs = []
    for lw in lyndon_words(d, max_period):
        rots = EventuallyPeriodicPoint.periodic(lw, d).cycle_rotations()
        avgs.append((float(np.mean(A_star(rots))), lw))
    top = max(a for a, _ in avgs)
    winners = [lw for a, lw in avgs if a >= top - tol]
    best = EventuallyPeriodicPoint.periodic(cycle, d).cycle
    if len(winners) > 1:
        raise NotUniquelyMaximizing(
            f"{len(winners)} periodic orbits attain the dual maximum {top:.6g}")
    rots = {best[i:] + best[:i] for i in range(len(best))}
    if winners[0] not in rots:
        raise NotUniquelyMaximizing(
            f"cycle {best} is not the maximizing orbit {winners[0]}")


def r_star_good(cycle: Sequence[int], table: DualSubactionTable, A_star: DualEvaluator,
                m_star: float, delta: float = 0.0, max_period: int = 8,
                tie_tol: float = 1e-9) -> RStarReport:
    """Check ``R*(w) > delta`` on the off-cycle preimages of the cycle.

    Refuses (raises :class:`NotUniquelyMaximizing`) unless the cycle is the
    unique maximizing periodic orbit of ``A*`` up to ``max_period``.
    """
    d = table.d
    _check_unique(A_star, d, tuple(cycle), max_period, tie_tol)
    M = EventuallyPeriodicPoint.periodic(cycle, d).cycle_rotations()
    members = set(M)
    P = []
    for m in M:
        for s in range(d):
            p = m.prepend((s,))
            if p not in members and p not in P:
                P.append(p)
    rs = [R_star(p, table, A_star, m_star) for p in P]
    min_r = float(min(rs))
    witnesses = tuple((p, r) for p, r in zip(P, rs) if r <= delta)
    return RStarReport(min_r > delta, min_r, witnesses)
