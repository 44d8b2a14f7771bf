"""Full-branch expanding interval maps given by their inverse branches.

Composition convention: for a word ``gamma = (i1, ..., ik)`` the map
``psi_gamma = psi_ik o ... o psi_i1``, i.e. the *first* symbol is applied
first (innermost).  A point of the cylinder ``psi_gamma([0, 1])`` therefore has
forward itinerary ``ik, i(k-1), ..., i1``: the word read right to left.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .expr import Expression, ExpressionDomainError
from .symbolic import Word, lyndon_words

__all__ = [
    "MapSpecError",
    "ExpandingMapSpec",
    "PeriodicOrbit",
]


class MapSpecError(ValueError):
    """The inverse branches do not describe a full-branch expanding map."""


@dataclass(frozen=True)
class PeriodicOrbit:
    """A periodic orbit found from a primitive word.

    Attributes
    ----------
    itinerary : Word
        Primitive (Lyndon) word ``gamma`` with ``psi_gamma(points[0]) == points[0]``.
    points : tuple of float
        ``points[j] = f^j(points[0])``.
    average : float
        Birkhoff average of the potential used for the enumeration.
    """

    itinerary: Word
    points: tuple[float, ...]
    average: float = float("nan")

    @property
    def period(self) -> int:
        return len(self.itinerary)


@dataclass(frozen=True, eq=False)
class ExpandingMapSpec:
    """Full-branch expanding map ``f`` on ``[0, 1]`` via inverse branches.

    Parameters
    ----------
    branches : sequence of Expression or str
        ``psi_0, ..., psi_{d-1}``; the images ``psi_i([0, 1])`` must tile
        ``[0, 1]`` from left to right.
    lam : float
        Declared contraction bound on ``|psi_i'|``.
    orientation : {"preserving", "reversing"}
    """

    branches: tuple[Expression, ...]
    lam: float
    orientation: str = "preserving"
    intervals: np.ndarray = field(init=False, repr=False)
    programs: tuple = field(init=False, repr=False)

    def __init__(self, branches: Sequence[Expression | str], lam: float,
                 orientation: str = "preserving"):
        exprs = tuple(b if isinstance(b, Expression) else Expression(b) for b in branches)
        if len(exprs) < 2:
            raise MapSpecError("need at least two inverse branches")
        if not 0.0 < lam < 1.0:
            raise MapSpecError("contraction bound must lie in (0, 1)")
        if orientation not in ("preserving", "reversing"):
            raise MapSpecError(f"unknown orientation {orientation!r}")
        object.__setattr__(self, "branches", exprs)
        object.__setattr__(self, "lam", float(lam))
        object.__setattr__(self, "orientation", orientation)
        try:
            ends = np.array([[e(0.0), e(1.0)] for e in exprs])
        except ExpressionDomainError as exc:
            raise MapSpecError(f"branch not defined on [0, 1]: {exc}") from exc
        iv = np.sort(ends, axis=1)
        tol = 1e-12
        if abs(iv[0, 0]) > tol or abs(iv[-1, 1] - 1.0) > tol or np.any(
            np.abs(iv[1:, 0] - iv[:-1, 1]) > tol
        ):
            raise MapSpecError(f"branch images {iv.tolist()} do not tile [0, 1] left to right")
        increasing = ends[:, 1] > ends[:, 0]
        want = orientation == "preserving"
        if np.any(increasing != want):
            raise MapSpecError(f"branch monotonicity disagrees with orientation {orientation!r}")
        object.__setattr__(self, "intervals", iv)
        object.__setattr__(self, "programs", _kernels.pack_programs(exprs))

    @property
    def d(self) -> int:
        return len(self.branches)

    def _word(self, gamma) -> tuple[int, ...]:
        syms = tuple(gamma.symbols if isinstance(gamma, Word) else gamma)
        for s in syms:
            if not 0 <= s < self.d:
                raise ValueError(f"symbol {s} out of range for {self.d} branches")
        return syms

    def inverse_branch_apply(self, gamma, x):
        """``psi_gamma(x)`` with the first symbol innermost."""
        y = np.asarray(x, dtype=np.float64)
        for s in self._word(gamma):
            y = self.branches[s](y)
        return float(y) if np.ndim(y) == 0 else y

    def symbol_of(self, x: float) -> int:
        """Index ``i`` with ``x`` in ``I_i``; intervals are half-open on the right except the last."""
        for i in range(self.d - 1):
            if x < self.intervals[i, 1]:
                return i
        return self.d - 1

    def forward_step(self, x: float) -> tuple[float, int]:
        """Return ``(f(x), symbol)`` by bracketed root finding on the branch."""
        if not 0.0 <= x <= 1.0:
            raise ValueError("x must lie in [0, 1]")
        s = self.symbol_of(x)
        psi = self.branches[s]
        lo, hi = psi(0.0) - x, psi(1.0) - x
        if lo == 0.0:
            return 0.0, s
        if hi == 0.0:
            return 1.0, s
        if lo * hi > 0:
            # endpoint rounding; pick the closer end
            if min(abs(lo), abs(hi)) > 1e-12:
                raise MapSpecError(f"cannot bracket preimage of {x} on branch {s}")
            return (0.0 if abs(lo) < abs(hi) else 1.0), s
        fx = brentq(lambda t: psi(t) - x, 0.0, 1.0, xtol=1e-16, rtol=8.9e-16, maxiter=200)
        return float(fx), s

    def cylinder_interval(self, gamma) -> tuple[float, float]:
        a = self.inverse_branch_apply(gamma, 0.0)
        b = self.inverse_branch_apply(gamma, 1.0)
        return (a, b) if a <= b else (b, a)

    def periodic_point_from_word(self, gamma) -> float:
        """Unique fixed point of the contraction ``psi_gamma``."""
        syms = self._word(gamma)
        if not syms:
            raise ValueError("word must be nonempty")
        g = lambda t: self.inverse_branch_apply(syms, t) - t  # noqa: E731
        if g(0.0) == 0.0:
            return 0.0
        if g(1.0) == 0.0:
            return 1.0
        x = brentq(g, 0.0, 1.0, xtol=1e-16, rtol=8.9e-16, maxiter=500)
        for _ in range(3):
            x = self.inverse_branch_apply(syms, x)
        return float(x)

    def orbit_points(self, gamma) -> tuple[float, ...]:
        """Forward orbit ``x*, f(x*), ...`` of the fixed point of ``psi_gamma``."""
        syms = self._word(gamma)
        x = self.periodic_point_from_word(syms)
        q = [x]
        for s in syms[:-1]:
            q.append(self.branches[s](q[-1]))
        # q[i] = psi_{gamma[:i]}(x) = f^{k-i}(x)
        return (x,) + tuple(reversed(q[1:]))

    def enumerate_periodic_orbits(self, max_period: int,
                                  potential: Callable | None = None) -> list[PeriodicOrbit]:
        """One orbit per primitive necklace of length at most ``max_period``.

        Sorted by Birkhoff average of ``potential`` (descending), ties broken
        by period and then by the Lyndon word.
        """
        if max_period < 1:
            raise ValueError("max_period must be >= 1")
        orbits = []
        for lw in lyndon_words(self.d, max_period):
            pts = self.orbit_points(lw)
            avg = float(np.mean(potential(np.array(pts)))) if potential is not None else float("nan")
            orbits.append(PeriodicOrbit(Word(lw, self.d), pts, avg))
        if potential is not None:
            orbits.sort(key=lambda o: (-o.average, o.period, o.itinerary.symbols))
        else:
            orbits.sort(key=lambda o: (o.period, o.itinerary.symbols))
        return orbits

    def contraction_audit(self, samples: int = 1025) -> tuple[float, bool]:
        """Largest sampled ``|psi_i'|`` by central differences, and whether it respects ``lam``."""
        if samples < 2:
            raise ValueError("samples must be >= 2")
        x = np.linspace(0.0, 1.0, samples)
        h = 1e-6
        lo = np.clip(x - h, 0.0, 1.0)
        hi = np.clip(x + h, 0.0, 1.0)
        lam_emp = 0.0
        for psi in self.branches:
            lam_emp = max(lam_emp, float(np.max(np.abs(psi(hi) - psi(lo)) / (hi - lo))))
        return lam_emp, lam_emp <= self.lam + 1e-6

    def cylinder_partition(self, k: int) -> np.ndarray:
        """Intervals of all ``d**k`` cylinders of depth ``k``, words in lexicographic order."""
        words = all_words(self.d, k)
        ends = np.empty((len(words), 2))
        zero = _kernels.pack_programs([Expression("0")])
        _, y = _kernels.word_log_sums(words, np.array([0.0, 1.0]), self.programs, zero, 0.0)
        ends[:] = np.sort(y, axis=1)
        return ends


def all_words(d: int, k: int) -> np.ndarray:
    """All words of length ``k`` over ``d`` symbols as rows, lexicographic order."""
    if k == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grid = np.indices((d,) * k).reshape(k, -1).T
    return np.ascontiguousarray(grid, dtype=np.int64)
