"""Transfer operator for ``beta * A``, its leading eigendata, and Gibbs measures.

Functions on ``[0, 1]`` live on Chebyshev-Lobatto nodes and are evaluated by
barycentric interpolation.  Every beta-dependent quantity that involves
products along words is carried in log space.

Two representations of the eigenmeasure ``mu~`` coexist:

* ``EigenData.mu_weights``: signed quadrature weights obtained by iterating the
  adjoint action on Clenshaw-Curtis weights.
* ``log mu~(e^u)`` as the limit of ``log P^n e^u - log P^n 1``, iterated in
  log space.  Needs a spectral gap but no weights.

:meth:`TransferOperator.log_mu` picks quadrature when it is well conditioned
and falls back to the iteration otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .dynamics import ExpandingMapSpec, all_words
from .expr import Expression, ExpressionDomainError
from .symbolic import Word

__all__ = [
    "EigenConvergenceError",
    "SpectralGapError",
    "DepthCapError",
    "MassUnderflowError",
    "GridFunction",
    "PotentialSpec",
    "EigenData",
    "TransferOperator",
    "lobatto_nodes",
    "barycentric_weights",
    "clenshaw_curtis_weights",
    "interpolation_matrix",
    "cylinder_mass",
    "log_cylinder_mass",
    "word_measure",
    "spectral_projection_rho",
]

MAX_WORDS = 2**16


class EigenConvergenceError(RuntimeError):
    """Power iteration did not reach the requested tolerance."""

    def __init__(self, message: str, residual: float, iterations: int, rate: float = np.nan):
        self.residual = residual
        self.iterations = iterations
        self.rate = rate
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")


class SpectralGapError(EigenConvergenceError):
    """Contraction rate of the iteration is indistinguishable from 1."""


class DepthCapError(ValueError):
    """Requested word depth exceeds the enumeration budget."""


class MassUnderflowError(ArithmeticError):
    """A cylinder mass is below the double range; ``log_mass`` holds its logarithm."""

    def __init__(self, log_mass: float):
        self.log_mass = log_mass
        super().__init__(f"cylinder mass underflows (log mass {log_mass:.6g})")


# ------------------------------------------------------------ chebyshev tools


@lru_cache(maxsize=None)
def _lobatto(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    theta = np.pi * np.arange(n) / (n - 1)
    x = (1.0 - np.cos(theta)) / 2.0
    x[0], x[-1] = 0.0, 1.0
    if n % 2:
        x[n // 2] = 0.5
    bw = np.ones(n)
    bw[1::2] = -1.0
    bw[0] *= 0.5
    bw[-1] *= 0.5
    # Clenshaw-Curtis weights for the same nodes, rescaled to [0, 1]
    m = n - 1
    w = np.zeros(n)
    v = np.ones(m - 1)
    inner = theta[1:-1]
    if m % 2 == 0:
        w[0] = w[-1] = 1.0 / (m * m - 1)
        for k in range(1, m // 2):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k * k - 1)
        v -= np.cos(m * inner) / (m * m - 1)
    else:
        w[0] = w[-1] = 1.0 / (m * m)
        for k in range(1, (m - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k * k - 1)
    w[1:-1] = 2.0 * v / m
    for arr in (x, bw, w):
        arr.flags.writeable = False
    return x, bw, w / 2.0


def lobatto_nodes(n: int) -> np.ndarray:
    """Chebyshev-Lobatto points on ``[0, 1]`` in increasing order."""
    if n < 8:
        raise ValueError("grid size must be at least 8")
    return _lobatto(n)[0]


def barycentric_weights(n: int) -> np.ndarray:
    return _lobatto(n)[1]


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Quadrature weights on ``[0, 1]`` for :func:`lobatto_nodes` (sum to 1)."""
    return _lobatto(n)[2]


def interpolation_matrix(n: int, pts) -> np.ndarray:
    """Matrix mapping node values to barycentric interpolants at ``pts``."""
    x, bw, _ = _lobatto(n)
    pts = np.asarray(pts, dtype=np.float64).ravel()
    diff = pts[:, None] - x[None, :]
    # within a few ulps of a node the weights overflow; snap to the node
    exact = np.abs(diff) <= 4 * np.finfo(np.float64).eps
    first = exact & (np.cumsum(exact, axis=1) == 1)
    diff[exact] = 1.0
    c = bw / diff
    mat = c / c.sum(axis=1, keepdims=True)
    rows, cols = np.nonzero(first)
    mat[rows] = 0.0
    mat[rows, cols] = 1.0
    return mat


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values of a function at ``len(values)`` Chebyshev-Lobatto nodes on ``[0, 1]``.

    Calling the object interpolates barycentrically; at a node it returns the
    stored value exactly.
    """

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size < 8:
            raise ValueError("need a 1-d array of at least 8 node values")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, f: Callable, n: int = 128) -> "GridFunction":
        return cls(np.asarray(f(lobatto_nodes(n)), dtype=np.float64))

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def nodes(self) -> np.ndarray:
        return lobatto_nodes(self.n)

    def __call__(self, x):
        arr = np.asarray(x, dtype=np.float64)
        out = interpolation_matrix(self.n, arr) @ self.values
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.values - other.values)

    def shifted(self, c: float) -> "GridFunction":
        return GridFunction(self.values + c)


# ------------------------------------------------------------------ potential


class PotentialSpec:
    """Positive potential ``g`` or its logarithm ``A = log g``.

    Exactly one of ``g`` and ``A`` must be supplied.
    """

    def __init__(self, g: Expression | str | None = None, A: Expression | str | None = None):
        if (g is None) == (A is None):
            raise ValueError("give exactly one of g and A")
        self.g_expr = None if g is None else (g if isinstance(g, Expression) else Expression(g))
        if A is not None:
            self.A_expr = A if isinstance(A, Expression) else Expression(A)
        else:
            self.A_expr = Expression(f"log({self.g_expr.source})")
        self.program = _kernels.pack_programs([self.A_expr])

    def validate(self, samples: int = 1024) -> float:
        """Check positivity of ``g`` (finiteness of ``A``) on a sample; return ``min g``."""
        xs = np.linspace(0.0, 1.0, samples)
        if self.g_expr is not None:
            gv = self.g_expr(xs)
            if np.min(gv) <= 0.0:
                raise ExpressionDomainError(f"g is not positive (min {np.min(gv):.6g})")
            return float(np.min(gv))
        return float(np.exp(np.min(self.A_expr(xs))))

    def A(self, x):
        """``log g(x)``; raises if ``g <= 0`` at a required point."""
        return self.A_expr(x)

    def g(self, x):
        return np.exp(self.A(x))

    @property
    def is_constant(self) -> bool:
        return self.A_expr.is_constant

    def lipschitz(self, samples: int = 4097) -> float:
        """Sampled Lipschitz constant of ``A`` (one-sided at the ends)."""
        xs = np.linspace(0.0, 1.0, samples)
        a = self.A(xs)
        return float(np.max(np.abs(np.diff(a)) / np.diff(xs)))

    def __repr__(self) -> str:
        src = f"g={self.g_expr.source!r}" if self.g_expr is not None else f"A={self.A_expr.source!r}"
        return f"PotentialSpec({src})"


# ------------------------------------------------------------------ eigendata


@dataclass(frozen=True, eq=False)
class EigenData:
    """Leading eigen-triple of the transfer operator at inverse temperature ``beta``.

    Attributes
    ----------
    alpha, log_alpha : float
        Leading eigenvalue.
    v, log_v : GridFunction
        Eigenfunction normalised so that ``mu~(v) = 1``.
    mu_weights : ndarray
        Signed quadrature weights of ``mu~`` (sum 1).
    residual : float
        Sup-norm change of ``log v`` at the last iteration.
    mu_v_defect : float
        ``|sum(mu_weights * v) - 1|``, the cross-check between both routes.
    """

    beta: float
    alpha: float
    log_alpha: float
    v: GridFunction
    log_v: GridFunction
    mu_weights: np.ndarray
    iterations: int
    residual: float
    mu_residual: float
    mu_v_defect: float
    operator: "TransferOperator" = field(repr=False)


class TransferOperator:
    """Ruelle operator ``(P q)(x) = sum_i g(psi_i x)^beta q(psi_i x)`` on a node grid.

    Parameters
    ----------
    fmap : ExpandingMapSpec
    potential : PotentialSpec
    n : int
        Number of Chebyshev-Lobatto nodes.
    """

    def __init__(self, fmap: ExpandingMapSpec, potential: PotentialSpec, n: int = 128):
        self.map = fmap
        self.potential = potential
        self.n = int(n)
        self.nodes = lobatto_nodes(self.n)
        self.cc_weights = clenshaw_curtis_weights(self.n)
        self.images = np.array([b(self.nodes) for b in fmap.branches])
        self.A_images = potential.A(self.images)
        self.L = np.array([interpolation_matrix(self.n, im) for im in self.images])
        self._eig: dict[float, EigenData] = {}

    # -- basic action -------------------------------------------------------

    def transfer_apply(self, q, beta: float) -> GridFunction:
        vals = q.values if isinstance(q, GridFunction) else np.asarray(q, dtype=np.float64)
        out = np.zeros(self.n)
        for b in range(self.map.d):
            out += np.exp(beta * self.A_images[b]) * (self.L[b] @ vals)
        return GridFunction(out)

    def _log_step(self, U: np.ndarray, beta: float) -> np.ndarray:
        # U: (n, K) log-values; returns log of the transfer of e^U
        T = np.stack([beta * self.A_images[b][:, None] + self.L[b] @ U for b in range(self.map.d)])
        return logsumexp(T, axis=0)

    # -- eigendata ----------------------------------------------------------

    def leading_eigen(self, beta: float, tol: float = 1e-13, max_iter: int = 5000) -> EigenData:
        """Leading eigen-triple by log-space power iteration from ``v0 = 1``.

        Raises
        ------
        SpectralGapError
            The observed contraction rate is within 1e-3 of 1.
        EigenConvergenceError
            No convergence within ``max_iter``.
        """
        beta = float(beta)
        key = (beta, tol)
        if key in self._eig:
            return self._eig[key]
        u = np.zeros((self.n, 1))
        shifts = []
        diffs = []
        it = 0
        converged = False
        for it in range(1, max_iter + 1):
            new = self._log_step(u, beta)
            s = float(new.max())
            new -= s
            diffs.append(float(np.abs(new - u).max()))
            shifts.append(s)
            u = new
            if it > 2 and diffs[-1] <= tol:
                converged = True
                break
        if not converged:
            tail = np.array(diffs[-min(200, len(diffs)):])
            rate = float(np.exp(np.mean(np.diff(np.log(np.maximum(tail, 1e-300))))))
            cls = SpectralGapError if rate > 0.999 else EigenConvergenceError
            raise cls(
                f"power iteration at beta={beta} did not converge (rate {rate:.4f})",
                diffs[-1], it, rate,
            )
        log_alpha = shifts[-1]
        log_v = u[:, 0] + float(np.sum(np.array(shifts) - log_alpha))
        w, mu_res = self._adjoint_weights(beta, log_alpha, tol, max_iter)
        v = np.exp(log_v)
        total = float(w @ v)
        defect = abs(total - 1.0)
        if total > 0 and float(np.abs(w) @ v) <= 2.0 * total:
            # enforce mu~(v) = 1 against the weights last
            log_v = log_v - np.log(total)
            v = np.exp(log_v)
        eig = EigenData(
            beta=beta,
            alpha=float(np.exp(log_alpha)),
            log_alpha=log_alpha,
            v=GridFunction(v),
            log_v=GridFunction(log_v),
            mu_weights=w,
            iterations=it,
            residual=diffs[-1],
            mu_residual=mu_res,
            mu_v_defect=defect,
            operator=self,
        )
        self._eig[key] = eig
        return eig

    def _adjoint_weights(self, beta, log_alpha, tol, max_iter):
        c = beta * self.A_images.max()
        E = np.exp(beta * self.A_images - c)
        w = self.cc_weights.copy()
        res = np.inf
        for _ in range(max_iter):
            new = sum(self.L[b].T @ (E[b] * w) for b in range(self.map.d))
            new /= new.sum()
            res = float(np.abs(new - w).sum())
            w = new
            if res <= tol:
                break
        w.flags.writeable = False
        return w, res

    # -- integrals against mu~ ----------------------------------------------

    def log_mu(self, U, eig: EigenData, method: str = "auto", tol: float = 1e-13,
               max_iter: int = 5000) -> np.ndarray:
        """``log mu~(e^u)`` for each column ``u`` of ``U`` (values at nodes).

        Parameters
        ----------
        method : {"auto", "quadrature", "iterate"}
            ``quadrature`` sums against the signed weights; ``iterate`` takes
            the limit of ``log P^n e^u - log P^n 1``.  ``auto`` uses quadrature
            for columns whose cancellation ratio ``sum |w| e^u / sum w e^u`` is
            below 2 and iterates the rest.
        """
        U = np.asarray(U, dtype=np.float64)
        single = U.ndim == 1
        if single:
            U = U[:, None]
        out = np.empty(U.shape[1])
        todo = np.arange(U.shape[1])
        if method in ("auto", "quadrature"):
            off = U.max(axis=0)
            E = np.exp(U - off)
            w = eig.mu_weights
            tot = w @ E
            ratio = (np.abs(w) @ E) / np.where(tot > 0, tot, np.nan)
            good = np.isfinite(ratio) & (ratio <= 2.0)
            if method == "quadrature" and not good.all():
                raise EigenConvergenceError("signed quadrature is ill-conditioned",
                                            float(np.nanmax(ratio)), 0)
            out[good] = np.log(tot[good]) + off[good]
            todo = np.flatnonzero(~good)
        if todo.size:
            out[todo] = self._log_mu_iterate(U[:, todo], eig.beta, tol, max_iter)
        return out[0] if single else out

    def _log_mu_iterate(self, U, beta, tol, max_iter):
        k = U.shape[1]
        off = U.max(axis=0)
        W = np.concatenate([U - off, np.zeros((self.n, 1))], axis=1)
        offs = np.zeros(k + 1)
        spread = np.full(k, np.inf)
        for _ in range(max_iter):
            W = self._log_step(W, beta)
            mx = W.max(axis=0)
            W -= mx
            offs += mx
            D = W[:, :k] - W[:, k:] + (offs[:k] - offs[k])
            spread = D.max(axis=0) - D.min(axis=0)
            if np.all(spread <= tol * np.maximum(1.0, np.abs(D).max(axis=0))):
                return 0.5 * (D.max(axis=0) + D.min(axis=0)) + off
        raise EigenConvergenceError("log-integral iteration did not settle",
                                    float(spread.max()), max_iter)

    def mu_quadrature(self, values, eig: EigenData) -> np.ndarray:
        """``mu~(q)`` with the signed weights; ``values`` has nodes along axis -1."""
        return np.asarray(values) @ eig.mu_weights

    # -- words --------------------------------------------------------------

    def log_htilde(self, words, pts, beta: float) -> tuple[np.ndarray, np.ndarray]:
        """``log htilde_gamma(pts)`` and ``psi_gamma(pts)`` for each word row."""
        s, y = _kernels.word_log_sums(words, pts, self.map.programs, self.potential.program, beta)
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(y))):
            raise ExpressionDomainError("potential or branch left its domain along a word")
        return s, y

    def log_cylinder_masses(self, words, eig: EigenData) -> np.ndarray:
        """``log mu~(I_gamma)`` for each word row (depth ``k`` = number of columns)."""
        words = _as_words(words)
        k = words.shape[1]
        if k == 0:
            return np.zeros(words.shape[0])
        s, _ = self.log_htilde(words, self.nodes, eig.beta)
        return -k * eig.log_alpha + self.log_mu(s.T, eig)

    def log_word_measures(self, words, eig: EigenData) -> np.ndarray:
        """``log mu(C_gamma) = log of the integral of v over I_gamma``."""
        words = _as_words(words)
        k = words.shape[1]
        if k == 0:
            return np.zeros(words.shape[0])
        s, y = self.log_htilde(words, self.nodes, eig.beta)
        lv = eig.log_v(y)
        return -k * eig.log_alpha + self.log_mu((s + lv).T, eig)

    def eigen(self, beta: float) -> EigenData:
        return self.leading_eigen(beta)


def _as_words(words) -> np.ndarray:
    if isinstance(words, Word):
        return np.array([words.symbols], dtype=np.int64).reshape(1, -1)
    arr = np.asarray(words, dtype=np.int64)
    return arr.reshape(1, -1) if arr.ndim == 1 else arr


def log_cylinder_mass(gamma, eig: EigenData) -> float:
    """``log mu~(I_gamma)``."""
    return float(eig.operator.log_cylinder_masses(gamma, eig)[0])


def cylinder_mass(gamma, eig: EigenData) -> float:
    """``mu~(I_gamma)``; raises :class:`MassUnderflowError` below ``1e-300``."""
    lm = log_cylinder_mass(gamma, eig)
    if lm < np.log(1e-300):
        raise MassUnderflowError(lm)
    return float(np.exp(lm))


def word_measure(gamma, eig: EigenData) -> float:
    """Gibbs measure ``mu(C_gamma)`` of the symbolic cylinder."""
    lm = float(eig.operator.log_word_measures(gamma, eig)[0])
    if lm < np.log(1e-300):
        raise MassUnderflowError(lm)
    return float(np.exp(lm))


def spectral_projection_rho(z, k: int, x, eig: EigenData):
    """Finite-depth projection ``rho^k(x) = sum_gamma h_gamma(x) * integral of z over I_gamma``.

    Parameters
    ----------
    z : GridFunction or callable
    k : int
        Word depth; ``d**k`` may not exceed 65536.
    x : float or array
    eig : EigenData
    """
    op = eig.operator
    d = op.map.d
    if d**k > MAX_WORDS:
        raise DepthCapError(f"{d}**{k} words exceed the cap of {MAX_WORDS}")
    words = all_words(d, k)
    s_nodes, y_nodes = op.log_htilde(words, op.nodes, eig.beta)
    zy = z(y_nodes)
    scale = s_nodes.max(axis=1, keepdims=True)
    e = np.exp(s_nodes - scale)
    # conditional average of z over each cylinder with respect to mu~
    cond = (e * zy) @ eig.mu_weights / (e @ eig.mu_weights)
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    s_x, _ = op.log_htilde(words, xs, eig.beta)
    rho = np.exp(s_x - k * eig.log_alpha).T @ cond
    return float(rho[0]) if np.ndim(x) == 0 else rho


def log_eigenfunction_scaled(op: TransferOperator, beta: float,
                             anchor: float | None = None) -> GridFunction:
    """``(1/beta) log v_beta`` with ``mu~(v_beta) = 1``; shifted to vanish at ``anchor`` if given."""
    if beta < 1:
        raise ValueError("beta must be >= 1")
    eig = op.leading_eigen(beta)
    vals = eig.log_v.values / beta
    if anchor is not None:
        vals = vals - eig.log_v(anchor) / beta
    return GridFunction(vals)
