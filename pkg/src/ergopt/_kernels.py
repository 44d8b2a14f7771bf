"""Hot loops, each with a numba implementation and a pure-numpy fallback.

Set ``ERGOPT_NO_JIT=1`` (or run without numba installed) to force the numpy
path.  Both paths take identical inputs: expressions arrive as flat postfix
programs (see :mod:`ergopt.expr`), packed per branch by :func:`pack_programs`.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .expr import (
    OP_ADD,
    OP_CONST,
    OP_COS,
    OP_DIV,
    OP_EXP,
    OP_LOG,
    OP_MUL,
    OP_NEG,
    OP_POW,
    OP_SIN,
    OP_SQRT,
    OP_SUB,
    OP_X,
)

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:  # pragma: no cover - exercised through the env flag
    import numba
except ImportError:  # pragma: no cover
    numba = None

JIT_ENABLED = numba is not None and os.environ.get("ERGOPT_NO_JIT", "").lower() not in (
    "1",
    "true",
    "yes",
)

__all__ = [
    "JIT_ENABLED",
    "pack_programs",
    "eval_program",
    "word_log_sums",
    "mane_search",
    "maxplus_table",
    "set_threads",
]


def set_threads(n: int | None) -> None:
    """Cap numba worker threads (no-op on the numpy path)."""
    if n and numba is not None:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def pack_programs(exprs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack postfix programs into padded arrays ``(codes, lengths, consts)``."""
    n = len(exprs)
    lmax = max(len(e.code) for e in exprs)
    cmax = max(len(e.consts) for e in exprs)
    codes = np.zeros((n, lmax, 2), dtype=np.int64)
    lens = np.zeros(n, dtype=np.int64)
    consts = np.zeros((n, cmax), dtype=np.float64)
    for i, e in enumerate(exprs):
        codes[i, : len(e.code)] = e.code
        lens[i] = len(e.code)
        consts[i, : len(e.consts)] = e.consts
    return codes, lens, consts


# ---------------------------------------------------------------- numpy path


def _rpn_numpy(code, n, consts, x):
    stack = []
    for k in range(n):
        op, arg = code[k]
        if op == OP_CONST:
            stack.append(np.full_like(x, consts[arg]))
        elif op == OP_X:
            stack.append(x)
        elif op == OP_NEG:
            stack.append(-stack.pop())
        elif op >= OP_EXP:
            a = stack.pop()
            with np.errstate(all="ignore"):
                if op == OP_EXP:
                    r = np.exp(a)
                elif op == OP_LOG:
                    r = np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), np.nan)
                elif op == OP_SIN:
                    r = np.sin(a)
                elif op == OP_COS:
                    r = np.cos(a)
                else:
                    r = np.where(a >= 0, np.sqrt(np.abs(a)), np.nan)
            stack.append(r)
        else:
            b = stack.pop()
            a = stack.pop()
            with np.errstate(all="ignore"):
                if op == OP_ADD:
                    r = a + b
                elif op == OP_SUB:
                    r = a - b
                elif op == OP_MUL:
                    r = a * b
                elif op == OP_DIV:
                    r = np.where(b != 0, a / np.where(b != 0, b, 1.0), np.nan)
                else:
                    r = np.power(a, b)
            stack.append(r)
    out = stack.pop()
    return np.where(np.isfinite(out), out, np.nan)


def _eval_program_np(code, n, consts, xs):
    return _rpn_numpy(code, n, consts, np.asarray(xs, dtype=np.float64))


def _word_log_sums_np(words, xs, bcodes, blens, bconsts, acode, alen, aconst, beta):
    k_words, depth = words.shape
    y = np.broadcast_to(xs, (k_words, xs.size)).copy()
    s = np.zeros_like(y)
    for j in range(depth):
        col = words[:, j]
        for b in range(bcodes.shape[0]):
            rows = col == b
            if rows.any():
                y[rows] = _rpn_numpy(bcodes[b], blens[b], bconsts[b], y[rows])
        s += beta * _rpn_numpy(acode, alen, aconst, y)
    return s, y


def _mane_search_np(x, y, eps, k_min, max_n, m, bcodes, blens, bconsts,
                    acode, alen, aconst, bound, budget):
    pts = np.array([y], dtype=np.float64)
    sums = np.zeros(1)
    best = -np.inf
    best_n = -1
    visited = 0
    truncated = False
    d = bcodes.shape[0]
    for n in range(1, max_n + 1):
        children_p = []
        children_s = []
        for b in range(d):
            q = _rpn_numpy(bcodes[b], blens[b], bconsts[b], pts)
            a = _rpn_numpy(acode, alen, aconst, q)
            children_p.append(q)
            children_s.append(sums + a - m)
        pts = np.concatenate(children_p)
        sums = np.concatenate(children_s)
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(sums))):
            return np.nan, -1, visited, truncated
        visited += pts.size
        if n >= k_min:
            hit = np.abs(pts - x) < eps
            if hit.any():
                cand = sums[hit].max()
                if cand > best:
                    best = cand
                    best_n = n
        if np.isfinite(best):
            keep = sums + bound * (max_n - n) > best
            pts = pts[keep]
            sums = sums[keep]
        if visited > budget:
            truncated = True
            break
        if pts.size == 0:
            break
    return best, best_n, visited, truncated


def _maxplus_table_np(values, pre, gains, anchor, tol, max_iter):
    v = values.copy()
    shift = 0.0
    res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        new = (v[pre] + gains).max(axis=1)
        shift = new[anchor]
        new -= shift
        res = np.abs(new - v).max()
        v = new
        if res <= tol:
            break
    return v, res, it, shift


# ---------------------------------------------------------------- numba path

if numba is not None:
    _njit = numba.njit(cache=True, fastmath=False)

    @_njit
    def _rpn_scalar(code, n, consts, x, stack):
        sp = 0
        for k in range(n):
            op = code[k, 0]
            if op == OP_CONST:
                stack[sp] = consts[code[k, 1]]
                sp += 1
            elif op == OP_X:
                stack[sp] = x
                sp += 1
            elif op == OP_NEG:
                stack[sp - 1] = -stack[sp - 1]
            elif op >= OP_EXP:
                a = stack[sp - 1]
                if op == OP_EXP:
                    r = math.exp(a) if a < 709.0 else np.inf
                elif op == OP_LOG:
                    r = math.log(a) if a > 0.0 else np.nan
                elif op == OP_SIN:
                    r = math.sin(a)
                elif op == OP_COS:
                    r = math.cos(a)
                else:
                    r = math.sqrt(a) if a >= 0.0 else np.nan
                stack[sp - 1] = r
            else:
                b = stack[sp - 1]
                a = stack[sp - 2]
                sp -= 1
                if op == OP_ADD:
                    r = a + b
                elif op == OP_SUB:
                    r = a - b
                elif op == OP_MUL:
                    r = a * b
                elif op == OP_DIV:
                    r = a / b if b != 0.0 else np.nan
                else:
                    if a < 0.0 and b != math.floor(b):
                        r = np.nan
                    elif a == 0.0 and b < 0.0:
                        r = np.nan
                    else:
                        r = a**b
                stack[sp - 1] = r
        out = stack[sp - 1]
        if not math.isfinite(out):
            return np.nan
        return out

    @_njit
    def _eval_program_jit(code, n, consts, xs):
        stack = np.empty(code.shape[0] + 1)
        out = np.empty(xs.size)
        for i in range(xs.size):
            out[i] = _rpn_scalar(code, n, consts, xs[i], stack)
        return out

    @numba.njit(cache=True, parallel=True)
    def _word_log_sums_jit(words, xs, bcodes, blens, bconsts, acode, alen, aconst, beta):
        k_words, depth = words.shape
        m = xs.size
        s = np.zeros((k_words, m))
        y = np.empty((k_words, m))
        lmax = max(bcodes.shape[1], acode.shape[0]) + 1
        for w in numba.prange(k_words):
            stack = np.empty(lmax)
            for i in range(m):
                p = xs[i]
                acc = 0.0
                for j in range(depth):
                    b = words[w, j]
                    p = _rpn_scalar(bcodes[b], blens[b], bconsts[b], p, stack)
                    acc += beta * _rpn_scalar(acode, alen, aconst, p, stack)
                s[w, i] = acc
                y[w, i] = p
        return s, y

    @_njit
    def _mane_search_jit(x, y, eps, k_min, max_n, m, bcodes, blens, bconsts,
                         acode, alen, aconst, bound, budget):
        # level-synchronous, mirroring the numpy path step for step
        d = bcodes.shape[0]
        stack = np.empty(max(bcodes.shape[1], acode.shape[0]) + 1)
        pts = np.full(1, y)
        sums = np.zeros(1)
        best = -np.inf
        best_n = -1
        visited = 0
        truncated = False
        for n in range(1, max_n + 1):
            size = pts.size
            cp = np.empty(size * d)
            cs = np.empty(size * d)
            finite = True
            for b in range(d):
                for i in range(size):
                    q = _rpn_scalar(bcodes[b], blens[b], bconsts[b], pts[i], stack)
                    s = sums[i] + _rpn_scalar(acode, alen, aconst, q, stack) - m
                    cp[b * size + i] = q
                    cs[b * size + i] = s
                    if not (math.isfinite(q) and math.isfinite(s)):
                        finite = False
            if not finite:
                return np.nan, -1, visited, truncated
            visited += size * d
            if n >= k_min:
                for i in range(size * d):
                    if abs(cp[i] - x) < eps and cs[i] > best:
                        best = cs[i]
                        best_n = n
            if math.isfinite(best):
                kept = 0
                slack = bound * (max_n - n)
                for i in range(size * d):
                    if cs[i] + slack > best:
                        cp[kept] = cp[i]
                        cs[kept] = cs[i]
                        kept += 1
                pts = cp[:kept].copy()
                sums = cs[:kept].copy()
            else:
                pts = cp
                sums = cs
            if visited > budget:
                truncated = True
                break
            if pts.size == 0:
                break
        return best, best_n, visited, truncated

    @_njit
    def _maxplus_table_jit(values, pre, gains, anchor, tol, max_iter):
        v = values.copy()
        new = np.empty_like(v)
        nw, d = pre.shape
        shift = 0.0
        res = np.inf
        it = 0
        for it in range(1, max_iter + 1):
            for w in range(nw):
                best = -np.inf
                for s in range(d):
                    c = v[pre[w, s]] + gains[w, s]
                    if c > best:
                        best = c
                new[w] = best
            shift = new[anchor]
            res = 0.0
            for w in range(nw):
                new[w] -= shift
                r = abs(new[w] - v[w])
                if r > res:
                    res = r
            v[:] = new
            if res <= tol:
                break
        return v, res, it, shift


# ---------------------------------------------------------------- dispatch


def eval_program(code, n, consts, xs, jit: bool | None = None) -> np.ndarray:
    """Evaluate one postfix program on an array; NaN marks a domain error."""
    xs = np.ascontiguousarray(xs, dtype=np.float64).ravel()
    if JIT_ENABLED if jit is None else jit:
        return _eval_program_jit(code, n, consts, xs)
    return _eval_program_np(code, n, consts, xs)


def word_log_sums(words, xs, branches, potential, beta, jit: bool | None = None):
    """Accumulate ``beta * sum_j A(psi_{gamma_j}(x))`` over prefixes of each word.

    Parameters
    ----------
    words : (K, k) int array
        One word per row, first symbol applied innermost.
    xs : (M,) array
        Evaluation points.
    branches, potential
        Packed programs from :func:`pack_programs` (potential packs a single
        program ``A = log g``).
    beta : float

    Returns
    -------
    sums : (K, M) array
        ``log htilde_gamma(x)``.
    ends : (K, M) array
        ``psi_gamma(x)``.
    """
    words = np.ascontiguousarray(words, dtype=np.int64)
    if words.ndim == 1:
        words = words[None, :]
    xs = np.ascontiguousarray(xs, dtype=np.float64).ravel()
    bc, bl, bk = branches
    ac, al, ak = potential
    if JIT_ENABLED if jit is None else jit:
        return _word_log_sums_jit(words, xs, bc, bl, bk, ac[0], al[0], ak[0], float(beta))
    return _word_log_sums_np(words, xs, bc, bl, bk, ac[0], al[0], ak[0], float(beta))


def mane_search(x, y, eps, k_min, max_n, m, branches, potential, bound, budget,
                jit: bool | None = None):
    """Branch-and-bound sup of chain sums over backward chains from ``y`` ending near ``x``.

    Returns ``(best, best_len, nodes_visited, truncated)``; ``best`` is
    ``-inf`` when no admissible chain exists and NaN on a domain error.
    """
    bc, bl, bk = branches
    ac, al, ak = potential
    args = (float(x), float(y), float(eps), int(k_min), int(max_n), float(m),
            bc, bl, bk, ac[0], al[0], ak[0], float(bound), int(budget))
    if JIT_ENABLED if jit is None else jit:
        return _mane_search_jit(*args)
    return _mane_search_np(*args)


def maxplus_table(values, pre, gains, anchor, tol, max_iter, jit: bool | None = None):
    """Iterate ``V(w) <- max_s V(pre[w, s]) + gains[w, s]`` renormalised at ``anchor``.

    Returns ``(V, residual, iterations, last_shift)``.
    """
    args = (np.ascontiguousarray(values, dtype=np.float64),
            np.ascontiguousarray(pre, dtype=np.int64),
            np.ascontiguousarray(gains, dtype=np.float64),
            int(anchor), float(tol), int(max_iter))
    if JIT_ENABLED if jit is None else jit:
        return _maxplus_table_jit(*args)
    return _maxplus_table_np(*args)
