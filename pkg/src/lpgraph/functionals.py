"""Gradient, Laplacian, square functionals, maximal operators and the
quantities built from ``u_n = P^n f`` for nonnegative ``f``.

Functions accept a single function (shape ``(n,)``) or a batch of them as
columns (shape ``(n, k)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, InvariantViolation, PreconditionError
from .graph import WeightedGraph, check_LB, gradient_sq
from .kernel import markov_matrix
from .series import iter_coeffs
from .spectral import decompose, dense_limit, fractional_power, l2_norm, mean, project_mean_zero

DEFAULT_L_MAX = 200_000


def lp_norm(g_or_m, f, p: float):
    """m-weighted ``L^p`` norm, ``0 < p <= inf`` (per column)."""
    m = g_or_m.m if hasattr(g_or_m, "m") else np.asarray(g_or_m)
    a = np.abs(np.asarray(f, dtype=np.float64))
    if p == math.inf:
        return a.max(axis=0)
    if p <= 0:
        raise ValueError("p must be positive")
    return (m @ a ** p) ** (1.0 / p)


def gradient(g: WeightedGraph, f) -> np.ndarray:
    """``grad f(x) = (1/2 sum_y (mu_xy/m(x)) (f(y) - f(x))^2)^(1/2)``."""
    return np.sqrt(gradient_sq(g, f))


def laplacian(g: WeightedGraph, f) -> np.ndarray:
    """``Delta f = f - P f``."""
    f = np.asarray(f, dtype=np.float64)
    return f - markov_matrix(g) @ f


def dirichlet_form(g: WeightedGraph, f) -> np.ndarray | float:
    """``<(I - P) f, f>`` in the m-weighted inner product."""
    f = np.asarray(f, dtype=np.float64)
    return g.m @ (laplacian(g, f) * f)


@dataclass
class SquareFunction:
    """Pointwise truncated square functional.

    ``values`` holds the square root of the partial sum over ``l <= terms``.
    ``tail`` bounds ``||(sum_{l > terms} ...)^(1/2)||_2`` per column, so the
    exact L2 norm lies in ``[||values||_2, ||values||_2 + tail]``.
    """

    values: np.ndarray = field(repr=False)
    tail: np.ndarray | float
    terms: int


class _Kahan:
    def __init__(self, shape):
        self.s = np.zeros(shape)
        self.c = np.zeros(shape)

    def add(self, x):
        y = x - self.c
        t = self.s + y
        self.c = (t - self.s) - y
        self.s = t


def _accumulate(g, h, weight, term, rho, tail_factor, tol, L, L_max):
    """Sum ``weight(l) * term(P^(l-1) h)`` for ``l = 1, 2, ...``.

    The tail is bounded by ``sum_{l>L} tail_factor * weight(l) rho^(2(l-1)) ||h||^2``
    using the ratio test: successive term ratios are at most ``q(L)``,
    which is nonincreasing in ``L``.
    """
    P = markov_matrix(g)
    hn2 = l2_norm(g.m, project_mean_zero(g, h)) ** 2
    hn2_max = float(np.max(hn2)) if np.size(hn2) else 0.0
    acc = _Kahan(h.shape)
    u = h
    l = 0
    limit = L if L is not None else L_max

    def tail_after(L_):
        if hn2_max == 0.0:
            return 0.0
        if rho == 0.0:
            return 0.0
        w1 = weight(L_ + 1)
        ratio = rho * rho * max(1.0, weight(L_ + 2) / w1)
        if ratio >= 1.0:
            return math.inf
        t1 = tail_factor * w1 * rho ** (2 * L_)
        return t1 / (1.0 - ratio)

    while l < limit:
        l += 1
        acc.add(weight(l) * term(u))
        if L is None and l % 8 == 0 and tail_after(l) * hn2_max < tol * tol:
            break
        u = P @ u
    tail = tail_after(l)
    if L is None and tail * hn2_max >= tol * tol:
        raise ConvergenceError(f"square-function tail not certified below {tol} within {L_max} terms")
    return SquareFunction(values=np.sqrt(np.maximum(acc.s, 0.0)), tail=np.sqrt(tail * hn2),
                          terms=l)


def _rho(g, rho):
    if rho is not None:
        return float(rho)
    r = decompose(g).rho
    if r >= 1.0 - 1e-12:
        raise ConvergenceError("mean-zero spectral radius is 1; tails cannot be certified "
                               "(is (LB) violated?)")
    return r


def g_beta(g: WeightedGraph, f, beta: float, *, tol: float = 1e-10, L: int | None = None,
           L_max: int = DEFAULT_L_MAX, route: str = "spectral", rho: float | None = None
           ) -> SquareFunction:
    """``g_beta f = (sum_{l>=1} l^(2 beta - 1) |(I-P)^beta P^(l-1) f|^2)^(1/2)``, ``beta > 0``.

    ``(I-P)^beta f`` is formed once by ``route`` and then iterated with ``P``.
    Without ``L`` the sum runs until its certified L2 tail is below ``tol``.
    """
    if beta <= 0:
        raise PreconditionError("g_beta needs beta > 0")
    rho = _rho(g, rho)
    h = fractional_power(g, beta, np.asarray(f, dtype=np.float64), route=route, tol=tol * 1e-2)
    return _accumulate(g, h, lambda l: float(l) ** (2 * beta - 1), lambda u: u * u,
                       rho, 1.0, tol, L, L_max)


def g_tilde_beta(g: WeightedGraph, f, beta: float, *, tol: float = 1e-10, L: int | None = None,
                 L_max: int = DEFAULT_L_MAX, route: str = "spectral", rho: float | None = None
                 ) -> SquareFunction:
    """``(sum_{l>=1} l^(2 beta) |grad (I-P)^beta P^(l-1) f|^2)^(1/2)``, ``beta > -1/2``.

    For ``beta < 0`` the input is projected to mean zero first.  The tail
    uses ``||grad u||_2^2 = <(I-P)u, u> <= (1 - lambda_min) ||u||_2^2``.
    """
    if beta <= -0.5:
        raise PreconditionError("g_tilde_beta needs beta > -1/2")
    rho = _rho(g, rho)
    f = np.asarray(f, dtype=np.float64)
    h = f if beta == 0 else fractional_power(g, beta, f, route=route, tol=tol * 1e-2)
    lam_min = decompose(g).lambda_min if g.n <= dense_limit() else 2 * check_LB(g) - 1
    return _accumulate(g, h, lambda l: float(l) ** (2 * beta), lambda u: gradient_sq(g, u),
                       rho, 1.0 - lam_min, tol, L, L_max)


def g2_beta(g: WeightedGraph, f, beta: float, *, tol: float = 1e-10, L: int | None = None,
            L_max: int = DEFAULT_L_MAX, route: str = "spectral", rho: float | None = None
            ) -> SquareFunction:
    """``(sum_{l>=1} b_l |(I-P^2)^beta P^(l-1) f|^2)^(1/2)`` with ``b_l = c_{l-1}(2 beta)``."""
    if beta <= 0:
        raise PreconditionError("g2_beta needs beta > 0")
    rho = _rho(g, rho)
    h = fractional_power(g, beta, np.asarray(f, dtype=np.float64), route=route, tol=tol * 1e-2,
                         square=True)
    b = _CoeffTable(2 * beta)
    return _accumulate(g, h, lambda l: b[l - 1], lambda u: u * u, rho, 1.0, tol, L, L_max)


class _CoeffTable:
    """Lazily extended ``c_k(alpha)`` indexed by ``k``."""

    def __init__(self, alpha):
        self._it = iter_coeffs(alpha)
        self._vals: list[float] = []

    def __getitem__(self, k):
        while len(self._vals) <= k:
            self._vals.append(next(self._it))
        return self._vals[k]


# ---- maximal operators ----------------------------------------------------

def _ball_averages(g: WeightedGraph, a: np.ndarray) -> np.ndarray:
    """``A[c, r]`` = average of ``a`` over ``B(c, r)`` for ``r = 1..diam+1`` (index ``r-1``)."""
    D = g.distance_matrix
    R = g.diameter + 1
    V = g.volume_profile[:, 1:R + 1]
    out = np.empty((g.n, R))
    w = a * g.m
    for c in range(g.n):
        out[c] = np.cumsum(np.bincount(D[c], weights=w, minlength=R)[:R])
    return out / V


def maximal(g: WeightedGraph, f, fast: bool = False) -> np.ndarray:
    """Hardy-Littlewood maximal function over all balls containing each vertex.

    ``Mf(x) = max_{c, r > d(c, x)} avg_{B(c, r)} |f|``, computed from
    suffix maxima of ball averages in ``O(n^2 + n diam)`` per function.
    ``fast`` restricts to balls centred at ``x``: a lower bound only.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.ndim == 2:
        return np.column_stack([maximal(g, f[:, i], fast) for i in range(f.shape[1])])
    A = _ball_averages(g, np.abs(f))
    if fast:
        return A.max(axis=1)
    SA = np.maximum.accumulate(A[:, ::-1], axis=1)[:, ::-1]
    D = g.distance_matrix
    return np.take_along_axis(SA, D.astype(np.int64), axis=1).max(axis=0)


def maximal_s(g: WeightedGraph, f, s: float, fast: bool = False) -> np.ndarray:
    """``M_s f = (M |f|^s)^(1/s)``."""
    if s < 1:
        raise ValueError("s must be >= 1")
    return maximal(g, np.abs(np.asarray(f, dtype=np.float64)) ** s, fast) ** (1.0 / s)


def domination_constant(g: WeightedGraph, f, K: int) -> tuple[float, tuple]:
    """Fitted ``C`` in ``|P^k f(x)| <= C Mf(x0)`` over ``1 <= k <= K`` and ``d(x, x0) <= sqrt(k)``.

    Returns the constant and the witness ``(k, x)``.
    """
    f = np.asarray(f, dtype=np.float64)
    Mf = maximal(g, f)
    D = g.distance_matrix
    P = markov_matrix(g)
    best, wit = 0.0, None
    cache: dict = {}
    u = f
    for k in range(1, K + 1):
        u = P @ u
        R = math.isqrt(k)
        if R not in cache:
            cache[R] = np.where(D <= R, Mf[None, :], np.inf).min(axis=1)
        den = cache[R]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(den > 0, np.abs(u) / den, np.where(np.abs(u) > 0, np.inf, 0.0))
        x = int(np.argmax(ratio))
        if ratio[x] > best:
            best, wit = float(ratio[x]), (k, x)
    return best, wit


@dataclass
class FStar:
    values: np.ndarray = field(repr=False)
    tail_bound: np.ndarray | float  # bound on sup_{n > N} |P^n f(x)|
    N: int


def f_star(g: WeightedGraph, f, N: int, rho: float | None = None) -> FStar:
    """``f*(x) = sup_{0 <= n <= N} |P^n f(x)|`` and a bound on the neglected ``n > N``.

    ``|P^n f(x)| <= |mean f| + rho^n ||f - mean f||_2 / sqrt(m(x))``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    f = np.asarray(f, dtype=np.float64)
    P = markov_matrix(g)
    out = np.abs(f)
    u = f
    for _ in range(N):
        u = P @ u
        out = np.maximum(out, np.abs(u))
    rho = _rho(g, rho)
    mu = mean(g, f)
    dev = l2_norm(g.m, f - mu)
    bound = np.abs(mu) + rho ** (N + 1) * dev / math.sqrt(g.m.min())
    return FStar(values=out, tail_bound=bound, N=N)


# ---- nonnegative trajectories ---------------------------------------------

def _check_nonneg(f):
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise PreconditionError("this functional is defined for nonnegative f")
    return f


def _pow_2mq(u, q):
    # u^(2-q) with 0^0 = 1 when q = 2 and 0 for q < 2
    return np.ones_like(u) if q == 2 else u ** (2.0 - q)


def tilde_N_q(g: WeightedGraph, f, q: float) -> np.ndarray:
    """``q f Delta f - f^(2-q) Delta f^q`` for ``f >= 0``."""
    if not 1 < q <= 2:
        raise ValueError("q must lie in (1, 2]")
    f = _check_nonneg(f)
    P = markov_matrix(g)
    fq = f ** q
    # expanded to avoid cancellation: (q-1) f^2 - q f Pf + f^(2-q) P(f^q)
    return (q - 1.0) * f * f - q * f * (P @ f) + _pow_2mq(f, q) * (P @ fq)


def N_q(g: WeightedGraph, u, q: float) -> np.ndarray:
    """``u^(2-q) [P(u^q) - (P u)^q]``: the time-space quantity along ``u_n = P^n f``."""
    if not 1 < q <= 2:
        raise ValueError("q must lie in (1, 2]")
    u = _check_nonneg(u)
    P = markov_matrix(g)
    return _pow_2mq(u, q) * (P @ u ** q - (P @ u) ** q)


def N_q_trajectory(g: WeightedGraph, f, q: float, n: int) -> np.ndarray:
    """``N_q(P^n f)``."""
    f = _check_nonneg(f)
    P = markov_matrix(g)
    u = f
    for _ in range(n):
        u = P @ u
    return N_q(g, np.maximum(u, 0.0), q)


@dataclass
class G0q:
    values: np.ndarray = field(repr=False)
    tail: np.ndarray | float  # pointwise bound on the neglected part of the sum of N_q terms
    terms: int
    min_term: float


def g_tilde_0q(g: WeightedGraph, f, q: float, N: int, atol: float = 1e-12) -> G0q:
    """``(sum_{n=0}^{N} N_q(P^n f))^(1/2)`` with each term checked to be nonnegative.

    The neglected terms satisfy ``N_q <= tilde N_q <= 2(q-1)|grad|^2``
    pointwise, and ``m(x)|grad u(x)|^2 <= (1 - lambda_min) ||u - mean||_2^2``,
    giving the returned pointwise tail bound.
    """
    f = _check_nonneg(f)
    P = markov_matrix(g)
    acc = _Kahan(f.shape)
    u = f
    worst = math.inf
    for n in range(N + 1):
        t = N_q(g, np.maximum(u, 0.0), q)
        tmin = float(t.min())
        worst = min(worst, tmin)
        if tmin < -atol:
            x = np.unravel_index(int(np.argmin(t)), t.shape)
            raise InvariantViolation(f"N_q(P^{n} f) = {tmin:.3e} < 0 at {x}")
        acc.add(np.maximum(t, 0.0))
        u = P @ u
    dec = decompose(g)
    rho = dec.rho
    dev2 = l2_norm(g.m, project_mean_zero(g, f)) ** 2
    if rho < 1:
        tail = 2 * (q - 1) * (1 - dec.lambda_min) * dev2 * rho ** (2 * (N + 1)) / (
            (1 - rho * rho) * g.m.min())
    else:
        tail = math.inf
    return G0q(values=np.sqrt(acc.s), tail=tail, terms=N + 1, min_term=worst)


def sandwich_constant(eps: float, q: float) -> float:
    """``1 / (1 - (1 - eps)^(q-1))``."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    return 1.0 / (1.0 - (1.0 - eps) ** (q - 1.0))


def adjacency_matrix(g: WeightedGraph) -> sp.csr_matrix:
    A = g.__dict__.get("_adjacency01")
    if A is None:
        W = g.weights
        A = sp.csr_matrix((np.ones_like(W.data), W.indices, W.indptr), shape=W.shape)
        g.__dict__["_adjacency01"] = A
    return A


def averaging_A(g: WeightedGraph, F) -> np.ndarray:
    """``(A F)(x) = sum_{y ~ x} F(y)``, unweighted, ``x`` included when ``x ~ x``."""
    return adjacency_matrix(g) @ np.asarray(F, dtype=np.float64)


def gradient_domination_constant(g: WeightedGraph, f, q: float,
                                 n_values) -> tuple[float, tuple | None]:
    """Fitted ``c`` in ``|grad P^n f|^2 <= c A(tilde N_q(P^n f))`` pointwise.

    Returns ``inf`` with the witness when the right side vanishes but the
    left does not.
    """
    f = _check_nonneg(f)
    P = markov_matrix(g)
    best, wit = 0.0, None
    u = f
    done = 0
    for n in sorted(set(int(v) for v in n_values)):
        while done < n:
            u = P @ u
            done += 1
        lhs = gradient_sq(g, u)
        rhs = averaging_A(g, np.maximum(tilde_N_q(g, np.maximum(u, 0.0), q), 0.0))
        scale = max(float(np.max(lhs)), 1e-300)
        nz = rhs > 1e-14 * scale
        bad = (~nz) & (lhs > 1e-12 * scale)
        if np.any(bad):
            return math.inf, (n, int(np.flatnonzero(bad)[0]))
        if np.any(nz):
            r = lhs[nz] / rhs[nz]
            i = int(np.argmax(r))
            if r[i] > best:
                best, wit = float(r[i]), (n, int(np.flatnonzero(nz)[i]))
    return best, wit
