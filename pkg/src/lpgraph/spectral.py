"""Functional calculus of ``P`` from its m-symmetrised eigendecomposition,
and the Taylor-series route to fractional powers of ``I - P``.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .errors import ConvergenceError, DomainError, PreconditionError, ResourceLimitError
from .graph import WeightedGraph, check_LB
from .kernel import markov_matrix
from .series import iter_coeffs

DENSE_LIMIT = 4096
SPECTRUM_EDGE = 1e-10


def dense_limit() -> int:
    return int(os.environ.get("LPGRAPH_DENSE_LIMIT", DENSE_LIMIT))


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of ``P``: ``P phi_i = lambda_i phi_i`` with ``phi^T M phi = I``.

    Eigenvalues are sorted in decreasing order; index 0 is the constant
    eigenvector with ``lambda_0 = 1`` stored exactly.
    """

    values: np.ndarray = field(repr=False)
    vectors: np.ndarray = field(repr=False)
    m: np.ndarray = field(repr=False)
    top: int = 0

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def rho(self) -> float:
        """Spectral radius of ``P`` on the mean-zero subspace."""
        if self.n == 1:
            return 0.0
        return float(np.max(np.abs(self.values[1:])))

    @property
    def lambda_min(self) -> float:
        return float(self.values[-1])

    @property
    def gap(self) -> float:
        """``1 - lambda_1`` for the second-largest eigenvalue."""
        return float(1.0 - self.values[1]) if self.n > 1 else 1.0

    def coefficients(self, f: np.ndarray) -> np.ndarray:
        """``<f, phi_i>`` in the m-weighted inner product."""
        f = np.asarray(f, dtype=np.float64)
        mf = f * (self.m if f.ndim == 1 else self.m[:, None])
        return self.vectors.T @ mf

    def synthesize(self, coef: np.ndarray) -> np.ndarray:
        return self.vectors @ coef


def decompose(g: WeightedGraph) -> SpectralDecomposition:
    """Eigendecomposition of ``P`` via ``S = M^(-1/2) W M^(-1/2)`` (cached on the graph)."""
    dec = g.__dict__.get("_spectral")
    if dec is not None:
        return dec
    if g.n > dense_limit():
        raise ResourceLimitError(
            f"n={g.n} exceeds the dense eigendecomposition limit {dense_limit()} "
            "(LPGRAPH_DENSE_LIMIT); use kernel-table or Taylor routes instead")
    s = 1.0 / np.sqrt(g.m)
    S = (g.weights.toarray() * s[:, None]) * s[None, :]
    S = 0.5 * (S + S.T)
    lam, U = sla.eigh(S)
    lam, U = lam[::-1].copy(), U[:, ::-1].copy()
    if abs(lam[0] - 1.0) > SPECTRUM_EDGE:
        raise ArithmeticError(f"top eigenvalue {lam[0]!r} differs from 1")
    lam[0] = 1.0
    phi = U * s[:, None]
    # top vector is exactly the normalised constant
    phi[:, 0] = 1.0 / math.sqrt(g.total_mass)
    np.clip(lam, -1.0, 1.0, out=lam)
    for a in (lam, phi):
        a.setflags(write=False)
    dec = SpectralDecomposition(values=lam, vectors=phi, m=g.m)
    g.__dict__["_spectral"] = dec
    return dec


def _as_dec(obj) -> SpectralDecomposition:
    return obj if isinstance(obj, SpectralDecomposition) else decompose(obj)


# ---- spectral symbols -----------------------------------------------------

_FACTOR_RE = re.compile(
    r"^\((?P<base>1-x\^2|1-x|1\+x)\)(?:\^(?P<exp>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?))?$"
    r"|^x(?:\^(?P<k>\d+))?$")
_BASES = ("1-x", "1+x", "1-x^2")


@dataclass(frozen=True)
class SpectralSymbol:
    """``phi(x) = (1-x)^a (1+x)^b (1-x^2)^c x^k``."""

    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    k: int = 0

    @classmethod
    def parse(cls, text: str | "SpectralSymbol") -> "SpectralSymbol":
        if isinstance(text, SpectralSymbol):
            return text
        expo = {"1-x": 0.0, "1+x": 0.0, "1-x^2": 0.0}
        k = 0
        body = text.replace(" ", "")
        if body in ("", "1"):
            return cls()
        for part in body.split("*"):
            mt = _FACTOR_RE.match(part)
            if not mt:
                raise ValueError(f"cannot parse symbol factor {part!r} in {text!r}")
            if mt.group("base"):
                expo[mt.group("base")] += float(mt.group("exp") or 1.0)
            else:
                k += int(mt.group("k") or 1)
        return cls(expo["1-x"], expo["1+x"], expo["1-x^2"], k)

    def __str__(self):
        parts = []
        for name, e in zip(_BASES, (self.a, self.b, self.c)):
            if e != 0:
                parts.append(f"({name})^{e!r}")
        if self.k:
            parts.append(f"x^{self.k}")
        return "*".join(parts) or "1"

    def __mul__(self, other: "SpectralSymbol") -> "SpectralSymbol":
        return SpectralSymbol(self.a + other.a, self.b + other.b, self.c + other.c,
                              self.k + other.k)

    def singular_at_one(self) -> bool:
        return self.a + self.c < 0

    def singular_at_minus_one(self) -> bool:
        return self.b + self.c < 0

    def limit_at(self, x: float) -> float:
        """Value at ``x = 1`` or ``x = -1`` with ``(1-x^2) = (1-x)(1+x)`` factored."""
        near, far = (self.a + self.c, self.b + self.c) if x > 0 else (self.b + self.c, self.a + self.c)
        if near < 0:
            return math.inf
        if near > 0:
            return 0.0
        return 2.0 ** far * (1.0 if x > 0 else (-1.0) ** self.k)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.ones_like(x)
            if self.a:
                out = out * np.maximum(1.0 - x, 0.0) ** self.a
            if self.b:
                out = out * np.maximum(1.0 + x, 0.0) ** self.b
            if self.c:
                out = out * np.maximum(1.0 - x * x, 0.0) ** self.c
            if self.k:
                out = out * x ** self.k
        return out


def apply_phi(dec, symbol, f: np.ndarray, mean_zero_only: bool = False,
              full_output: bool = False):
    """``phi(P) f`` by expansion in the m-orthonormal eigenbasis.

    With ``mean_zero_only`` the constant component (the m-weighted mean) is
    removed first; ``full_output`` then also returns the removed mean.
    Raises :class:`DomainError` when the symbol blows up at an eigenvalue
    that is present and not projected out.
    """
    dec = _as_dec(dec)
    sym = SpectralSymbol.parse(symbol)
    f = np.asarray(f, dtype=np.float64)
    if f.shape[0] != dec.n:
        raise ValueError("function length does not match the graph")
    lam = dec.values
    at_one = np.abs(lam - 1.0) < SPECTRUM_EDGE
    at_one[dec.top] = True
    at_minus = np.abs(lam + 1.0) < SPECTRUM_EDGE
    if sym.singular_at_one() and not mean_zero_only:
        raise DomainError(f"symbol {sym} is singular at the eigenvalue 1; project to mean zero")
    if sym.singular_at_one() and np.count_nonzero(at_one) > 1:
        raise DomainError(f"symbol {sym} is singular at the repeated eigenvalue 1")
    if sym.singular_at_minus_one() and np.any(at_minus):
        raise DomainError(f"symbol {sym} is singular at the eigenvalue -1, present in the spectrum")
    vals = sym(lam)
    if not sym.singular_at_one():
        vals[at_one] = sym.limit_at(1.0)
    if np.any(at_minus):
        vals[at_minus] = sym.limit_at(-1.0)
    coef = dec.coefficients(f)
    removed = coef[dec.top] / math.sqrt(float(dec.m.sum()))
    if mean_zero_only:
        vals[dec.top] = 0.0
    out = dec.synthesize(coef * (vals if f.ndim == 1 else vals[:, None]))
    return (out, removed) if full_output else out


def mean(g_or_m, f: np.ndarray):
    """m-weighted mean of ``f`` (per column for 2-D input)."""
    m = g_or_m.m if hasattr(g_or_m, "m") else np.asarray(g_or_m)
    f = np.asarray(f, dtype=np.float64)
    return (m @ f) / m.sum()


def project_mean_zero(g_or_m, f: np.ndarray) -> np.ndarray:
    return np.asarray(f, dtype=np.float64) - mean(g_or_m, f)


def l2_norm(m, f) -> np.ndarray | float:
    """m-weighted L2 norm (per column for 2-D input)."""
    f = np.asarray(f, dtype=np.float64)
    return np.sqrt(m @ (f * f))


# ---- Taylor route ---------------------------------------------------------

@dataclass
class SeriesResult:
    """Truncated series value with its certified L2 tail bound."""

    values: np.ndarray = field(repr=False)
    tail: float
    terms: int


def taylor_series(op: Callable, gamma: float, f: np.ndarray, rho: float, norm: Callable,
                  tol: float = 1e-10, K_max: int = 1_000_000) -> SeriesResult:
    """``(I - A)^gamma f = sum_k c_k(-gamma) A^k f`` for ``gamma`` in ``(-1, 0]``.

    ``rho`` bounds the operator norm of ``A`` on the subspace holding ``f``.
    Coefficients ``c_k(-gamma)`` decrease, so the tail after ``K`` terms is
    at most ``c_K rho^K / (1 - rho) * ||f||``.
    """
    if not (-1.0 < gamma <= 0.0):
        raise ValueError(f"gamma={gamma} outside (-1, 0]")
    f = np.asarray(f, dtype=np.float64)
    if gamma == 0.0:
        return SeriesResult(values=f.copy(), tail=0.0, terms=1)
    if rho >= 1.0 - 1e-12:
        raise ConvergenceError(f"spectral radius {rho} on the mean-zero space is 1; "
                               "the series does not converge (bipartite or disconnected?)")
    alpha = -gamma
    fn = float(np.max(norm(f)))
    acc = np.zeros_like(f)
    comp = np.zeros_like(f)
    u = f
    coeffs = iter_coeffs(alpha)
    a = next(coeffs)
    k = 0
    while True:
        # compensated accumulation of a_k A^k f
        y = a * u - comp
        t = acc + y
        comp = (t - acc) - y
        acc = t
        k += 1
        a = next(coeffs)
        bound = a * rho ** k / (1.0 - rho) * fn
        if bound < tol:
            return SeriesResult(values=acc, tail=bound, terms=k)
        if k >= K_max:
            raise ConvergenceError(f"tail {bound:.3e} above tol {tol:.1e} after {K_max} terms")
        u = op(u)


def taylor_apply(g, gamma: float, f: np.ndarray, tol: float = 1e-10, K_max: int = 1_000_000,
                 rho: float | None = None) -> SeriesResult:
    """``(I - P)^gamma f`` for ``gamma`` in ``(-1, 0]`` by its Taylor series in ``P``.

    ``f`` must have m-weighted mean zero when ``gamma < 0``.  ``rho``
    defaults to the mean-zero spectral radius from :func:`decompose`; on
    graphs too large to decompose it must be supplied.
    """
    m = g.m
    f = np.asarray(f, dtype=np.float64)
    if gamma < 0:
        mu = np.max(np.abs(np.atleast_1d(mean(m, f))))
        if mu > 1e-12 * (1.0 + float(np.max(np.abs(f)))):
            raise PreconditionError("Taylor route for a negative power needs a mean-zero f")
    if rho is None:
        rho = decompose(g).rho
    P = markov_matrix(g)
    return taylor_series(lambda u: P @ u, gamma, f, rho, lambda v: l2_norm(m, v), tol, K_max)


def _split_power(beta: float):
    """``beta = (eta + 1) + gamma`` with ``eta + 1 >= beta > eta`` and ``gamma`` in ``(-1, 0]``."""
    eta = math.ceil(beta) - 1
    return eta, beta - eta - 1


def fractional_power(g, beta: float, f: np.ndarray, route: str = "taylor", tol: float = 1e-10,
                     square: bool = False, full_output: bool = False):
    """``(I - P)^beta f`` (or ``(I - P^2)^beta f`` with ``square``) for ``beta > -1/2``.

    Routes
    ------
    ``"spectral"``
        :func:`apply_phi` with the symbol ``(1-x)^beta``.
    ``"taylor"``
        ``(I - A)^(eta+1)`` applied by repeated differences after the
        Taylor series for ``(I - A)^(beta - eta - 1)``, ``A = P`` or ``P^2``.

    Inputs are projected to mean zero when ``beta`` is not a nonnegative
    integer; for ``beta > 0`` this changes nothing since constants are
    annihilated.
    """
    if beta <= -0.5:
        raise PreconditionError(f"beta={beta} must exceed -1/2")
    f = np.asarray(f, dtype=np.float64)
    m = g.m
    integer = float(beta).is_integer() and beta >= 0
    P = markov_matrix(g)
    op = (lambda u: P @ (P @ u)) if square else (lambda u: P @ u)
    if integer:
        h = f
        for _ in range(int(beta)):
            h = h - op(h)
        return (h, 0.0) if full_output else h
    fz = project_mean_zero(m, f)
    if route == "spectral":
        sym = SpectralSymbol(c=beta) if square else SpectralSymbol(a=beta)
        h = apply_phi(g, sym, fz, mean_zero_only=True)
        return (h, 0.0) if full_output else h
    if route not in ("taylor", "kernel"):
        raise ValueError(f"unknown route {route!r}")
    eta, gamma = _split_power(beta)
    dec = decompose(g) if g.n <= dense_limit() else None
    if dec is not None:
        rho = dec.rho ** 2 if square else dec.rho
        lam_min = dec.lambda_min
    else:
        raise ResourceLimitError("Taylor route without a decomposition needs a rho bound; "
                                 "use taylor_series directly")
    # ||I - A|| on L2 is 1 - lambda_min(A), and lambda_min(P^2) >= 0
    norm_IA = 1.0 if square else 1.0 - lam_min
    budget = tol / norm_IA ** (eta + 1)
    res = taylor_series(op, gamma, fz, rho, lambda v: l2_norm(m, v), budget)
    h = res.values
    for _ in range(eta + 1):
        h = h - op(h)
    tail = res.tail * norm_IA ** (eta + 1)
    return (h, tail) if full_output else h


def plus_power(g, beta: float, f: np.ndarray) -> np.ndarray:
    """``(I + P)^beta f`` by the spectral route."""
    return apply_phi(g, SpectralSymbol(b=beta), f)


def check_spectrum_vs_LB(g: WeightedGraph) -> tuple[float, float]:
    """``(lambda_min, 2 eps* - 1)``; the first must not fall below the second."""
    return decompose(g).lambda_min, 2.0 * check_LB(g) - 1.0
