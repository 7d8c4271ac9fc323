"""Generalised binomial coefficients and the sequence classes used to sum
kernel estimates over time.

``c_k(alpha) = prod_{i=1}^k (1 + (alpha - 1)/i)`` are the Taylor
coefficients of ``(1 - z)^(-alpha)``.  The classes are

* ``E_M``:  ``0 <= a_n <= M sum_{k>=1} a_k / k`` for all ``n``;
* ``Et_M``: ``0 <= a_n <= M sum_{k>=n} a_k / k`` for all ``n``;
* ``A_c^alpha``: nondecreasing up to some ``n0``, then within a factor
  ``c`` of ``a_{n0} (n0/n)^alpha``.

Finite sequences are read with a zero tail unless a tail bound is given.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.signal import fftconvolve

from .errors import PreconditionError


@dataclass(frozen=True)
class CoeffSeq:
    """``c_k(alpha)`` for ``k = 0..K``; ``flagged`` when ``alpha <= 0``."""

    alpha: float
    values: np.ndarray = field(repr=False)
    flagged: bool = False

    @property
    def K(self) -> int:
        return len(self.values) - 1


def binom_coeffs(alpha: float, K: int) -> CoeffSeq:
    """Product formula evaluated left to right (no factorials).

    Each step is ``c_k = c_{k-1} (k + alpha - 1) / k``, multiplying before
    dividing so that integer ``alpha`` gives exact integers.
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    vals = np.fromiter(itertools.islice(iter_coeffs(alpha), K + 1), dtype=np.float64,
                       count=K + 1)
    vals.setflags(write=False)
    return CoeffSeq(alpha=float(alpha), values=vals, flagged=alpha <= 0)


def iter_coeffs(alpha: float) -> Iterator[float]:
    """Stream ``c_0(alpha), c_1(alpha), ...`` by the same recurrence."""
    c, k = 1.0, 0
    while True:
        yield c
        k += 1
        c = c * (k + alpha - 1.0) / k


def asymptotic_check(alpha: float, K: int, k_min: int | None = None) -> float:
    """``max_{k_min <= k <= K} |c_k(alpha) Gamma(alpha) / k^(alpha-1) - 1|``, ``k_min = K/2``."""
    if alpha <= 0:
        raise ValueError("asymptotics need alpha > 0")
    if K < 100:
        raise ValueError("K must be >= 100")
    k_min = K // 2 if k_min is None else int(k_min)
    c = binom_coeffs(alpha, K).values[k_min:]
    k = np.arange(k_min, K + 1, dtype=np.float64)
    dev = np.expm1(np.log(c) + math.lgamma(alpha) - (alpha - 1.0) * np.log(k))
    return float(np.max(np.abs(dev)))


# ---- partial sums -----------------------------------------------------------

@dataclass
class PartialSumReport:
    """Partial sums ``S_m`` for ``m = 1..M`` with their running supremum."""

    beta: float
    eta: int
    scaled: bool
    values: np.ndarray = field(repr=False)
    sup: float
    argmax: int
    decade_growth: float  # sup over [1, M] relative to sup over [1, M/10], minus 1
    decade_slope: float   # log-log slope of S_m over the last decade
    prev_decade_growth: float

    @property
    def running_sup(self) -> np.ndarray:
        return np.maximum.accumulate(self.values)

    def flat(self, tol: float = 0.05) -> bool:
        """Last-decade growth of the running sup is below ``tol`` and not accelerating."""
        return self.decade_growth <= tol and self.decade_growth <= self.prev_decade_growth + 1e-15


def partial_sum_bounds(beta: float, M_max: int, eta: int | None = None,
                       scaled: bool | None = None) -> PartialSumReport:
    """Evaluate the two time-convolution sums used for fractional powers.

    Unscaled (``beta > 0``, ``eta`` with ``eta + 1 >= beta > eta``)::

        S_m = sum_{k=0}^{m-1} c_k(eta+1-beta) (m-k)^(beta-eta-1)

    Scaled (``-1/2 < beta <= 0``)::

        S_m = sqrt(m) sum_{k=0}^{m-1} c_k(-beta) (m-k)^(beta-1/2)

    All ``m <= M_max`` are computed at once by FFT convolution.  When the
    coefficients reduce to a unit impulse (integer ``beta``, or ``beta = 0``
    scaled) the sums are evaluated exactly.
    """
    if scaled is None:
        scaled = beta <= 0
    if scaled:
        if not -0.5 < beta <= 0:
            raise ValueError("scaled variant needs beta in (-1/2, 0]")
        eta, alpha, expo = -1, -beta, beta - 0.5
    else:
        if beta <= 0:
            raise ValueError("unscaled variant needs beta > 0")
        if eta is None:
            eta = math.ceil(beta) - 1
        if not (eta + 1 >= beta > eta):
            raise ValueError(f"eta={eta} is not the integer part of beta={beta}")
        alpha, expo = eta + 1 - beta, beta - eta - 1
    m = np.arange(1, M_max + 1, dtype=np.float64)
    if alpha == 0:
        # a_k is the unit impulse: S_m = m^expo, times sqrt(m) when scaled
        S = m ** (expo + 0.5) if scaled else m ** expo
    else:
        a = binom_coeffs(alpha, M_max - 1).values
        w = m ** expo
        S = fftconvolve(a, w)[:M_max]
        if scaled:
            S = S * np.sqrt(m)
    top = int(np.argmax(S))
    sup = float(S[top])
    cut = max(1, M_max // 10)
    early = float(S[:cut].max())
    growth = sup / early - 1.0
    cut2 = max(1, cut // 10)
    prev = early / float(S[:cut2].max()) - 1.0
    tail = slice(cut - 1, M_max)
    slope = float(np.polyfit(np.log(m[tail]), np.log(S[tail]), 1)[0]) if M_max >= 20 else 0.0
    return PartialSumReport(beta=beta, eta=eta, scaled=scaled, values=S, sup=sup,
                            argmax=top + 1, decade_growth=growth, decade_slope=slope,
                            prev_decade_growth=prev)


# ---- A and B sequences ----------------------------------------------------

@dataclass(frozen=True)
class KernelSequence:
    """``values[l-1]`` for ``l = 1..L`` with analytic bounds on what lies past ``L``."""

    params: dict
    values: np.ndarray = field(repr=False)
    sum_tail_lower: float   # lower bound for sum_{l>L} a_l / l
    sum_tail_upper: float   # upper bound for sum_{l>L} a_l / l
    sup_tail: float         # upper bound for sup_{l>L} a_l

    @property
    def L(self) -> int:
        return len(self.values)


def _gauss_sup_sequence(lexp, texp, c, n, k, r, j, L, tag):
    if n < 1 or c <= 0 or r < 1 or j < 2 or k < 0 or L < 1:
        raise ValueError("need n >= 1, c > 0, r >= 1, j >= 2, k >= 0, L >= 1")
    D = c * 4.0 ** j * r * r
    S = n * r * r
    l = np.arange(1, L + 1, dtype=np.float64)
    base = l + k

    def prof(t):
        return np.exp(-D / t) / t ** texp

    # t -> exp(-D/t)/t^texp is unimodal with its maximum at D/texp
    s_star = D / texp - base
    cands = [np.zeros_like(l), np.full_like(l, S),
             np.clip(np.floor(s_star), 0, S), np.clip(np.ceil(s_star), 0, S)]
    best = np.max([prof(base + s) for s in cands], axis=0)
    vals = l ** lexp * best
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite sequence values")
    decay = texp - lexp  # a_l <= l^(lexp - texp) since exp(-D/t) <= 1 and t >= l
    L1 = L + 1.0
    lower = (math.exp(-D / (L1 + k)) * (1.0 + k / L1) ** (-texp) * L1 ** (-decay) / decay
             if decay > 0 else 0.0)
    upper = L ** (-decay) / decay if decay > 0 else math.inf
    params = dict(kind=tag, lexp=lexp, texp=texp, c=c, n=n, k=k, r=r, j=j, L=L)
    vals.setflags(write=False)
    return KernelSequence(params=params, values=vals, sum_tail_lower=lower,
                          sum_tail_upper=upper, sup_tail=L1 ** (-decay) if decay > 0 else math.inf)


def make_A_seq(gamma: float, n: int, c: float, k: int, r: int, j: int, L: int) -> KernelSequence:
    """``A_l = l^gamma sup_{s in [0, n r^2]} exp(-c 4^j r^2/(l+k+s)) / (l+k+s)^(1+n)``.

    Here ``gamma = beta - eta`` lies in ``(0, 1]`` and ``s`` runs over integers.
    """
    if not 0 < gamma <= 1:
        raise PreconditionError(f"exponent beta - eta = {gamma} must lie in (0, 1]")
    return _gauss_sup_sequence(gamma, 1.0 + n, c, n, k, r, j, L, "A")


def make_B_seq(beta: float, n: int, c: float, k: int, r: int, j: int, L: int) -> KernelSequence:
    """``B_l = l^(beta+1/2) sup_s exp(-c 4^j r^2/(l+k+s)) / (l+k+s)^(n+1/2)``, ``beta in (-1/2, 0]``."""
    if not -0.5 < beta <= 0:
        raise PreconditionError(f"beta={beta} must lie in (-1/2, 0]")
    return _gauss_sup_sequence(beta + 0.5, n + 0.5, c, n, k, r, j, L, "B")


# ---- sequence classes -----------------------------------------------------

def _values(seq) -> np.ndarray:
    a = seq.values if isinstance(seq, KernelSequence) else np.asarray(seq, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite sequence values")
    return a


def harmonic_sum(a) -> float:
    a = _values(a)
    return float(np.sum(a / np.arange(1, len(a) + 1)))


def tail_sums(a) -> np.ndarray:
    """``T_n = sum_{k=n}^{L} a_k / k`` for ``n = 1..L``."""
    a = _values(a)
    w = a / np.arange(1, len(a) + 1)
    return np.cumsum(w[::-1])[::-1]


def min_M_E(a, tail: float = 0.0) -> tuple[float, int]:
    """Smallest ``M`` with ``a_n <= M (sum a_k/k + tail)`` and the index attaining it."""
    a = _values(a)
    if np.any(a < 0):
        return math.inf, int(np.argmin(a)) + 1
    S = harmonic_sum(a) + tail
    if not np.any(a > 0):
        return 0.0, 1
    i = int(np.argmax(a))
    return float(a[i] / S), i + 1


def min_M_Et(a, tail: float = 0.0) -> tuple[float, int]:
    """Smallest ``M`` with ``a_n <= M (T_n + tail)`` and the index attaining it."""
    a = _values(a)
    if np.any(a < 0):
        return math.inf, int(np.argmin(a)) + 1
    T = tail_sums(a) + tail
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(a > 0, a / T, 0.0)
    i = int(np.argmax(ratio))
    return float(ratio[i]), i + 1


def in_E(a, M: float, rtol: float = 1e-12) -> bool:
    a = _values(a)
    return bool(np.all(a >= 0) and np.all(a <= M * harmonic_sum(a) * (1 + rtol)))


def in_Et(a, M: float, rtol: float = 1e-12) -> bool:
    a = _values(a)
    return bool(np.all(a >= 0) and np.all(a <= M * tail_sums(a) * (1 + rtol)))


def a_class_params(a, alpha: float) -> tuple[int, float]:
    """Best ``(n0, c)`` placing ``a`` in ``A_c^alpha`` on the finite range (``c = 0``: not a member)."""
    a = _values(a)
    if np.any(a <= 0):
        return 1, 0.0
    L = len(a)
    rises = np.diff(a) >= 0
    first_drop = int(np.argmin(rises)) + 1 if not np.all(rises) else L
    n = np.arange(1, L + 1, dtype=np.float64)
    best = (1, 0.0)
    for n0 in range(1, first_drop + 1):
        ref = a[n0 - 1] * (n0 / n[n0 - 1:]) ** alpha
        q = a[n0 - 1:] / ref
        c = float(min(q.min(), (1.0 / q).min()))
        if c > best[1]:
            best = (n0, c)
    return best


def tail_ratio_bounds(c: float, alpha: float) -> tuple[float, float]:
    """Bounds ``c^2/alpha <= T_n / a_n <= (1 + 1/alpha)/c^2`` for ``n >= n0`` in ``A_c^alpha``."""
    return c * c / alpha, (1.0 + 1.0 / alpha) / (c * c)


@dataclass
class SeqClassReport:
    """Membership summary for one sequence."""

    seq_id: str
    M_E: float
    witness_E: int
    M_Et: float
    witness_Et: int
    in_E: bool
    in_Et: bool
    M_E_infinite: float | None = None   # certified bound on the untruncated sequence
    M_Et_tail: float | None = None      # Et_M constant on [1, L] with the tail lower bound added
    a_class: tuple | None = None        # (alpha, n0, c)
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def seq_class_check(seq, M: float | None = None, seq_id: str = "seq",
                    alpha: float | None = None) -> SeqClassReport:
    """Minimal ``M`` for ``E_M`` and ``Et_M`` on ``[1, L]`` plus membership at a given ``M``.

    The minimal constants are closed forms (``max a_n / sum a_k/k`` and
    ``max a_n / T_n``); the report confirms that the constant passes while
    ``M / 1.01`` fails at the witness.  For :class:`KernelSequence` input
    it also gives a bound valid for the infinite sequence, using the
    analytic tail estimates.
    """
    a = _values(seq)
    mE, wE = min_M_E(a)
    mT, wT = min_M_Et(a)
    M_use = mE if M is None else M
    rep = SeqClassReport(seq_id=seq_id, M_E=mE, witness_E=wE, M_Et=mT, witness_Et=wT,
                         in_E=in_E(a, M_use), in_Et=in_Et(a, mT if M is None else M))
    if mE > 0 and math.isfinite(mE):
        S = harmonic_sum(a)
        if not a[wE - 1] > (mE / 1.01) * S:
            rep.notes.append("minimal E_M constant not sharp at witness")
    if isinstance(seq, KernelSequence):
        peak = max(float(a.max()), seq.sup_tail)
        rep.M_E_infinite = peak / harmonic_sum(a)
        rep.M_Et_tail = min_M_Et(a, tail=seq.sum_tail_lower)[0]
        rep.notes.append(f"verified on [1, {seq.L}]; tail of sum a_l/l in "
                         f"[{seq.sum_tail_lower:.3e}, {seq.sum_tail_upper:.3e}]")
    if alpha is not None:
        n0, c = a_class_params(a, alpha)
        rep.a_class = (alpha, n0, c)
    return rep


def l2l1_check(seq, M: float) -> tuple[bool, float]:
    """``(sum a_n^2/n)^(1/2) <= M^(1/2) sum a_n/n``; returns the verdict and the slack RHS - LHS."""
    a = _values(seq)
    n = np.arange(1, len(a) + 1)
    lhs = math.sqrt(float(np.sum(a * a / n)))
    rhs = math.sqrt(M) * float(np.sum(a / n))
    return lhs <= rhs * (1 + 1e-12), rhs - lhs


def rho_lambda(seq, lam) -> np.ndarray:
    """``[rho_lambda(a)]_n = (lambda_n / lambda_{n+1}) a_{n+1}`` with ``a_{L+1} = 0``."""
    a = _values(seq)
    lam = np.asarray(lam, dtype=np.float64)
    out = np.zeros_like(a)
    out[:-1] = lam[:len(a) - 1] / lam[1:len(a)] * a[1:]
    return out


def check_lambda(lam) -> None:
    lam = np.asarray(lam, dtype=np.float64)
    n = np.arange(1, len(lam) + 1)
    if np.any(lam <= 0):
        raise PreconditionError("lambda must be positive")
    if np.any(np.diff(lam) < -1e-15 * lam[1:]):
        raise PreconditionError("lambda must be nondecreasing")
    r = lam / n
    if np.any(np.diff(r) > 1e-15 * r[:-1]):
        raise PreconditionError("lambda_n / n must be nonincreasing")


def rho_lambda_closure(seq, lam, M: float | None = None) -> tuple[bool, float, float]:
    """Check ``a in Et_M`` implies ``rho_lambda(a) in Et_M`` on the truncated range.

    ``M`` defaults to the minimal constant of ``a``.  Returns the verdict,
    the ``M`` used and the minimal constant of the image.  ``lam`` needs
    ``L`` entries (or a callable of ``n``).
    """
    a = _values(seq)
    if callable(lam):
        lam = lam(np.arange(1, len(a) + 1, dtype=np.float64))
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), a.shape).copy()
    check_lambda(lam)
    if M is None:
        M = min_M_Et(a)[0]
    if not in_Et(a, M):
        raise PreconditionError("sequence is not in Et_M for the given M")
    image = rho_lambda(a, lam)
    mi = min_M_Et(image)[0]
    return mi <= M * (1 + 1e-12), float(M), mi


def ft_convexity_check(q: float, t: float, lo: float = -1.0, hi: float = 10.0,
                       h: float = 1e-3) -> float:
    """Minimum of ``F(s-h) - 2F(s) + F(s+h)`` over the grid, ``F(s) = s^2 / (1+ts)^(2-q)``."""
    if not 1 < q <= 2:
        raise ValueError("q must lie in (1, 2]")
    if not 0 < t < 1:
        raise ValueError("t must lie in (0, 1)")
    if h <= 0 or hi <= lo:
        raise ValueError("need h > 0 and hi > lo")
    npts = int(round((hi - lo) / h)) + 1
    s = lo + h * np.arange(npts)
    F = s * s / (1.0 + t * s) ** (2.0 - q)
    return float(np.min(F[:-2] - 2.0 * F[1:-1] + F[2:]))
