"""Markov operator, iterated kernels ``p_l`` and the kernel-estimate checkers."""

from __future__ import annotations

import gzip
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import PreconditionError, ResourceLimitError
from .fitting import Envelope, fit_envelope
from .graph import WeightedGraph

KERNEL_CAP_BYTES = 1 << 30


def _kernel_cap() -> int:
    return int(os.environ.get("LPGRAPH_KERNEL_CAP", KERNEL_CAP_BYTES))


def markov_matrix(g: WeightedGraph) -> sp.csr_matrix:
    """Sparse ``P`` with entries ``mu_xy / m(x)`` (cached on the graph)."""
    P = g.__dict__.get("_markov")
    if P is None:
        P = sp.diags(1.0 / g.m) @ g.weights
        P = sp.csr_matrix(P)
        g.__dict__["_markov"] = P
    return P


def apply_P(g: WeightedGraph, f: np.ndarray) -> np.ndarray:
    """``Pf(x) = sum_y (mu_xy / m(x)) f(y)``; 2-D input is treated column by column."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape[0] != g.n:
        raise ValueError(f"function has {f.shape[0]} values for a graph with {g.n} vertices")
    return markov_matrix(g) @ f


def apply_P_power(g: WeightedGraph, f: np.ndarray, k: int) -> np.ndarray:
    P = markov_matrix(g)
    f = np.asarray(f, dtype=np.float64)
    for _ in range(k):
        f = P @ f
    return f


@dataclass(frozen=True)
class KernelTable:
    """``p_l(x0, y)`` for ``l = 0..L``; row ``l`` of ``values`` is ``p_l(x0, .)``."""

    source: int
    values: np.ndarray = field(repr=False)

    @property
    def L(self) -> int:
        return self.values.shape[0] - 1

    def __getitem__(self, l):
        return self.values[l]

    def mass(self, m: np.ndarray) -> np.ndarray:
        """``sum_y p_l(x0, y) m(y)`` per ``l``."""
        return self.values @ m


def _check_cap(n_doubles: int):
    if 8 * n_doubles > _kernel_cap():
        raise ResourceLimitError(
            f"kernel storage of {n_doubles} doubles exceeds the cap of {_kernel_cap()} bytes "
            "(set LPGRAPH_KERNEL_CAP to raise it)")


def kernel_table(g: WeightedGraph, x0: int, L: int) -> KernelTable:
    """Iterate ``u_{l+1} = P u_l`` from ``u_0 = delta_{x0} / m(x0)``.

    By symmetry of ``p_l`` the column ``p_l(., x0)`` built this way is also
    the row ``p_l(x0, .)``.
    """
    if L < 0:
        raise ValueError("L must be >= 0")
    _check_cap(g.n * (L + 1))
    P = markov_matrix(g)
    T = np.empty((L + 1, g.n))
    T[0] = 0.0
    T[0, x0] = 1.0 / g.m[x0]
    for l in range(L):
        T[l + 1] = P @ T[l]
    T.setflags(write=False)
    return KernelTable(source=int(x0), values=T)


def kernel_tables(g: WeightedGraph, sources: Sequence[int], L: int) -> np.ndarray:
    """Batched tables, shape ``(len(sources), L+1, n)``."""
    sources = np.asarray(sources, dtype=np.int64)
    _check_cap(len(sources) * g.n * (L + 1))
    P = markov_matrix(g)
    out = np.empty((len(sources), L + 1, g.n))
    U = np.zeros((g.n, len(sources)))
    U[sources, np.arange(len(sources))] = 1.0 / g.m[sources]
    out[:, 0, :] = U.T
    for l in range(L):
        U = P @ U
        out[:, l + 1, :] = U.T
    return out


def difference_D(table, shifts: Sequence[int]) -> np.ndarray:
    """Apply ``(D(r) u)_l = u_l - u_{l+r}`` for each shift in turn along the index ``l``.

    Accepts a :class:`KernelTable` or an array whose first axis is ``l``.
    Returns rows ``l = 0..L - sum(shifts)``.
    """
    u = table.values if isinstance(table, KernelTable) else np.asarray(table)
    shifts = [int(r) for r in shifts]
    if any(r < 1 for r in shifts):
        raise ValueError("shifts must be positive integers")
    if sum(shifts) > u.shape[0] - 1:
        raise ValueError(f"shifts {shifts} exceed the table range l <= {u.shape[0] - 1}")
    for r in shifts:
        u = u[:-r] - u[r:]
    return u


def sqrt_radius(l) -> np.ndarray:
    """``ceil(sqrt(l))`` computed exactly on integers."""
    l = np.asarray(l, dtype=np.int64)
    r = np.ceil(np.sqrt(l)).astype(np.int64)
    r -= (r - 1) * (r - 1) >= l
    r += r * r < l
    return r


@dataclass
class DUEResult:
    constant: float
    witness: tuple           # (x, l)
    per_l: np.ndarray = field(repr=False)  # max over x for each l = 1..L


def due_check(g: WeightedGraph, L: int, sources: Sequence[int] | None = None,
              block: int = 256) -> DUEResult:
    """``sup_{x, 1 <= l <= L} p_l(x, x) V(x, ceil(sqrt l))``."""
    if L < 1:
        raise ValueError("L must be >= 1")
    xs = np.arange(g.n) if sources is None else np.asarray(sources, dtype=np.int64)
    P = markov_matrix(g)
    rad = sqrt_radius(np.arange(1, L + 1))
    best = np.full(L, -np.inf)
    arg = np.zeros(L, dtype=np.int64)
    for start in range(0, len(xs), block):
        xb = xs[start:start + block]
        U = np.zeros((g.n, len(xb)))
        U[xb, np.arange(len(xb))] = 1.0 / g.m[xb]
        for l in range(1, L + 1):
            U = P @ U
            vals = U[xb, np.arange(len(xb))] * g.volume(xb, rad[l - 1])
            k = int(np.argmax(vals))
            if vals[k] > best[l - 1]:
                best[l - 1] = vals[k]
                arg[l - 1] = xb[k]
    l = int(np.argmax(best))
    return DUEResult(constant=float(best[l]), witness=(int(arg[l]), l + 1), per_l=best)


@dataclass
class KernelFit:
    """Envelope fit of a rescaled kernel quantity against ``X = d^2 / l``."""

    envelope: Envelope
    X: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    samples: np.ndarray = field(repr=False)  # rows (x, y, l)
    excluded_zero: int = 0

    @property
    def C(self):
        return self.envelope.C

    @property
    def c(self):
        return self.envelope.c

    @property
    def r2(self):
        return self.envelope.regression.get("r2", float("nan"))

    @property
    def degenerate(self):
        return self.envelope.degenerate


def _default_sources(g, k=4):
    return sorted({int(v) for v in np.linspace(0, g.n - 1, min(k, g.n)).round()})


def _sample_kernel(g, sources, l_min, l_max, shifts, x_range):
    j = len(shifts)
    span = sum(shifts)
    Xs, vals, samp = [], [], []
    zero = 0
    tabs = kernel_tables(g, sources, l_max + span)
    rscale = float(np.prod(shifts)) if j else 1.0
    for si, x in enumerate(sources):
        u = difference_D(tabs[si], shifts) if j else tabs[si]
        dist = g.distances_from(x).astype(float)
        for l in range(l_min, l_max + 1):
            s = sqrt_radius(l)
            X = dist * dist / l
            mask = dist <= l
            if x_range is not None:
                mask &= (X >= x_range[0]) & (X <= x_range[1])
            ys = np.flatnonzero(mask)
            if not len(ys):
                continue
            vol = np.sqrt(g.volume(x, s) * g.volume(ys, s))
            v = np.abs(u[l, ys]) * vol * (l ** j) / rscale
            nz = v > 0
            zero += int(np.count_nonzero(~nz))
            Xs.append(X[ys][nz])
            vals.append(v[nz])
            samp.append(np.column_stack([np.full(nz.sum(), x), ys[nz], np.full(nz.sum(), l)]))
    if not Xs:
        raise ValueError("empty sample: no (x, y, l) satisfies the requested ranges")
    X = np.concatenate(Xs)
    V = np.concatenate(vals)
    S = np.concatenate(samp).astype(np.int64)
    if len(X) == 0:
        return _all_zero_fit(zero)
    return KernelFit(envelope=fit_envelope(X, V), X=X, values=V, samples=S, excluded_zero=zero)


def ue_fit(g: WeightedGraph, l_range=(1, 64), *, sources: Sequence[int] | None = None,
           x_range: tuple | None = None, sample=None) -> KernelFit:
    """Fit ``p_l(x,y) (V(x,s) V(y,s))^(1/2) <= C exp(-c d^2 / l)``, ``s = ceil(sqrt l)``.

    ``sample`` may be an explicit array of ``(x, y, l)`` rows; otherwise
    every ``y`` within distance ``l`` of each source is used for ``l`` in
    ``l_range`` (with ``d^2/l`` restricted to ``x_range`` when given).
    Zero kernel values (beyond the propagation front) are excluded.
    """
    if sample is not None:
        return _fit_explicit(g, np.asarray(sample, dtype=np.int64), [])
    sources = _default_sources(g) if sources is None else list(sources)
    return _sample_kernel(g, sources, int(l_range[0]), int(l_range[1]), [], x_range)


def tdue_fit(g: WeightedGraph, shifts: Sequence[int] = (1,), l_range=(1, 64), *,
             sources: Sequence[int] | None = None, x_range: tuple | None = None,
             sample=None) -> KernelFit:
    """Fit ``|(D(r_1)..D(r_j) p)_l(x,y)| l^j (V V)^(1/2) / (r_1..r_j) <= C_j exp(-c_j d^2/l)``.

    Requires ``l >= max(r_i)`` on every sample.  With no shifts this is
    :func:`ue_fit`.
    """
    shifts = [int(r) for r in shifts]
    if shifts and int(l_range[0]) < max(shifts):
        raise PreconditionError(f"l must be >= max shift {max(shifts)}")
    if sample is not None:
        return _fit_explicit(g, np.asarray(sample, dtype=np.int64), shifts)
    sources = _default_sources(g) if sources is None else list(sources)
    return _sample_kernel(g, sources, int(l_range[0]), int(l_range[1]), shifts, x_range)


def _all_zero_fit(count):
    """Every sampled value vanished: any bound holds, reported as degenerate with ``C = 0``."""
    z = np.zeros(count)
    return KernelFit(envelope=fit_envelope(z, z), X=np.zeros(0), values=np.zeros(0),
                     samples=np.zeros((0, 3), dtype=np.int64), excluded_zero=count)


def _fit_explicit(g, sample, shifts):
    if sample.size == 0:
        raise ValueError("empty sample")
    sample = sample.reshape(-1, 3)
    j, span = len(shifts), sum(shifts)
    if shifts and sample[:, 2].min() < max(shifts):
        raise PreconditionError(f"l must be >= max shift {max(shifts)}")
    rscale = float(np.prod(shifts)) if j else 1.0
    out_x, out_v, keep = [], [], []
    for x in np.unique(sample[:, 0]):
        rows = sample[sample[:, 0] == x]
        tab = kernel_table(g, int(x), int(rows[:, 2].max()) + span)
        u = difference_D(tab, shifts) if j else tab.values
        dist = g.distances_from(int(x))
        for y, l in rows[:, 1:]:
            s = sqrt_radius(l)
            v = abs(u[l, y]) * math.sqrt(g.volume(int(x), s) * g.volume(int(y), s)) * l ** j / rscale
            if v > 0:
                out_x.append(dist[y] ** 2 / l)
                out_v.append(v)
                keep.append((x, y, l))
    if not out_v:
        return _all_zero_fit(len(sample))
    X, V = np.array(out_x, dtype=float), np.array(out_v)
    return KernelFit(envelope=fit_envelope(X, V), X=X, values=V,
                     samples=np.array(keep, dtype=np.int64),
                     excluded_zero=len(sample) - len(keep))


def dump_kernel_csv(table: KernelTable, path, labels: Sequence[str] | None = None) -> None:
    """Write ``l,y,p`` rows (nonzero entries only); gzip when the path ends in ``.gz``."""
    path = os.fspath(path)
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "wt", encoding="utf-8", newline="") as fh:
        fh.write("l,y,p\n")
        for l, row in enumerate(table.values):
            for y in np.flatnonzero(row):
                name = labels[y] if labels is not None else y
                fh.write(f"{l},{name},{float(row[y])!r}\n")
