"""Weighted graphs with their hop metric, balls, volumes and geometric checks.

A graph is given by a symmetric weight ``mu[x, y] >= 0``; the vertex mass is
``m(x) = sum_y mu[x, y]`` (self-loops included) and two vertices are neighbours
when their weight is positive.  Vertices are dense indices ``0..n-1`` with an
optional label table.
"""

from __future__ import annotations

import math
import os
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import GraphError, ResourceLimitError

DISTANCE_LIMIT = 4096


def _distance_limit() -> int:
    return int(os.environ.get("LPGRAPH_DISTANCE_LIMIT", DISTANCE_LIMIT))


class WeightedGraph:
    """Immutable connected weighted graph.

    Attributes
    ----------
    n : int
        Number of vertices.
    weights : scipy.sparse.csr_matrix
        Symmetric ``(n, n)`` weight matrix; the diagonal holds self-loops.
    m : ndarray
        Vertex masses ``m(x) = sum_y mu_xy``.
    labels : tuple of str
        Vertex labels, in index order.
    """

    def __init__(self, weights: sp.spmatrix, labels: Sequence[str] | None = None):
        W = sp.csr_matrix(weights, dtype=np.float64)
        W.eliminate_zeros()
        W.sort_indices()
        self.n = W.shape[0]
        self.weights = W
        self.m = np.asarray(W.sum(axis=1)).ravel()
        if labels is None:
            labels = [str(i) for i in range(self.n)]
        self.labels = tuple(str(lab) for lab in labels)
        for arr in (W.data, W.indices, W.indptr, self.m):
            arr.setflags(write=False)

    def __repr__(self):
        return f"WeightedGraph(n={self.n}, edges={self.num_edges}, M0={self.max_degree})"

    @property
    def num_edges(self) -> int:
        """Number of unordered pairs ``{x, y}`` (loops included) with positive weight."""
        W = self.weights
        return int((W.nnz + np.count_nonzero(W.diagonal())) // 2)

    @cached_property
    def degree(self) -> np.ndarray:
        """Neighbour count per vertex, counting ``x`` itself when ``x ~ x``."""
        return np.diff(self.weights.indptr)

    @property
    def max_degree(self) -> int:
        return int(self.degree.max())

    @property
    def loops(self) -> np.ndarray:
        return self.weights.diagonal()

    @property
    def total_mass(self) -> float:
        return float(self.m.sum())

    def neighbors(self, x: int) -> np.ndarray:
        W = self.weights
        return W.indices[W.indptr[x]:W.indptr[x + 1]]

    @cached_property
    def adjacency(self) -> tuple:
        return tuple(self.neighbors(x) for x in range(self.n))

    def edges(self):
        """Yield ``(u, v, w)`` with ``u <= v`` in increasing ``(u, v)`` order."""
        coo = sp.triu(self.weights).tocoo()
        order = np.lexsort((coo.col, coo.row))
        for k in order:
            yield int(coo.row[k]), int(coo.col[k]), float(coo.data[k])

    def index(self, label: Hashable) -> int:
        if isinstance(label, (int, np.integer)) and 0 <= label < self.n:
            return int(label)
        try:
            return self._label_index[str(label)]
        except KeyError:
            raise KeyError(f"unknown vertex {label!r}") from None

    @cached_property
    def _label_index(self) -> dict:
        return {lab: i for i, lab in enumerate(self.labels)}

    # ---- metric -------------------------------------------------------

    def distances_from(self, x: int) -> np.ndarray:
        """Hop distances from ``x`` by breadth-first traversal."""
        if "distance_matrix" in self.__dict__:
            return self.distance_matrix[x]
        dist = np.full(self.n, -1, dtype=np.int64)
        dist[x] = 0
        queue = deque([x])
        W = self.weights
        while queue:
            u = queue.popleft()
            for v in W.indices[W.indptr[u]:W.indptr[u + 1]]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    @cached_property
    def distance_matrix(self) -> np.ndarray:
        """All-pairs hop distances (int32), guarded by ``LPGRAPH_DISTANCE_LIMIT``."""
        if self.n > _distance_limit():
            raise ResourceLimitError(
                f"all-pairs distances for n={self.n} exceed the limit {_distance_limit()}; "
                "use distances_from() row by row")
        D = shortest_path(self.weights, unweighted=True, directed=False)
        D = D.astype(np.int32)
        D.setflags(write=False)
        return D

    def distance(self, x: int, y: int) -> int:
        return int(self.distances_from(x)[y])

    @cached_property
    def diameter(self) -> int:
        if self.n <= _distance_limit():
            return int(self.distance_matrix.max())
        return int(max(self.distances_from(x).max() for x in range(self.n)))

    @cached_property
    def volume_profile(self) -> np.ndarray:
        """``V[x, r]`` = volume of ``B(x, r)`` for ``r = 0..diameter+1``."""
        R = self.diameter + 2
        V = np.zeros((self.n, R))
        for x in range(self.n):
            shell = np.bincount(self.distances_from(x), weights=self.m, minlength=R - 1)
            V[x, 1:] = np.cumsum(shell)
        V.setflags(write=False)
        return V

    def volume(self, x, r) -> np.ndarray | float:
        """Volume ``V(x, r)`` of ``{y : d(x, y) < r}``; radii beyond the diameter saturate."""
        r = np.minimum(np.asarray(r, dtype=np.int64), self.diameter + 1)
        V = self.volume_profile[x, np.maximum(r, 0)]
        return float(V) if np.ndim(V) == 0 else V

    def ball(self, x: int, r: int) -> "Ball":
        if r <= 0:
            raise ValueError("ball radius must be positive")
        r = int(r)
        members = np.flatnonzero(self.distances_from(x) < r)
        return Ball(center=int(x), radius=r, members=members,
                    volume=float(self.m[members].sum()))


@dataclass(frozen=True)
class Ball:
    """``B(x, r) = {y : d(x, y) < r}`` with its volume."""

    center: int
    radius: int
    members: np.ndarray = field(repr=False)
    volume: float

    def __len__(self):
        return len(self.members)

    def scaled(self, g: WeightedGraph, factor: float) -> "Ball":
        """``factor * B``; the radius ``factor * r`` is rounded up to an integer."""
        return g.ball(self.center, int(math.ceil(factor * self.radius - 1e-12)))


def annulus(g: WeightedGraph, B: Ball, j: int) -> np.ndarray:
    """``C_1(B) = 4B`` and ``C_j(B) = 2^(j+1) B minus 2^j B`` for ``j >= 2``."""
    if j < 1:
        raise ValueError("annulus index must be >= 1")
    d = g.distances_from(B.center)
    outer = d < (2 ** (j + 1)) * B.radius
    if j == 1:
        return np.flatnonzero(outer)
    inner = d < (2 ** j) * B.radius
    return np.flatnonzero(outer & ~inner)


# ---- construction ----------------------------------------------------------

def build_graph(edges: Iterable, labels: Sequence[Hashable] | None = None) -> WeightedGraph:
    """Build a graph from ``(u, v, weight)`` triples with arbitrary vertex tokens.

    Tokens are mapped to indices in first-appearance order (or in the order
    of ``labels`` when given).  A pair listed twice must carry the same
    weight both times.  Raises :class:`GraphError` for negative weights,
    conflicting duplicates, an empty edge list or a disconnected graph.
    """
    index: dict = {}
    if labels is not None:
        for lab in labels:
            index.setdefault(lab, len(index))
    seen: dict = {}
    for k, triple in enumerate(edges):
        try:
            u, v, w = triple
            w = float(w)
        except (TypeError, ValueError):
            raise GraphError(f"edge #{k} is not a (u, v, weight) triple: {triple!r}") from None
        if not math.isfinite(w) or w < 0:
            raise GraphError(f"edge ({u}, {v}) has invalid weight {w}", witness=(u, v, w))
        iu = index.setdefault(u, len(index))
        iv = index.setdefault(v, len(index))
        key = (min(iu, iv), max(iu, iv))
        if key in seen and seen[key] != w:
            raise GraphError(f"conflicting weights for pair ({u}, {v}): {seen[key]} vs {w}",
                             witness=(u, v))
        seen[key] = w
    if not seen:
        raise GraphError("graph has no edges")
    n = len(index)
    rows, cols, data = [], [], []
    for (a, b), w in seen.items():
        if w == 0:
            continue
        rows.append(a)
        cols.append(b)
        data.append(w)
        if a != b:
            rows.append(b)
            cols.append(a)
            data.append(w)
    W = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    names = [None] * n
    for tok, i in index.items():
        names[i] = tok
    ncomp, comp = connected_components(W, directed=False)
    if ncomp > 1:
        witness = [names[int(np.flatnonzero(comp == c)[0])] for c in range(ncomp)]
        raise GraphError(f"graph is disconnected ({ncomp} components; representatives {witness})",
                         witness=witness)
    return WeightedGraph(W, labels=names)


def from_matrix(W, labels=None) -> WeightedGraph:
    """Wrap a symmetric weight matrix, validating symmetry and connectivity."""
    W = sp.csr_matrix(W, dtype=np.float64)
    if W.shape[0] != W.shape[1]:
        raise GraphError("weight matrix must be square")
    if W.nnz and W.data.min() < 0:
        raise GraphError("negative weight in matrix")
    if abs(W - W.T).max() > 0:
        raise GraphError("weight matrix is not symmetric")
    ncomp, _ = connected_components(W, directed=False)
    if ncomp > 1 or W.shape[0] == 0:
        raise GraphError(f"graph is disconnected ({ncomp} components)")
    return WeightedGraph(W, labels=labels)


# ---- geometric hypotheses --------------------------------------------------

def check_LB(g: WeightedGraph) -> float:
    """Best ``eps`` in ``mu_xx >= eps m(x)``; zero means the condition fails."""
    return float(np.min(g.loops / g.m))


def check_LB2(g: WeightedGraph) -> float:
    """Best ``eps`` with ``x ~ x`` and ``mu_xy >= eps m(x)`` for every ``y ~ x``."""
    if np.any(g.loops <= 0):
        return 0.0
    W = g.weights
    rows = np.repeat(np.arange(g.n), np.diff(W.indptr))
    return float(np.min(W.data / g.m[rows]))


def check_LDV(g: WeightedGraph) -> float:
    """Best ``c`` in ``V(x, 2) <= c m(x)``."""
    return float(np.max(g.volume(np.arange(g.n), 2) / g.m))


@dataclass(frozen=True)
class DoublingResult:
    constant: float
    exponent: float
    witness: tuple  # (x, r) attaining the constant


def doubling_constant(g: WeightedGraph, r_max: int | None = None) -> DoublingResult:
    """``max V(x, 2r) / V(x, r)`` over all ``x`` and ``1 <= r <= r_max``.

    The exponent is ``log2`` of the constant, i.e. the volume-growth
    exponent (not the hop metric, which shares its letter in the literature).
    """
    if r_max is None:
        r_max = g.diameter
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    if r_max > max(g.diameter, 1):
        raise ValueError(f"r_max={r_max} exceeds the diameter {g.diameter}")
    r = np.arange(1, r_max + 1)
    V = g.volume_profile
    R = V.shape[1] - 1
    ratio = V[:, np.minimum(2 * r, R)] / V[:, r]
    k = int(np.argmax(ratio))
    x, i = divmod(k, len(r))
    C = float(ratio[x, i])
    return DoublingResult(constant=C, exponent=math.log2(C), witness=(int(x), int(r[i])))


def gradient_sq(g: WeightedGraph, f: np.ndarray) -> np.ndarray:
    """``|grad f|^2(x) = 1/2 sum_y (mu_xy / m(x)) (f(y) - f(x))^2``; columns are separate functions."""
    W = g.weights
    f = np.asarray(f, dtype=np.float64)
    rows = np.repeat(np.arange(g.n), np.diff(W.indptr))
    diff = f[W.indices] - f[rows]
    w = W.data if f.ndim == 1 else W.data[:, None]
    acc = np.zeros(f.shape)
    np.add.at(acc, rows, w * diff * diff)
    m = g.m if f.ndim == 1 else g.m[:, None]
    return 0.5 * acc / m


@dataclass
class PoincareResult:
    """Fitted constant of the ball Poincare inequality.

    ``constant`` is the supremum of LHS/RHS over the tested family and so a
    lower bound on the true constant.  ``exact`` (only for ``s = 2``) is the
    maximum over tested balls of the per-ball optimum from the generalised
    eigenproblem, when every ball was small enough to solve.
    """

    s: float
    constant: float
    witness: tuple
    lower_bound: bool = True
    exact: float | None = None
    exact_witness: tuple | None = None
    per_radius: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    skipped: int = 0


def _test_family(g, centers, n_random, n_eigen, seed):
    cols = [g.distances_from(c).astype(float) for c in centers]
    rng = np.random.default_rng(seed)
    cols.extend(rng.standard_normal((n_random, g.n)))
    if n_eigen:
        from .spectral import decompose  # local import: spectral depends on graph
        dec = decompose(g)
        for i in range(1, min(n_eigen + 1, g.n)):
            cols.append(dec.vectors[:, i])
    return np.column_stack(cols)


def _exact_ball_optimum(g, x, r, dist):
    """Largest LHS/RHS over all functions for one ball, ``s = 2``."""
    import scipy.linalg as sla

    U = np.flatnonzero(dist < 2 * r + 1)
    inner2 = dist[U] < 2 * r
    inner1 = dist[U] < r
    pos = {int(v): i for i, v in enumerate(U)}
    k = len(U)
    Q2 = np.zeros((k, k))
    W = g.weights
    V1 = g.m[U[inner1]].sum()
    V2 = g.m[U[inner2]].sum()
    for a in np.flatnonzero(inner2):
        y = U[a]
        for z, w in zip(W.indices[W.indptr[y]:W.indptr[y + 1]], W.data[W.indptr[y]:W.indptr[y + 1]]):
            if z == y:
                continue
            b = pos[int(z)]
            h = 0.5 * w
            Q2[a, a] += h
            Q2[b, b] += h
            Q2[a, b] -= h
            Q2[b, a] -= h
    Q2 *= r * r / V2
    mB = np.where(inner1, g.m[U], 0.0)
    Q1 = (np.diag(mB) - np.outer(mB, mB) / V1) / V1
    Z = sla.null_space(np.ones((1, k)))
    A = Z.T @ Q1 @ Z
    B = Z.T @ Q2 @ Z
    return float(sla.eigh(A, B, eigvals_only=True)[-1])


def poincare_constant(g: WeightedGraph, s: float = 2.0, r_max: int | None = None, *,
                      centers: Sequence[int] | None = None, n_random: int = 8,
                      n_eigen: int = 8, seed: int = 0, exact: bool = True,
                      exact_limit: int = 512, functions: np.ndarray | None = None) -> PoincareResult:
    """Estimate the best constant ``C`` in the ball Poincare inequality ``(P_s)``.

    The family of test functions is: distance functions from a few anchor
    vertices, ``n_random`` Gaussian functions and the ``n_eigen``
    lowest-frequency eigenvectors of ``P`` (or ``functions`` if given).
    With ``s == 2`` and ``exact`` set, the per-ball optimum over all
    functions is also computed for balls whose ``2B`` plus boundary has
    at most ``exact_limit`` vertices.
    """
    if s < 1:
        raise ValueError("Poincare exponent s must be >= 1")
    if r_max is None:
        r_max = max(1, g.diameter // 2)
    if centers is None:
        centers = range(g.n)
    centers = [int(c) for c in centers]
    if functions is None:
        anchors = sorted({centers[0], int(np.argmax(g.distances_from(centers[0])))})
        functions = _test_family(g, anchors, n_random, n_eigen if g.n > 2 else 0, seed)
    F = np.asarray(functions, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    grad_s = gradient_sq(g, F) ** (s / 2)
    best, witness = 0.0, None
    exact_best, exact_witness, exact_ok = 0.0, None, exact and s == 2
    per_radius: dict = {}
    failures, skipped = [], 0
    for x in centers:
        dist = g.distances_from(x)
        for r in range(1, r_max + 1):
            inB = dist < r
            in2B = dist < 2 * r
            V1 = g.m[inB].sum()
            V2 = g.m[in2B].sum()
            mB = g.m[inB][:, None]
            fB = (F[inB] * mB).sum(axis=0) / V1
            lhs = (np.abs(F[inB] - fB) ** s * mB).sum(axis=0) / V1
            rhs = r ** s * (grad_s[in2B] * g.m[in2B][:, None]).sum(axis=0) / V2
            tiny = 1e-14 * (1.0 + np.abs(F).max(axis=0)) ** s
            zero_l = lhs <= tiny
            zero_r = rhs <= tiny
            skipped += int(np.count_nonzero(zero_l & zero_r))
            for col in np.flatnonzero(zero_r & ~zero_l):
                failures.append((x, r, int(col)))
            ok = ~zero_r
            if np.any(ok):
                ratio = lhs[ok] / rhs[ok]
                i = int(np.argmax(ratio))
                per_radius[r] = max(per_radius.get(r, 0.0), float(ratio[i]))
                if ratio[i] > best:
                    best, witness = float(ratio[i]), (x, r, int(np.flatnonzero(ok)[i]))
            if exact_ok and r > 1:
                if np.count_nonzero(dist < 2 * r + 1) > exact_limit:
                    exact_ok = False
                else:
                    val = _exact_ball_optimum(g, x, r, dist)
                    if val > exact_best:
                        exact_best, exact_witness = val, (x, r)
    return PoincareResult(s=s, constant=best, witness=witness,
                          exact=exact_best if exact_ok else None,
                          exact_witness=exact_witness if exact_ok else None,
                          per_radius=per_radius, failures=failures, skipped=skipped)
