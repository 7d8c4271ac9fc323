"""Experiment drivers: each suite measures one family of estimates and
returns a :class:`VerificationReport`.

Status values: ``pass`` / ``fail`` for identities and thresholded
checks, ``fitted`` for constants that are only estimated.  Bounds with
unnamed constants are judged by cross-size stability: the fitted constant
on the largest graph of a family may exceed the one on the smallest by at
most ``growth`` (default 1.1).
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import functionals as fn
from .errors import PreconditionError, SchemaError
from .fitting import fit_envelope
from .generators import generate
from .graph import WeightedGraph, annulus, check_LB, check_LDV, doubling_constant, gradient_sq
from .kernel import (due_check, kernel_table, kernel_tables, markov_matrix, tdue_fit, ue_fit)
from .spectral import decompose, fractional_power, l2_norm, project_mean_zero

SCHEMA = "lpgraph.report/1"
DEFAULT_GROWTH = 1.1


@dataclass
class VerificationReport:
    """Result of one suite run.

    ``runtime`` is kept on the object but left out of emitted files so
    that identical runs give identical bytes.  ``plots`` maps a name to
    ``(X, Y)`` envelope data and is written only in the plot format.
    """

    check: str
    graph: str
    params: dict
    status: str
    constants: dict = field(default_factory=dict)
    witness: dict | None = None
    tolerances: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    runtime: float = 0.0
    plots: dict = field(default_factory=dict, repr=False)

    def as_dict(self) -> dict:
        return _jsonable({"check": self.check, "graph": self.graph, "params": self.params,
                          "status": self.status, "constants": self.constants,
                          "witness": self.witness, "tolerances": self.tolerances,
                          "details": self.details})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


# ---- helpers ----------------------------------------------------------------

def _resolve(graphs) -> list[tuple[str, WeightedGraph]]:
    if isinstance(graphs, (str, WeightedGraph)):
        graphs = [graphs]
    out = []
    for i, gs in enumerate(graphs):
        if isinstance(gs, WeightedGraph):
            out.append((f"graph{i}", gs))
        elif isinstance(gs, tuple):
            out.append(gs)
        else:
            out.append((str(gs), generate(gs)))
    return out


def _rng(seed: int, *keys) -> np.random.Generator:
    ints = [int(seed)] + [zlib.crc32(str(k).encode()) for k in keys]
    return np.random.default_rng(ints)


def _require_LB(name, g):
    eps = check_LB(g)
    if eps <= 0:
        raise PreconditionError(f"graph {name} violates (LB): no uniform self-loop mass")
    return eps


def _growth(values: Sequence[float]) -> float:
    a, b = float(values[0]), float(values[-1])
    if a == 0:
        return 1.0 if b == 0 else math.inf
    return b / a


def extrapolate(values: Sequence[float]) -> dict:
    """Geometric-convergence summary of a size sequence on a doubling family.

    ``contraction`` is the ratio of the last two increments; below 1 the
    sequence converges and ``limit`` is its Aitken extrapolation.
    """
    v = [float(x) for x in values]
    if len(v) < 3:
        return {"contraction": None, "limit": None}
    d1, d2 = v[-2] - v[-3], v[-1] - v[-2]
    if d1 == 0:
        return {"contraction": 0.0 if d2 == 0 else math.inf, "limit": v[-1] if d2 == 0 else None}
    r = d2 / d1
    lim = v[-1] + d2 * r / (1 - r) if abs(r) < 1 else None
    return {"contraction": r, "limit": lim}


def _timed(fn_):
    def wrap(*a, **k):
        t = time.perf_counter()
        rep = fn_(*a, **k)
        rep.runtime = time.perf_counter() - t
        return rep
    wrap.__name__ = fn_.__name__
    wrap.__doc__ = fn_.__doc__
    return wrap


def mean_zero_ensemble(g: WeightedGraph, rng: np.random.Generator, trials: int,
                       n_dirac: int = 16, n_eigen: int = 8) -> tuple[np.ndarray, list]:
    """Gaussian, Dirac-difference and low-frequency eigenvector functions, all mean zero."""
    cols, labels = [], []
    G = project_mean_zero(g, rng.standard_normal((g.n, trials)))
    cols.append(G)
    labels += [f"gauss{i}" for i in range(trials)]
    for i in range(n_dirac):
        x, y = rng.choice(g.n, size=2, replace=False)
        f = np.zeros(g.n)
        f[x] += 1.0 / g.m[x]
        f[y] -= 1.0 / g.m[y]
        cols.append(f[:, None])
        labels.append(f"dirac{i}:{x}-{y}")
    dec = decompose(g)
    k = min(n_eigen, g.n - 1)
    if k > 0:
        low = dec.vectors[:, 1:k + 1]
        for i in range(n_eigen):
            w = rng.standard_normal(k)
            cols.append((low @ w)[:, None])
            labels.append(f"eigmix{i}")
    return np.hstack(cols), labels


def nonneg_ensemble(g: WeightedGraph, rng: np.random.Generator, trials: int,
                    n_dirac: int = 8) -> tuple[np.ndarray, list]:
    """Uniform random ``f >= 0`` and normalised Diracs."""
    cols = [rng.random((g.n, trials))]
    labels = [f"unif{i}" for i in range(trials)]
    for i, x in enumerate(rng.choice(g.n, size=min(n_dirac, g.n), replace=False)):
        f = np.zeros(g.n)
        f[x] = 1.0 / g.m[x]
        cols.append(f[:, None])
        labels.append(f"dirac{i}:{x}")
    return np.hstack(cols), labels


def _square(func, g, F, beta, tol):
    if func in ("g", "g_beta"):
        return fn.g_beta(g, F, beta, tol=tol)
    if func in ("g_tilde", "g_tilde_beta"):
        return fn.g_tilde_beta(g, F, beta, tol=tol)
    if func in ("g2", "g2_beta"):
        return fn.g2_beta(g, F, beta, tol=tol)
    raise ValueError(f"unknown functional {func!r}")


# ---- suites -----------------------------------------------------------------

@_timed
def isometry_suite(graphs, betas: Sequence[float] = (0.3, 0.5, 1.0, 1.7), trials: int = 100,
                   seed: int = 0, tol: float = 1e-8, functions=None) -> VerificationReport:
    """Maximal relative deviation of ``||g2_beta f||_2 / ||f||_2`` from 1 on mean-zero ``f``.

    Explicit ``functions`` with nonzero mean are excluded, not failed: the
    identity only holds on the mean-zero subspace of a finite graph.
    """
    resolved = _resolve(graphs)
    worst, wit, per = 0.0, None, {}
    excluded = 0
    for name, g in resolved:
        _require_LB(name, g)
        if functions is None:
            F = project_mean_zero(g, _rng(seed, name, "iso").standard_normal((g.n, trials)))
        else:
            F = np.asarray(functions, dtype=float).reshape(g.n, -1)
            mu = np.abs(g.m @ F) / g.m.sum()
            keep = mu <= 1e-12 * (1 + np.abs(F).max(axis=0))
            excluded += int(np.count_nonzero(~keep))
            F = F[:, keep]
        norms = l2_norm(g.m, F)
        ok = norms > 0
        F, norms = F[:, ok], norms[ok]
        per[name] = {}
        for b in betas:
            if F.shape[1] == 0:
                continue
            r = fn.g2_beta(g, F, b, tol=tol * 1e-2 * float(norms.min()))
            dev = np.abs(l2_norm(g.m, r.values) / norms - 1.0)
            i = int(np.argmax(dev))
            per[name][repr(float(b))] = {"max_deviation": float(dev[i]), "terms": r.terms}
            if dev[i] >= worst:
                worst, wit = float(dev[i]), {"graph": name, "beta": b, "trial": i, "seed": seed}
    return VerificationReport(
        check="isometry", graph=",".join(n for n, _ in resolved),
        params={"betas": list(betas), "trials": trials, "seed": seed},
        status="pass" if worst <= tol else "fail", constants={"max_deviation": worst},
        witness=wit, tolerances={"deviation": tol},
        details={"per_graph": per, "excluded_nonzero_mean": excluded})


@_timed
def norm_equiv_suite(graphs, functional: str = "g", ps: Sequence[float] = (1.5, 2.0, 4.0),
                     beta: float = 0.5, trials: int = 100, seed: int = 0,
                     growth: float = DEFAULT_GROWTH, tol: float = 1e-8) -> VerificationReport:
    """Envelopes of ``||T f||_p / ||f||_p`` for ``T`` in ``{g, g_tilde, g2}`` across a family.

    For each ``p`` the maximum and the reciprocal of the minimum ratio are
    fitted per graph; the check passes when neither grows by more than
    ``growth`` from the first (smallest) to the last (largest) graph.
    ``g_tilde`` with ``p > 2`` is marked conditional.
    """
    resolved = _resolve(graphs)
    table = {repr(float(p)): {"max": [], "inv_min": []} for p in ps}
    wit = {}
    for name, g in resolved:
        _require_LB(name, g)
        F, labels = mean_zero_ensemble(g, _rng(seed, name, "ne"), trials)
        T = _square(functional, g, F, beta, tol).values
        for p in ps:
            r = fn.lp_norm(g, T, p) / fn.lp_norm(g, F, p)
            key = repr(float(p))
            table[key]["max"].append(float(r.max()))
            table[key]["inv_min"].append(float(1.0 / r.min()))
            wit.setdefault(key, {})[name] = {"argmax": labels[int(np.argmax(r))],
                                             "argmin": labels[int(np.argmin(r))]}
    growths = {k: {"max": _growth(v["max"]), "inv_min": _growth(v["inv_min"])}
               for k, v in table.items()}
    ok = all(x <= growth for gg in growths.values() for x in gg.values())
    conditional = functional.startswith("g_tilde") and any(p > 2 for p in ps)
    return VerificationReport(
        check=f"norm-equiv:{functional}", graph=",".join(n for n, _ in resolved),
        params={"functional": functional, "ps": list(ps), "beta": beta, "trials": trials,
                "seed": seed},
        status="pass" if ok else "fail",
        constants={"envelopes": table, "growth": growths},
        witness={"seed": seed, "per_p": wit}, tolerances={"growth": growth, "series_tol": tol},
        details={"conditional": conditional})


def weak11_sup(values: np.ndarray, m: np.ndarray) -> float:
    """Exact ``sup_lambda lambda * m({v > lambda})`` = ``max_k v_(k) m({v >= v_(k)})``."""
    order = np.argsort(-values, kind="stable")
    v = values[order]
    mass = np.cumsum(m[order])
    # ties: the set {v >= v_k} includes every tied entry
    last = np.r_[v[1:] != v[:-1], True]
    return float(np.max(np.where(last, v * mass, 0.0))) if len(v) else 0.0


@_timed
def weak11_suite(graphs, functional: str = "g", beta: float = 1.0, sources: int = 4,
                 seed: int = 0, growth: float = DEFAULT_GROWTH, tol: float = 1e-10
                 ) -> VerificationReport:
    """``sup_lambda lambda m({T f > lambda}) / ||f||_1`` for ``f = delta_x0 / m(x0)``."""
    resolved = _resolve(graphs)
    sups, wit = [], {}
    for name, g in resolved:
        _require_LB(name, g)
        rng = _rng(seed, name, "weak")
        xs = np.sort(rng.choice(g.n, size=min(sources, g.n), replace=False))
        F = np.zeros((g.n, len(xs)))
        F[xs, np.arange(len(xs))] = 1.0 / g.m[xs]
        T = _square(functional, g, F, beta, tol).values
        vals = [weak11_sup(T[:, i], g.m) for i in range(len(xs))]
        i = int(np.argmax(vals))
        sups.append(float(vals[i]))
        wit[name] = {"source": int(xs[i]), "seed": seed}
    gr = _growth(sups)
    return VerificationReport(
        check=f"weak11:{functional}", graph=",".join(n for n, _ in resolved),
        params={"functional": functional, "beta": beta, "sources": sources, "seed": seed},
        status="pass" if gr <= growth else "fail",
        constants={"sup": sups, "growth": gr}, witness=wit,
        tolerances={"growth": growth, "series_tol": tol})


def _set_distance(g, E, F):
    D = g.distance_matrix
    return int(D[np.ix_(E, F)].min())


@_timed
def gaffney_suite(graph, js: Sequence[int] = (0, 1, 2), L: int = 256, radius: int = 2,
                  centers: Sequence[int] | None = None, annuli: Sequence[int] = (2, 3, 4),
                  seed: int = 0, n_dirac: int = 4) -> VerificationReport:
    """Envelope fits for the localised decay of ``(I-P)^j P^l f`` between distant sets.

    Pairs are ``(B, C_k(B))`` and ``(C_k(B), B)`` with ``x0`` the centre
    of ``B``; ``f`` runs over normalised Diracs in ``F`` and the
    normalised indicator of ``F``.  The four side conditions on ``(x0, E,
    F, l)`` are evaluated per sample; samples satisfying none are dropped.
    Three quantities are fitted against ``X = d(E,F)^2 / l``::

        GT2    ||(I-P)^j P^l f||_L2(E) l^j V(x0, s)^(1/2) / ||f||_L1(F)
        GGT2   ||grad (I-P)^j P^l f||_L2(E) l^(j+1/2) V(x0, s)^(1/2) / ||f||_L1(F)
        GGT2'  ||grad (I-P)^j P^l f||_L2(E) l^(j+1/2) / ||f||_L2(F)

    with ``s = ceil(sqrt l)``.
    """
    (name, g), = _resolve([graph])
    _require_LB(name, g)
    from .kernel import sqrt_radius
    rng = _rng(seed, name, "gaffney")
    centers = [0] if centers is None else list(centers)
    P = markov_matrix(g)
    jmax = max(js)
    samples = {(form, j): ([], []) for form in ("GT2", "GGT2", "GGT2_L2") for j in js}
    dropped, skipped, used_pairs = 0, [], 0
    conds = {"i": 0, "ii": 0, "iii": 0, "iv": 0}
    for x0 in centers:
        B = g.ball(x0, radius).members
        dist0 = g.distances_from(x0)
        for k in annuli:
            C = annulus(g, g.ball(x0, radius), k)
            if len(C) == 0:
                skipped.append({"center": x0, "annulus": k, "note": "empty annulus"})
                continue
            for E, F in ((B, C), (C, B)):
                dEF = _set_distance(g, E, F)
                if dEF == 0:
                    continue
                used_pairs += 1
                picks = rng.choice(F, size=min(n_dirac, len(F)), replace=False)
                cols = []
                for y in picks:
                    f = np.zeros(g.n)
                    f[y] = 1.0 / g.m[y]
                    cols.append(f)
                ind = np.zeros(g.n)
                ind[F] = 1.0 / g.m[F].sum()
                cols.append(ind)
                Fm = np.column_stack(cols)
                l1 = g.m @ np.abs(Fm)
                l2 = np.sqrt(g.m @ Fm ** 2)
                supF, supE = dist0[F].max(), dist0[E].max()
                # trajectory u_l = P^l f for l = 0..L + jmax
                U = [Fm]
                for _ in range(L + jmax):
                    U.append(P @ U[-1])
                U = np.stack(U)
                for j in js:
                    Dj = U
                    for _ in range(j):
                        Dj = Dj[:-1] - Dj[1:]
                    for l in range(1, L + 1):
                        c = {"i": supF <= 3 * dEF, "ii": supF ** 2 <= l,
                             "iii": supE <= 3 * dEF, "iv": supE ** 2 <= l}
                        if not any(c.values()):
                            dropped += 1
                            continue
                        if j == js[0]:
                            for key, v in c.items():
                                conds[key] += int(v)
                        v = Dj[l]
                        vol = math.sqrt(g.volume(x0, int(sqrt_radius(l))))
                        a = np.sqrt(g.m[E] @ v[E] ** 2)
                        gr = np.sqrt(g.m[E] @ gradient_sq(g, v)[E])
                        X = dEF * dEF / l
                        for form, val in (("GT2", a * l ** j * vol / l1),
                                          ("GGT2", gr * l ** (j + 0.5) * vol / l1),
                                          ("GGT2_L2", gr * l ** (j + 0.5) / l2)):
                            xs, ys = samples[(form, j)]
                            xs.extend([X] * len(val))
                            ys.extend(val.tolist())
    constants, plots = {}, {}
    ok = True
    worst_violation = -math.inf
    for (form, j), (xs, ys) in samples.items():
        if not xs:
            continue
        X, Y = np.array(xs), np.array(ys)
        env = fit_envelope(X, Y)
        viol = env.max_violation(X[Y > 0], Y[Y > 0])
        worst_violation = max(worst_violation, viol)
        key = f"{form}:j={j}"
        constants[key] = {"C": env.C, "c": env.c, "degenerate": env.degenerate,
                          "n_samples": env.n_samples, "max_violation": viol,
                          "regression": env.regression}
        ok &= env.c > 0 and viol <= 1e-12 and not env.degenerate
        plots[key] = _envelope_plot(X, Y, env)
    return VerificationReport(
        check="gaffney", graph=name,
        params={"js": list(js), "L": L, "radius": radius, "centers": centers,
                "annuli": list(annuli), "seed": seed},
        status="fitted" if ok else "fail", constants=constants,
        witness={"seed": seed}, tolerances={"violation": 1e-12},
        details={"pairs": used_pairs, "dropped_samples": dropped, "skipped": skipped,
                 "side_conditions": conds, "worst_violation": worst_violation},
        plots=plots)


def _envelope_plot(X, Y, env):
    keep = Y > 0
    X, Y = X[keep], Y[keep]
    order = np.lexsort((-Y, X))
    first = np.r_[True, X[order][1:] != X[order][:-1]]
    hx, hy = X[order][first], Y[order][first]
    return {"samples": (hx, hy), "envelope": (hx, env.bound(hx))}


def _decay_profile(g, F, q, N):
    """``sqrt(n) ||grad P^n f||_q / ||f||_q`` for ``n = 1..N`` (columns of ``F``).

    Iterates on the mean-zero part, re-centred each step, so roundoff in
    the constant component cannot create a gradient floor.
    """
    P = markov_matrix(g)
    den = fn.lp_norm(g, F, q)
    v = project_mean_zero(g, F)
    out = np.empty((N, F.shape[1]))
    for n in range(1, N + 1):
        v = P @ v
        v = project_mean_zero(g, v)
        out[n - 1] = math.sqrt(n) * fn.lp_norm(g, np.sqrt(gradient_sq(g, v)), q) / den
    return out


@_timed
def gradient_decay_suite(graph, qs: Sequence[float] = (1.5,), N: int = 10_000, trials: int = 16,
                         seed: int = 0, trend_tol: float = 1e-9) -> VerificationReport:
    """``sup_n sqrt(n) ||grad P^n f||_q / ||f||_q`` over nonnegative ensembles.

    The ensemble maximum over the last decade ``n in [N/10, N]`` must be
    nonincreasing up to ``trend_tol`` relative.
    """
    (name, g), = _resolve([graph])
    eps = _require_LB(name, g)
    F, labels = nonneg_ensemble(g, _rng(seed, name, "gd"), trials)
    consts, ok, wit = {}, True, {}
    for q in qs:
        prof = _decay_profile(g, F, q, N)
        env = prof.max(axis=1)
        n_arg, col = np.unravel_index(int(np.argmax(prof)), prof.shape)
        tail = env[max(0, N // 10 - 1):]
        rises = tail[1:] - tail[:-1] * (1 + trend_tol)
        worst_rise = float(rises.max()) if len(rises) else 0.0
        nonincr = worst_rise <= 0
        ok &= nonincr
        key = repr(float(q))
        consts[key] = {"sup": float(env.max()), "argmax_n": int(n_arg) + 1,
                       "last_decade_max": float(tail.max()) if len(tail) else 0.0,
                       "nonincreasing": nonincr, "worst_rise": worst_rise}
        wit[key] = {"function": labels[int(col)], "seed": seed}
    return VerificationReport(
        check="gradient-decay", graph=name, params={"qs": list(qs), "N": N, "trials": trials,
                                                    "seed": seed},
        status="fitted" if ok else "fail", constants=consts, witness=wit,
        tolerances={"trend": trend_tol},
        details={"LB": eps, "LDV": check_LDV(g)})


def _nq_terms_needed(g, F, q, tol):
    dec = decompose(g)
    rho = dec.rho
    dev2 = float(np.max(l2_norm(g.m, project_mean_zero(g, F)) ** 2))
    if rho == 0 or dev2 == 0:
        return 1
    A = 2 * (q - 1) * (1 - dec.lambda_min) * dev2 / ((1 - rho * rho) * g.m.min())
    return max(1, int(math.ceil(math.log(tol / A) / (2 * math.log(rho)))))


@_timed
def nq_suite(graphs, qs: Sequence[float] = (1.2, 1.5, 2.0), trials: int = 100, n_max: int = 100,
             seed: int = 0, growth: float = DEFAULT_GROWTH, atol: float = 1e-12,
             series_tol: float = 1e-10, decay_N: int = 200) -> VerificationReport:
    """Positivity, sandwich bound and square-function envelope for the ``N_q`` family.

    For ``f >= 0`` and ``n <= n_max``: ``N_q(P^n f) >= -atol`` and
    ``tilde N_q(P^n f) <= s N_q(P^n f) + atol`` with ``s = 1/(1-(1-eps)^(q-1))``.
    Also records ``||g_0q f||_q / ||f||_q`` (cross-size growth judged),
    ``sup_n sqrt(n) ||N_q(P^n f)^(1/2)||_q / ||f||_q`` and the constant of
    ``|grad P^n f|^2 <= c A(tilde N_q(P^n f))``.
    """
    resolved = _resolve(graphs)
    per, ok, wit = {}, True, {}
    env_by_q = {repr(float(q)): [] for q in qs}
    for name, g in resolved:
        eps = _require_LB(name, g)
        F, labels = nonneg_ensemble(g, _rng(seed, name, "nq"), trials)
        P = markov_matrix(g)
        per[name] = {"LB": eps}
        for q in qs:
            key = repr(float(q))
            s = fn.sandwich_constant(eps, q)
            u = F
            min_pos, max_sand = math.inf, -math.inf
            decay = 0.0
            den = fn.lp_norm(g, F, q)
            for n in range(max(n_max, decay_N) + 1):
                Nq = fn.N_q(g, np.maximum(u, 0.0), q)
                if n <= n_max:
                    Nt = fn.tilde_N_q(g, np.maximum(u, 0.0), q)
                    mp = float(Nq.min())
                    if mp < min_pos:
                        min_pos = mp
                        wit.setdefault(name, {})[f"positivity:{key}"] = {
                            "n": n, "function": labels[int(np.argmin(Nq.min(axis=0)))],
                            "seed": seed}
                    ms = float((Nt - s * Nq).max())
                    if ms > max_sand:
                        max_sand = ms
                        wit.setdefault(name, {})[f"sandwich:{key}"] = {
                            "n": n, "function": labels[int(np.argmax((Nt - s * Nq).max(axis=0)))],
                            "seed": seed}
                if n >= 1:
                    d = math.sqrt(n) * fn.lp_norm(g, np.sqrt(np.maximum(Nq, 0.0)), q) / den
                    decay = max(decay, float(d.max()))
                u = P @ u
            N = _nq_terms_needed(g, F, q, series_tol)
            G = fn.g_tilde_0q(g, F, q, N)
            ratio = fn.lp_norm(g, G.values, q) / den
            c_dom, _ = fn.gradient_domination_constant(g, F[:, :min(8, F.shape[1])], q,
                                                       range(0, 21, 5))
            env_by_q[key].append(float(ratio.max()))
            passed = min_pos >= -atol and max_sand <= atol
            ok &= passed
            per[name][key] = {"min_N_q": min_pos, "max_sandwich_excess": max_sand,
                              "sandwich_constant": s, "g0q_ratio_max": float(ratio.max()),
                              "g0q_terms": G.terms, "sqrt_n_decay_sup": decay,
                              "gradient_domination_constant": c_dom}
    growths = {k: _growth(v) for k, v in env_by_q.items()}
    ok &= all(v <= growth for v in growths.values())
    return VerificationReport(
        check="nq", graph=",".join(n for n, _ in resolved),
        params={"qs": list(qs), "trials": trials, "n_max": n_max, "seed": seed},
        status="pass" if ok else "fail",
        constants={"g0q_envelope": env_by_q, "growth": growths,
                   "extrapolation": {k: extrapolate(v) for k, v in env_by_q.items()}},
        witness=wit, tolerances={"atol": atol, "growth": growth, "series_tol": series_tol},
        details={"per_graph": per})


@_timed
def kernel_suite(graph, L: int = 200, sources: int = 20, pairs: int = 100, seed: int = 0,
                 atol: float = 1e-12, ue_l: tuple = (4, 400), ue_x: tuple = (1, 20),
                 r2_min: float = 0.9) -> VerificationReport:
    """Mass, symmetry, semigroup and finite speed of ``p_l``, plus DUE, UE and TD-UE fits."""
    (name, g), = _resolve([graph])
    rng = _rng(seed, name, "kernel")
    xs = np.sort(rng.choice(g.n, size=min(sources, g.n), replace=False))
    T = kernel_tables(g, xs, L)
    mass = float(np.max(np.abs(T[:, 1:, :] @ g.m - 1.0)))
    sym = 0.0
    for a, x in enumerate(xs):
        for b, y in enumerate(xs):
            sym = max(sym, float(np.max(np.abs(T[a, :, y] - T[b, :, x]))))
    speed = 0
    for a, x in enumerate(xs):
        d = g.distances_from(int(x))
        l = np.arange(L + 1)[:, None]
        speed += int(np.count_nonzero(T[a][d[None, :] > l]))
    ck = 0.0
    tabs = {}
    for _ in range(pairs):
        l, k = (int(v) for v in rng.integers(0, L // 2 + 1, size=2))
        x, y = (int(v) for v in rng.integers(0, g.n, size=2))
        for s in (x, y):
            if s not in tabs:
                tabs[s] = kernel_table(g, s, L).values
        lhs = tabs[x][l + k, y]
        rhs = float(np.sum(tabs[x][l] * tabs[y][k] * g.m))
        ck = max(ck, abs(lhs - rhs))
    due64 = due_check(g, 64)
    due256 = due_check(g, 256)
    src = [int(xs[0])]
    ue = ue_fit(g, ue_l, sources=src, x_range=ue_x)
    td = tdue_fit(g, [1], ue_l, sources=src, x_range=ue_x)
    identities = mass <= atol and sym <= atol and ck <= atol and speed == 0
    fits = ue.c > 0 and ue.r2 >= r2_min and td.c > 0 and math.isfinite(td.C)
    stable = abs(due256.constant / due64.constant - 1) <= 0.05
    return VerificationReport(
        check="kernel", graph=name,
        params={"L": L, "sources": [int(x) for x in xs], "pairs": pairs, "seed": seed,
                "ue_l": list(ue_l), "ue_x": list(ue_x)},
        status="pass" if identities and fits and stable else "fail",
        constants={"mass_error": mass, "symmetry_error": sym, "semigroup_error": ck,
                   "finite_speed_violations": speed,
                   "DUE_64": due64.constant, "DUE_256": due256.constant,
                   "UE": ue.envelope.as_dict(), "TDUE_1": td.envelope.as_dict()},
        witness={"DUE": list(due256.witness), "seed": seed},
        tolerances={"atol": atol, "DUE_stability": 0.05, "r2_min": r2_min},
        plots={"UE": _envelope_plot(ue.X, ue.values, ue.envelope),
               "TDUE_1": _envelope_plot(td.X, td.values, td.envelope)})


@_timed
def cross_route_suite(graph, betas: Sequence[float] = (-0.3, 0.4, 0.7, 1.5), trials: int = 50,
                      seed: int = 0, tol: float = 1e-6) -> VerificationReport:
    """Taylor-route versus spectral-route ``(I-P)^beta f`` on mean-zero ``f``."""
    (name, g), = _resolve([graph])
    _require_LB(name, g)
    F = project_mean_zero(g, _rng(seed, name, "route").standard_normal((g.n, trials)))
    F = F / l2_norm(g.m, F)
    per, worst = {}, 0.0
    for b in betas:
        h, tail = fractional_power(g, b, F, route="taylor", tol=tol * 1e-1, full_output=True)
        s = fractional_power(g, b, F, route="spectral")
        err = float(np.max(np.abs(h - s)))
        per[repr(float(b))] = {"max_abs_error": err, "certified_tail": tail}
        worst = max(worst, err)
    return VerificationReport(
        check="cross-route", graph=name, params={"betas": list(betas), "trials": trials,
                                                 "seed": seed},
        status="pass" if worst <= tol else "fail", constants={"max_abs_error": worst},
        witness={"seed": seed}, tolerances={"tol": tol}, details={"per_beta": per})


@_timed
def maximal_suite(graph, K: int = 64, trials: int = 8, seed: int = 0) -> VerificationReport:
    """Fitted ``C`` in ``|P^k f(x)| <= C Mf(x0)`` for ``d(x, x0) <= sqrt(k)``."""
    (name, g), = _resolve([graph])
    F = _rng(seed, name, "max").standard_normal((g.n, trials))
    best, wit = 0.0, None
    for i in range(trials):
        c, w = fn.domination_constant(g, F[:, i], K)
        if c > best:
            best, wit = c, {"trial": i, "k": w[0], "x": w[1], "seed": seed}
    M = fn.maximal(g, F)
    dominated = bool(np.all(M >= np.abs(F) - 1e-12))
    return VerificationReport(
        check="maximal", graph=name, params={"K": K, "trials": trials, "seed": seed},
        status="fitted" if dominated and math.isfinite(best) else "fail",
        constants={"domination_C": best}, witness=wit,
        details={"Mf_ge_abs_f": dominated})


@_timed
def geometry_suite(graph, r_max: int | None = None, poincare_centers: int = 4, seed: int = 0
                   ) -> VerificationReport:
    """(LB), (LB2), (LDV), doubling and the Poincare constant estimate."""
    from .graph import check_LB2, poincare_constant
    (name, g), = _resolve([graph])
    r_max = r_max or max(1, g.diameter // 2)
    rng = _rng(seed, name, "geom")
    centers = sorted(int(c) for c in rng.choice(g.n, size=min(poincare_centers, g.n),
                                                replace=False))
    dv = doubling_constant(g, r_max)
    pc = poincare_constant(g, 2.0, r_max=min(r_max, 4), centers=centers, seed=seed)
    consts = {"LB": check_LB(g), "LB2": check_LB2(g), "LDV": check_LDV(g),
              "doubling_constant": dv.constant, "doubling_exponent": dv.exponent,
              "poincare_lower_bound": pc.constant, "poincare_exact": pc.exact}
    return VerificationReport(
        check="geometry", graph=name, params={"r_max": r_max, "centers": centers, "seed": seed},
        status="fitted", constants=consts,
        witness={"doubling": list(dv.witness),
                 "poincare": list(pc.witness) if pc.witness else None},
        details={"poincare_failures": len(pc.failures)})


SUITES = {
    "isometry": isometry_suite,
    "norm-equiv": norm_equiv_suite,
    "weak11": weak11_suite,
    "gaffney": gaffney_suite,
    "gradient-decay": gradient_decay_suite,
    "nq": nq_suite,
    "kernel": kernel_suite,
    "cross-route": cross_route_suite,
    "maximal": maximal_suite,
    "geometry": geometry_suite,
}
# suites that judge a family of graphs together; the others run per graph
FAMILY_SUITES = {"isometry", "norm-equiv", "weak11", "nq"}


# ---- bundles and emission ---------------------------------------------------

def report_merge(items: Iterable) -> dict:
    """Merge reports and bundles into one bundle sorted by ``(check, graph)``."""
    reports = []
    for it in items:
        if isinstance(it, VerificationReport):
            reports.append(it.as_dict())
        elif isinstance(it, dict) and "reports" in it:
            if it.get("schema") != SCHEMA:
                raise SchemaError(f"cannot merge bundle with schema {it.get('schema')!r}; "
                                  f"expected {SCHEMA!r}")
            reports.extend(it["reports"])
        elif isinstance(it, dict):
            reports.append(_jsonable(it))
        else:
            raise TypeError(f"cannot merge {type(it).__name__}")
    reports.sort(key=lambda r: (r["check"], r["graph"], json.dumps(r["params"], sort_keys=True)))
    return {"schema": SCHEMA, "reports": reports}


def bundle_status(bundle: dict) -> str:
    return "fail" if any(r["status"] == "fail" for r in bundle["reports"]) else "pass"


def dumps_json(bundle: dict) -> str:
    return json.dumps(bundle, sort_keys=True, indent=2) + "\n"


def _flatten(prefix, obj, out):
    if isinstance(obj, dict):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else str(k), obj[k], out)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, out)
    else:
        out.append((prefix, obj))


def dumps_csv(bundle: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "graph", "status", "key", "value"])
    for r in bundle["reports"]:
        rows = []
        _flatten("", r["constants"], rows)
        for k, v in rows:
            w.writerow([r["check"], r["graph"], r["status"], k, v])
    return buf.getvalue()


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_.=" else "_" for c in name)


def emit(bundle: dict, out_dir, formats: Sequence[str] = ("json",),
         reports: Sequence[VerificationReport] = ()) -> list[Path]:
    """Write ``report.json``, ``report.csv`` and/or ``plot/*.dat`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt == "json":
            p = out / "report.json"
            p.write_text(dumps_json(bundle), encoding="utf-8")
            written.append(p)
        elif fmt == "csv":
            p = out / "report.csv"
            p.write_text(dumps_csv(bundle), encoding="utf-8")
            written.append(p)
        elif fmt == "plot":
            pdir = out / "plot"
            pdir.mkdir(exist_ok=True)
            for rep in sorted(reports, key=lambda r: (r.check, r.graph)):
                for key in sorted(rep.plots):
                    data = rep.plots[key]
                    p = pdir / _safe(f"{rep.check}__{rep.graph}__{key}.dat")
                    lines = ["# block 0: X max-sample; block 1: X envelope"]
                    for block in ("samples", "envelope"):
                        X, Y = data[block]
                        lines += [f"{x!r} {y!r}" for x, y in zip(np.asarray(X).tolist(),
                                                               np.asarray(Y).tolist())]
                        lines += ["", ""]
                    p.write_text("\n".join(lines), encoding="utf-8")
                    written.append(p)
        else:
            raise ValueError(f"unknown format {fmt!r}")
    return written
