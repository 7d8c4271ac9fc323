"""Gaussian-type upper envelopes ``value <= C exp(-c X)`` fitted to samples.

The envelope is the primary estimate: among lines ``ln C - c X`` lying on
or above every sample of ``Y = ln(value)``, take the one with the smallest
mean gap to the samples in the decaying tail, i.e. those with ``X`` at or
beyond the location of the largest value.  This is the upper-hull facet
above the tail mean of ``X``; profiles that rise before they decay (time
differences of the kernel do) still get the rate of their Gaussian tail.
An ordinary least-squares fit of ``Y`` on ``X`` is kept for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Envelope:
    """Fitted bound ``value <= C * exp(-c * X)``.

    Attributes
    ----------
    C, c : float
        Envelope constants.  ``ln C = max(Y + c X)`` so no sample lies above.
    degenerate : bool
        True when the samples cannot identify a decay rate (all ``X <= 1``
        or fewer than two distinct ``X``); then ``c = 0`` and ``C = max value``.
    regression : dict
        Least-squares ``C``, ``c`` and ``r2`` of ``Y`` on ``X``.
    witness : int
        Index of a sample touching the envelope.
    """

    C: float
    c: float
    degenerate: bool
    n_samples: int
    regression: dict = field(default_factory=dict)
    witness: int | None = None
    x_range: tuple = (float("nan"), float("nan"))
    log_C: float | None = None  # exact ln C; C itself may overflow

    @property
    def lnC(self) -> float:
        if self.log_C is not None:
            return self.log_C
        return float(np.log(self.C)) if self.C > 0 else float("-inf")

    def bound(self, X):
        with np.errstate(over="ignore"):
            return np.exp(self.lnC - self.c * np.asarray(X, dtype=float))

    def max_violation(self, X, values) -> float:
        """``max(value / bound - 1)``; nonpositive when the envelope holds.

        Evaluated in log space so that huge ``C`` with fast decay stays finite.
        """
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return float("-inf")
        if self.lnC == float("-inf"):  # the all-zero envelope; C alone may just underflow
            return float("inf") if np.any(values > 0) else -1.0
        with np.errstate(divide="ignore"):
            logr = np.log(values) - (self.lnC - self.c * np.asarray(X, dtype=float))
        return float(np.max(np.expm1(logr)))

    def as_dict(self) -> dict:
        return {"C": self.C, "lnC": self.lnC, "c": self.c, "degenerate": self.degenerate,
                "n_samples": self.n_samples, "regression": dict(self.regression),
                "x_range": list(self.x_range)}


def _upper_hull(x, y):
    """Upper convex hull of points sorted by ``x`` (distinct ``x``), monotone chain."""
    hull: list[int] = []
    for i in range(len(x)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b if it lies on or below the chord a -> i
            if (y[b] - y[a]) * (x[i] - x[a]) <= (y[i] - y[a]) * (x[b] - x[a]):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.array(hull)


def regression(X, Y) -> dict:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    dx = X - X.mean() if len(X) else X
    sxx = float(np.dot(dx, dx))
    # sxx == 0 also catches spreads so small that their squares underflow
    if len(X) < 2 or not sxx > 0:
        return {"C": float(np.exp(Y.max())) if len(Y) else float("nan"), "c": 0.0,
                "r2": float("nan")}
    b = float(np.dot(dx, Y - Y.mean())) / sxx
    a = float(Y.mean()) - b * float(X.mean())
    resid = Y - (a + b * X)
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    with np.errstate(over="ignore"):
        C = float(np.exp(a))
    return {"C": C, "c": float(-b), "r2": r2}


def fit_envelope(X, values) -> Envelope:
    """Fit ``values <= C exp(-c X)``; nonpositive values are dropped from the fit."""
    X = np.asarray(X, dtype=float).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if X.shape != values.shape:
        raise ValueError("X and values must have the same length")
    keep = values > 0
    if not np.any(keep):
        if len(values) == 0:
            raise ValueError("empty sample")
        # every value is zero: any bound holds
        return Envelope(C=0.0, c=0.0, degenerate=True, n_samples=len(values),
                        regression={"C": 0.0, "c": 0.0, "r2": float("nan")})
    Xk, Y = X[keep], np.log(values[keep])
    reg = regression(Xk, Y)
    xr = (float(Xk.min()), float(Xk.max()))
    idx = np.flatnonzero(keep)
    ux = np.unique(Xk)
    def flat():
        k = int(np.argmax(Y))
        return Envelope(C=float(values[idx[k]]), c=0.0, degenerate=True,
                        n_samples=len(Xk), regression=reg, witness=int(idx[k]), x_range=xr)

    if len(ux) < 2 or ux[-1] <= 1.0:
        return flat()
    # top of each X column
    order = np.lexsort((-Y, Xk))
    first = np.ones(len(order), dtype=bool)
    first[1:] = Xk[order][1:] != Xk[order][:-1]
    hx, hy = Xk[order][first], Y[order][first]
    hull = _upper_hull(hx, hy)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        cands = -np.diff(hy[hull]) / np.diff(hx[hull])
        cands = cands[np.isfinite(cands)]  # near-coincident X can overflow a slope
        peak = Xk[Y == Y.max()].min()  # ties resolved to the first location, not input order
        xbar = Xk[Xk >= peak].mean()
        # mean tail gap for slope c is max(Y + cX) - c*xbar - mean(Y_tail)
        gaps = (np.max(hy[hull][None, :] + cands[:, None] * hx[hull][None, :], axis=1)
                - cands * xbar)
    cands, gaps = cands[np.isfinite(gaps)], gaps[np.isfinite(gaps)]
    if len(cands) == 0:
        return flat()
    best = np.flatnonzero(gaps <= gaps.min() + 1e-12 * (1 + abs(gaps.min())))
    c = float(cands[best].max())
    z = Y + c * Xk
    k = int(np.argmax(z))
    # a few ulps of headroom so re-evaluating ln v - (ln C - c X) never rounds above 0
    pad = 8 * np.finfo(float).eps * max(1.0, float(np.abs(c * Xk).max()), float(np.abs(Y).max()))
    lnC = float(z[k]) + pad
    with np.errstate(over="ignore"):
        C = float(np.exp(lnC))
    return Envelope(C=C, c=c, degenerate=False, n_samples=len(Xk), regression=reg,
                    witness=int(idx[k]), x_range=xr, log_C=lnC)
