import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpgraph.fitting import _upper_hull, fit_envelope, regression


def test_exact_exponential_recovered():
    X = np.linspace(1, 20, 40)
    env = fit_envelope(X, 3.0 * np.exp(-0.7 * X))
    assert env.c == pytest.approx(0.7, rel=1e-10)
    assert env.C == pytest.approx(3.0, rel=1e-10)
    assert env.regression["r2"] == pytest.approx(1.0)
    assert not env.degenerate


def test_rise_then_decay_uses_tail_rate():
    X = np.linspace(0, 30, 121)
    v = X * np.exp(-0.5 * X) + 1e-300
    env = fit_envelope(X, v)
    assert env.max_violation(X, v) <= 1e-12
    # tail rate approaches 0.5 from below (X e^{-X/2} decays a bit slower)
    assert 0.3 < env.c < 0.5


def test_degenerate_inputs():
    env = fit_envelope([0.5, 0.5, 1.0], [2.0, 1.0, 3.0])
    assert env.degenerate and env.c == 0.0 and env.C == 3.0
    env = fit_envelope([4.0, 4.0], [1.0, 2.0])
    assert env.degenerate and env.C == 2.0
    env = fit_envelope([1.0, 2.0, 3.0], [0.0, 0.0, -1.0])
    assert env.degenerate and env.C == 0.0
    with pytest.raises(ValueError):
        fit_envelope([], [])
    with pytest.raises(ValueError):
        fit_envelope([1.0], [1.0, 2.0])


def test_zero_values_are_dropped():
    env = fit_envelope([1.0, 2.0, 3.0, 4.0], [1.0, 0.0, np.exp(-2.0), np.exp(-3.0)])
    assert env.n_samples == 3 and env.c == pytest.approx(1.0)


def test_upper_hull():
    x = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    y = np.array([0.0, 2.0, 1.0, 1.5, 0.0])
    assert _upper_hull(x, y).tolist() == [0, 1, 3, 4]
    assert _upper_hull(x, np.zeros(5)).tolist() == [0, 4]  # collinear points dropped


def test_regression():
    r = regression([1.0, 2.0, 3.0], [-1.0, -2.0, -3.0])
    assert r["c"] == pytest.approx(1.0) and r["C"] == pytest.approx(1.0)
    r = regression([1.0, 1.0], [0.0, 1.0])
    assert r["c"] == 0.0
    r = regression([0.0, 0.0, 5e-324], [0.0, 0.0, 0.0])  # spread underflows when squared
    assert r["c"] == 0.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.0, 50.0), st.floats(-30.0, 5.0)), min_size=3, max_size=40))
def test_envelope_dominates_and_is_optimal(pts):
    X = np.array([p[0] for p in pts])
    Y = np.array([p[1] for p in pts])
    env = fit_envelope(X, np.exp(Y))
    assert env.max_violation(X, np.exp(Y)) <= 1e-12
    if env.degenerate:
        return
    assert env.witness is not None
    # rounding in ln C - c X scales with the largest exponent in play
    tol = 1e-9 + 64 * np.finfo(float).eps * max(1.0, abs(env.c) * X.max(), np.abs(Y).max())
    assert Y[env.witness] + env.c * X[env.witness] == pytest.approx(env.lnC, abs=tol)
    # no supporting line has a smaller mean gap over the tail
    Y = np.log(np.exp(Y))
    tail = X >= X[Y == Y.max()].min()

    def gap(c):
        return np.max(Y + c * X) - c * X[tail].mean() - Y[tail].mean()

    grid = np.linspace(-5, 5, 401)
    assert gap(env.c) <= min(gap(c) for c in grid) + tol
