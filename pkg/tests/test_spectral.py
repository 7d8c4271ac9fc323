import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpgraph.errors import ConvergenceError, DomainError, PreconditionError, ResourceLimitError
from lpgraph.generators import cycle, torus
from lpgraph.graph import check_LB
from lpgraph.kernel import apply_P, apply_P_power
from lpgraph.spectral import (SpectralSymbol, apply_phi, check_spectrum_vs_LB, decompose,
                              fractional_power, l2_norm, plus_power, project_mean_zero,
                              taylor_apply)


@pytest.fixture(scope="module")
def t8():
    return torus(2, 8)


def mean_zero(g, k, seed=0):
    return project_mean_zero(g, np.random.default_rng(seed).standard_normal((g.n, k)))


def test_two_vertex_spectrum(two_vertex):
    dec = decompose(two_vertex)
    assert np.allclose(dec.values, [1.0, 0.0], atol=1e-15)
    assert dec.values[0] == 1.0


def test_bipartite_cycle_reaches_minus_one():
    dec = decompose(cycle(8, loop=0))
    assert dec.lambda_min == pytest.approx(-1.0, abs=1e-12)
    k = np.arange(8)
    assert np.allclose(np.sort(dec.values), np.sort(np.cos(2 * np.pi * k / 8)), atol=1e-12)


def test_lb_bound(graphs):
    lam, bound = check_spectrum_vs_LB(graphs("torus:2x16:loop=1"))
    assert bound == pytest.approx(-0.6) and lam >= bound - 1e-10


def test_orthonormal_and_reconstruction(t8):
    dec = decompose(t8)
    G = dec.vectors.T @ (dec.vectors * t8.m[:, None])
    assert np.max(np.abs(G - np.eye(t8.n))) <= 1e-10
    f = np.random.default_rng(1).standard_normal(t8.n)
    assert np.allclose(apply_phi(dec, "x", f), apply_P(t8, f), rtol=0, atol=1e-10)
    assert np.allclose(dec.synthesize(dec.coefficients(f)), f, atol=1e-12)
    assert 0 < dec.rho < 1 and dec.gap == pytest.approx(1 - dec.values[1])


def test_dense_limit(monkeypatch):
    monkeypatch.setenv("LPGRAPH_DENSE_LIMIT", "10")
    with pytest.raises(ResourceLimitError):
        decompose(torus(2, 5))


def test_symbol_grammar():
    s = SpectralSymbol.parse("(1-x)^0.5*(1+x)^1*x^3")
    assert (s.a, s.b, s.c, s.k) == (0.5, 1.0, 0.0, 3)
    assert SpectralSymbol.parse(str(s)) == s
    assert SpectralSymbol.parse("(1-x^2)^-0.25").singular_at_one()
    assert SpectralSymbol.parse("(1-x^2)^-0.25").singular_at_minus_one()
    assert SpectralSymbol.parse("1") == SpectralSymbol()
    prod = SpectralSymbol(a=0.5) * SpectralSymbol(a=0.25, k=2)
    assert prod == SpectralSymbol(a=0.75, k=2)
    with pytest.raises(ValueError):
        SpectralSymbol.parse("(2-x)^3")


def test_limits_at_edges():
    s = SpectralSymbol(a=-0.5, c=0.5)  # (1-x)^0 (1+x)^0.5 near x = 1
    assert s.limit_at(1.0) == pytest.approx(2 ** 0.5)
    assert SpectralSymbol(b=1.0, k=3).limit_at(-1.0) == 0.0
    assert SpectralSymbol(k=3).limit_at(-1.0) == -1.0


def test_apply_phi_examples(two_vertex, t8):
    f = np.random.default_rng(2).standard_normal(t8.n)
    assert np.allclose(apply_phi(t8, "(1-x)", f), f - apply_P(t8, f), atol=1e-12)
    g = np.array([1.0, -1.0])
    assert np.allclose(apply_phi(two_vertex, "(1-x)^0.5", g), g, atol=1e-15)
    with pytest.raises(DomainError):
        apply_phi(t8, "(1-x)^-0.25", f)
    out, removed = apply_phi(t8, "(1-x)^-0.25", f, mean_zero_only=True, full_output=True)
    assert removed == pytest.approx(np.dot(t8.m, f) / t8.m.sum(), rel=1e-10)
    with pytest.raises(DomainError):
        apply_phi(cycle(8, loop=0), "(1+x)^-0.5", np.ones(8))


def test_multiplicativity(t8):
    F = np.random.default_rng(3).standard_normal((t8.n, 4))
    a, b = SpectralSymbol(a=0.3, k=1), SpectralSymbol(b=0.7, c=0.2)
    lhs = apply_phi(t8, a * b, F)
    rhs = apply_phi(t8, a, apply_phi(t8, b, F))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


@pytest.mark.parametrize("beta", [0.3, 0.5, 1.2])
def test_plus_minus_identity(t8, beta):
    F = mean_zero(t8, 4)
    lhs = plus_power(t8, beta, fractional_power(t8, beta, F, route="spectral"))
    rhs = fractional_power(t8, beta, F, route="spectral", square=True)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_power_norm_matches_iteration(t8):
    f = np.random.default_rng(4).standard_normal(t8.n)
    for k in (1, 5, 12):
        a = l2_norm(t8.m, apply_phi(t8, SpectralSymbol(k=k), f))
        b = l2_norm(t8.m, apply_P_power(t8, f, k))
        assert a == pytest.approx(b, rel=1e-10)


def test_taylor_basic(two_vertex, t8):
    f = np.random.default_rng(5).standard_normal(t8.n)
    r = taylor_apply(t8, 0.0, f)
    assert r.terms == 1 and np.array_equal(r.values, f)
    g = np.array([1.0, -1.0])
    assert np.allclose(taylor_apply(two_vertex, -0.5, g).values, g, atol=1e-15)
    with pytest.raises(PreconditionError):
        taylor_apply(t8, -0.3, f)
    with pytest.raises(ConvergenceError):
        taylor_apply(cycle(8, loop=0), -0.3, project_mean_zero(cycle(8, loop=0), np.eye(8)[0]))


def test_taylor_vs_spectral(t8):
    F = mean_zero(t8, 8)
    r = taylor_apply(t8, -0.3, F, tol=1e-6)
    s = apply_phi(t8, "(1-x)^-0.3", F, mean_zero_only=True)
    assert np.max(l2_norm(t8.m, r.values - s)) <= 1e-6


def test_taylor_tail_is_honored(t8):
    F = mean_zero(t8, 4, seed=6)
    coarse = taylor_apply(t8, -0.4, F, tol=1e-4)
    fine = taylor_apply(t8, -0.4, F, tol=1e-5)
    assert np.max(l2_norm(t8.m, fine.values - coarse.values)) < coarse.tail
    exact = apply_phi(t8, "(1-x)^-0.4", F, mean_zero_only=True)
    assert np.max(l2_norm(t8.m, coarse.values - exact)) <= coarse.tail


def test_fractional_integer_powers(t8):
    f = np.random.default_rng(7).standard_normal(t8.n)
    d1 = f - apply_P(t8, f)
    assert np.array_equal(fractional_power(t8, 1.0, f), d1)
    assert np.array_equal(fractional_power(t8, 2.0, f), d1 - apply_P(t8, d1))
    with pytest.raises(PreconditionError):
        fractional_power(t8, -0.5, f)


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.45, 2.5).filter(lambda b: abs(b - round(b)) > 1e-3), st.booleans())
def test_routes_agree(beta, square):
    g = torus(2, 6)
    F = mean_zero(g, 3, seed=8)
    a = fractional_power(g, beta, F, route="taylor", tol=1e-9, square=square)
    b = fractional_power(g, beta, F, route="spectral", square=square)
    assert np.max(l2_norm(g.m, a - b)) <= 1e-8


def test_spectrum_bound_property(graphs):
    for spec in ("torus:2x8:loop=0.25", "cycle:15:loop=3", "tree:3,3:loop=1"):
        g = graphs(spec)
        assert decompose(g).lambda_min >= 2 * check_LB(g) - 1 - 1e-10
