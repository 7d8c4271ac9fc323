import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpgraph.errors import GraphError, GraphSpecError, ParseError
from lpgraph.generators import (GraphSpec, cayley_abelian, dumps, generate, load, loads,
                                parse_spec, path, random_regular, save, torus, tree)
from lpgraph.graph import check_LB


def test_torus_counts():
    g = generate("torus:2x16:loop=1")
    assert g.n == 256
    assert np.all(g.m == 5.0)
    assert check_LB(g) == pytest.approx(0.2, abs=1e-15)


def test_size_rejections():
    for spec in ("cycle:2", "torus:2x2", "path:1"):
        with pytest.raises(GraphSpecError):
            generate(spec)


def test_path_masses():
    assert path(3, loop=1).m.tolist() == [2.0, 3.0, 2.0]


def test_tree_and_regular_sizes():
    assert tree(2, 3).n == 1 + 2 + 4 + 8
    g = random_regular(30, 3, seed=4)
    assert np.all(g.degree - 1 == 3)  # loops count once in the degree


def test_random_regular_deterministic():
    a = random_regular(40, 3, seed=9)
    b = random_regular(40, 3, seed=9)
    assert (a.weights != b.weights).nnz == 0
    with pytest.raises(GraphSpecError):
        GraphSpec("random-regular", size=(10, 3))
    with pytest.raises(GraphSpecError):
        GraphSpec("torus", size=(2, 8), seed=1)


@pytest.mark.parametrize("spec,deg", [("torus:2x8:loop=1", 4), ("torus:3x5:loop=2", 6),
                                      ("cycle:11:loop=0.5", 2),
                                      ("cayley:12,12:gens=(1,0),(0,1):loop=1", 4),
                                      ("cayley:6,10:gens=(1,0),(0,1),(1,1):loop=1", 6)])
def test_regular_LB_exact(spec, deg):
    g = generate(spec)
    lam = parse_spec(spec).loop
    assert np.all(g.m == g.m[0])
    assert check_LB(g) == lam / (lam + deg)


def test_cayley_rejects_non_generating_set():
    with pytest.raises(GraphSpecError):
        cayley_abelian((4, 4), [(2, 0), (0, 1)])
    with pytest.raises(GraphSpecError):
        cayley_abelian((4, 4), [(0, 0), (1, 0)])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 5 * 6 * 7 - 1), st.integers(0, 5 * 6 * 7 - 1))
def test_torus_distance_is_circular_l1(a, b):
    g = cayley_abelian((5, 6, 7), [(1, 0, 0), (0, 1, 0), (0, 0, 1)])
    coords = list(itertools.product(range(5), range(6), range(7)))
    x, y = coords[a], coords[b]
    want = sum(min((u - v) % N, (v - u) % N) for u, v, N in zip(x, y, (5, 6, 7)))
    assert g.distance(a, b) == want


def test_torus_matches_cayley():
    a, b = torus(2, 6), cayley_abelian((6, 6), [(1, 0), (0, 1)])
    assert (a.weights != b.weights).nnz == 0


def test_spec_parsing_roundtrip():
    for text in ("torus:2x16:loop=1", "cycle:64:loop=1", "cayley:12,12:gens=(1,0),(0,1):loop=1",
                 "random-regular:64,3:seed=5"):
        spec = parse_spec(text)
        assert (generate(str(spec)).weights != generate(text).weights).nnz == 0
    for bad in ("torus", "torus:axb", "blob:3", "cycle:8:colour=red", "cycle:8:loop=x"):
        with pytest.raises(GraphSpecError):
            generate(bad)


def test_save_load_roundtrip(tmp_path):
    g = torus(2, 8)
    p = tmp_path / "t.edges"
    save(g, p)
    h = load(p)
    assert h.labels == g.labels
    assert (h.weights != g.weights).nnz == 0
    assert np.array_equal(h.m, g.m)
    assert dumps(h) == p.read_text()
    assert generate(f"file:{p}").n == g.n


def test_loads_errors():
    with pytest.raises(ParseError, match="line 2"):
        loads("a b 1\na b -1\n")
    with pytest.raises(ParseError, match="line 1"):
        loads("a b\n")
    with pytest.raises(GraphError):
        loads("# comment\n")
    with pytest.raises(GraphError):
        loads("a b 1\nb a 2\n")


def test_loads_json_and_first_appearance_order():
    g = loads('{"edges": [["x", "y", 1], ["y", "z", 2], ["x", "x", 1]]}')
    assert g.labels == ("x", "y", "z")
    assert g.m.tolist() == [2.0, 3.0, 2.0]
    h = loads("# header\nq p 1.5\np r 1\n")
    assert h.labels == ("q", "p", "r")
