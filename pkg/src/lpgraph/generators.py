"""Standard graph families, the spec-string grammar and edge-list file I/O.

Spec strings look like ``torus:2x16:loop=1``, ``cycle:64``, ``path:3:loop=0``,
``tree:2,5``, ``cayley:12,12:gens=(1,0),(0,1)``, ``random-regular:64,3:seed=5``
or ``file:PATH``.  Every generated family gets a self-loop of weight
``loop`` (default 1) at each vertex.
"""

from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import GraphError, GraphSpecError, ParseError
from .graph import WeightedGraph, build_graph, from_matrix

FAMILIES = ("torus", "path", "cycle", "tree", "cayley", "random-regular", "file")
DEFAULT_LOOP = 1.0


@dataclass(frozen=True)
class GraphSpec:
    """Parsed description of a graph family member."""

    family: str
    size: tuple = ()
    weight: float = 1.0
    loop: float = DEFAULT_LOOP
    seed: int | None = None
    gens: tuple = ()
    path: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise GraphSpecError(f"unknown graph family {self.family!r}; expected one of {FAMILIES}")
        if any(int(s) <= 0 for s in self.size):
            raise GraphSpecError(f"size parameters must be positive, got {self.size}")
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise GraphSpecError(f"edge weight must be positive, got {self.weight}")
        if not (self.loop >= 0 and math.isfinite(self.loop)):
            raise GraphSpecError(f"loop weight must be >= 0, got {self.loop}")
        if (self.family == "random-regular") != (self.seed is not None):
            raise GraphSpecError("a seed is required for, and only for, random families")
        if self.family == "file" and not self.path:
            raise GraphSpecError("file spec needs a path")

    def __str__(self):
        if self.family == "file":
            return f"file:{self.path}"
        if self.family == "torus":
            head = f"torus:{self.size[0]}x{self.size[1]}"
        else:
            head = f"{self.family}:" + ",".join(str(s) for s in self.size)
        opts = []
        if self.family == "cayley":
            opts.append("gens=" + ",".join("(" + ",".join(map(str, g)) + ")" for g in self.gens))
        if self.weight != 1.0:
            opts.append(f"weight={self.weight:g}")
        opts.append(f"loop={self.loop:g}")
        if self.seed is not None:
            opts.append(f"seed={self.seed}")
        return ":".join([head] + opts)


_GENS_RE = re.compile(r"\(([^()]*)\)")


def parse_spec(text: str) -> GraphSpec:
    """Parse a spec string into a :class:`GraphSpec`."""
    text = text.strip()
    family, _, rest = text.partition(":")
    family = family.strip().lower()
    if family == "file":
        return GraphSpec("file", loop=0.0, path=rest)
    if not rest:
        raise GraphSpecError(f"missing size parameters in {text!r}")
    # the gens option contains commas and parentheses, so split on ':' outside parens
    parts, depth, cur = [], 0, ""
    for ch in rest:
        depth += ch == "("
        depth -= ch == ")"
        if ch == ":" and depth == 0:
            parts.append(cur)
            cur = ""
        else:
            cur += ch
    parts.append(cur)
    size_txt, opts = parts[0], parts[1:]
    try:
        if family == "torus":
            d, _, N = size_txt.partition("x")
            size = (int(d), int(N))
        else:
            size = tuple(int(s) for s in size_txt.split(","))
    except ValueError:
        raise GraphSpecError(f"bad size parameters {size_txt!r} in {text!r}") from None
    kw = {}
    for opt in opts:
        key, eq, val = opt.partition("=")
        key = key.strip()
        if not eq:
            raise GraphSpecError(f"option {opt!r} is not key=value")
        try:
            if key == "loop":
                kw["loop"] = float(val)
            elif key == "weight":
                kw["weight"] = float(val)
            elif key == "seed":
                kw["seed"] = int(val)
            elif key == "gens":
                gens = [tuple(int(c) for c in g.split(",")) for g in _GENS_RE.findall(val)]
                if not gens:
                    raise ValueError
                kw["gens"] = tuple(gens)
            else:
                raise GraphSpecError(f"unknown option {key!r} in {text!r}")
        except ValueError:
            raise GraphSpecError(f"bad value for {key!r} in {text!r}") from None
    return GraphSpec(family, size=size, **kw)


def _with_loops(W: sp.spmatrix, loop: float) -> sp.csr_matrix:
    W = sp.csr_matrix(W, dtype=np.float64)
    if loop > 0:
        W = W + loop * sp.identity(W.shape[0], format="csr")
    return W


def cayley_abelian(moduli, gens, weight=1.0, loop=DEFAULT_LOOP) -> WeightedGraph:
    """Cayley graph of ``Z/m_1 x ... x Z/m_k`` with generating set ``S`` union ``-S``.

    Vertex ``x`` has mixed-radix index ``sum_i x_i prod_{j>i} m_j``.  Each
    distinct element of ``S`` union ``-S`` contributes one neighbour of weight
    ``weight``, so every vertex has the same mass.
    """
    moduli = tuple(int(m) for m in moduli)
    if not moduli or min(moduli) < 1:
        raise GraphSpecError("moduli must be positive")
    elems = set()
    for g in gens:
        if len(g) != len(moduli):
            raise GraphSpecError(f"generator {g} has wrong length for moduli {moduli}")
        s = tuple(int(c) % m for c, m in zip(g, moduli))
        if not any(s):
            raise GraphSpecError(f"generator {g} is the identity")
        elems.add(s)
        elems.add(tuple((-c) % m for c, m in zip(s, moduli)))
    if not elems:
        raise GraphSpecError("empty generating set")
    n = math.prod(moduli)
    coords = np.array(list(itertools.product(*[range(m) for m in moduli])), dtype=np.int64)
    coords = coords.reshape(n, len(moduli))
    radix = np.array([math.prod(moduli[i + 1:]) for i in range(len(moduli))], dtype=np.int64)
    mods = np.array(moduli, dtype=np.int64)
    rows, cols = [], []
    for s in sorted(elems):
        nb = (coords + np.array(s)) % mods
        rows.append(np.arange(n))
        cols.append(nb @ radix)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    W = sp.csr_matrix((np.full(len(rows), float(weight)), (rows, cols)), shape=(n, n))
    W = _with_loops(W, loop)
    try:
        return from_matrix(W)
    except GraphError as exc:
        raise GraphSpecError(f"generators {sorted(elems)} do not generate the group: {exc}") from None


def torus(d: int, N: int, weight=1.0, loop=DEFAULT_LOOP) -> WeightedGraph:
    """Discrete torus ``(Z/N)^d`` with unit-weight lattice edges."""
    if N < 3:
        raise GraphSpecError(f"torus side N={N} < 3 gives a degenerate metric")
    if d < 1:
        raise GraphSpecError("torus dimension must be >= 1")
    gens = [tuple(int(i == k) for i in range(d)) for k in range(d)]
    return cayley_abelian([N] * d, gens, weight=weight, loop=loop)


def cycle(N: int, weight=1.0, loop=DEFAULT_LOOP) -> WeightedGraph:
    if N < 3:
        raise GraphSpecError(f"cycle length N={N} < 3 gives a degenerate metric")
    return cayley_abelian([N], [(1,)], weight=weight, loop=loop)


def path(N: int, weight=1.0, loop=DEFAULT_LOOP) -> WeightedGraph:
    if N < 2:
        raise GraphSpecError("a path needs at least 2 vertices")
    i = np.arange(N - 1)
    W = sp.csr_matrix((np.full(N - 1, float(weight)), (i, i + 1)), shape=(N, N))
    return from_matrix(_with_loops(W + W.T, loop))


def tree(branching: int, height: int, weight=1.0, loop=DEFAULT_LOOP) -> WeightedGraph:
    """Complete ``branching``-ary tree of the given height (root at vertex 0)."""
    if branching < 1 or height < 1:
        raise GraphSpecError("tree needs branching >= 1 and height >= 1")
    n = sum(branching ** k for k in range(height + 1))
    child = np.arange(1, n)
    parent = (child - 1) // branching
    W = sp.csr_matrix((np.full(n - 1, float(weight)), (parent, child)), shape=(n, n))
    return from_matrix(_with_loops(W + W.T, loop))


def random_regular(n: int, d: int, seed: int, weight=1.0, loop=DEFAULT_LOOP,
                   max_tries: int = 1000) -> WeightedGraph:
    """Random simple connected ``d``-regular graph by the pairing model with rejection."""
    if n * d % 2 or d >= n or d < 1:
        raise GraphSpecError(f"no simple {d}-regular graph on {n} vertices")
    rng = np.random.default_rng(seed)
    stubs = np.repeat(np.arange(n), d)
    for _ in range(max_tries):
        perm = rng.permutation(stubs).reshape(-1, 2)
        u, v = perm[:, 0], perm[:, 1]
        if np.any(u == v):
            continue
        key = np.minimum(u, v) * n + np.maximum(u, v)
        if len(np.unique(key)) != len(key):
            continue
        W = sp.csr_matrix((np.full(len(u), float(weight)), (u, v)), shape=(n, n))
        try:
            return from_matrix(_with_loops(W + W.T, loop))
        except GraphError:
            continue
    raise GraphSpecError(f"pairing model failed after {max_tries} attempts")


def generate(spec: GraphSpec | str) -> WeightedGraph:
    """Build the graph described by ``spec``."""
    if isinstance(spec, str):
        spec = parse_spec(spec)
    f, s, kw = spec.family, spec.size, dict(weight=spec.weight, loop=spec.loop)

    def need(k):
        if len(s) != k:
            raise GraphSpecError(f"{f} takes {k} size parameter(s), got {s}")

    if f == "file":
        return load(spec.path)
    if f == "torus":
        need(2)
        return torus(s[0], s[1], **kw)
    if f == "cycle":
        need(1)
        return cycle(s[0], **kw)
    if f == "path":
        need(1)
        return path(s[0], **kw)
    if f == "tree":
        need(2)
        return tree(s[0], s[1], **kw)
    if f == "cayley":
        if not spec.gens:
            raise GraphSpecError("cayley spec needs gens=...")
        return cayley_abelian(s, spec.gens, **kw)
    need(2)
    return random_regular(s[0], s[1], spec.seed, **kw)


# ---- file I/O --------------------------------------------------------------

VERTEX_PRAGMA = "#@vertices"


def dumps(g: WeightedGraph) -> str:
    """Canonical text form: vertex-order pragma then ``u v w`` sorted by index."""
    lines = ["# lpgraph edge list: u v weight", VERTEX_PRAGMA + " " + " ".join(g.labels)]
    lab = g.labels
    for u, v, w in g.edges():
        lines.append(f"{lab[u]} {lab[v]} {w!r}")
    return "\n".join(lines) + "\n"


def save(g: WeightedGraph, path) -> None:
    for lab in g.labels:
        if not lab or any(c.isspace() for c in lab) or lab.startswith("#"):
            raise GraphError(f"label {lab!r} cannot be written to an edge list")
    Path(path).write_text(dumps(g), encoding="utf-8")


def loads(text: str) -> WeightedGraph:
    """Parse the text or JSON edge-list format."""
    if text.lstrip().startswith("{"):
        return _loads_json(text)
    labels = None
    triples = []
    seen: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith(VERTEX_PRAGMA):
            labels = line.split()[1:]
            continue
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if len(tok) != 3:
            raise ParseError(f"expected 'u v weight', got {raw!r}", line=lineno)
        u, v, w = tok
        try:
            w = float(w)
        except ValueError:
            raise ParseError(f"weight {w!r} is not a number", line=lineno) from None
        if not math.isfinite(w) or w < 0:
            raise ParseError(f"invalid weight {w}", line=lineno)
        key = (u, v) if u <= v else (v, u)
        if key in seen and seen[key][0] != w:
            raise ParseError(f"conflicting weight for pair ({u}, {v}); first given on line "
                             f"{seen[key][1]}", line=lineno)
        seen.setdefault(key, (w, lineno))
        triples.append((u, v, w))
    if labels is not None:
        known = set(labels)
        extra = {t for u, v, _ in triples for t in (u, v)} - known
        if extra:
            raise ParseError(f"vertices {sorted(extra)} missing from the vertex pragma")
    return build_graph(triples, labels=labels)


def _loads_json(text: str) -> WeightedGraph:
    try:
        data = json.loads(text)
        edges = [(str(u), str(v), float(w)) for u, v, w in data["edges"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"malformed JSON edge list: {exc}") from None
    return build_graph(edges, labels=[str(x) for x in data.get("vertices", [])] or None)


def load(path) -> WeightedGraph:
    return loads(Path(path).read_text(encoding="utf-8"))
