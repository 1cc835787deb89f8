"""Partial mutually orthogonal Latin squares as clique fragments.

Class layout for r-2 layers of order n (0-based classes): class m < r-2
holds the symbols of layer m, class r-2 the rows, class r-1 the columns.
Vertex id = class * n + index, symbols 1..n map to index 0..n-1.

A filled cell (i, j) contributes the clique on {row i, col j} and the
symbol it carries in every layer where it is filled.  A K_r-decomposition of
the complete r-partite graph is the same thing as a total set of MOLS.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

from .core import (BudgetExhausted, Clique, CliqueDecomposition, Infeasible, MultipartiteGraph,
                   clique_edges, norm_edge, solve_clique_partition, verify_clique_partition)

Grid = list[list[int | None]]


class InvalidInstance(ValueError):
    pass


class NotComplete(ValueError):
    pass


@dataclass
class MolsInstance:
    n: int
    layers: list[Grid]

    @property
    def r(self) -> int:
        return len(self.layers) + 2

    @classmethod
    def empty(cls, n: int, r: int) -> "MolsInstance":
        return cls(n, [[[None] * n for _ in range(n)] for _ in range(r - 2)])

    def is_total(self) -> bool:
        return all(x is not None for layer in self.layers for row in layer for x in row)

    def filled(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.n) for j in range(self.n)
                if any(layer[i][j] is not None for layer in self.layers)]

    def validate(self) -> None:
        n = self.n
        if not self.layers:
            raise InvalidInstance("need at least one layer (r >= 3)")
        for m, layer in enumerate(self.layers):
            if len(layer) != n or any(len(row) != n for row in layer):
                raise InvalidInstance(f"layer {m} is not {n}x{n}")
            for i in range(n):
                for j in range(n):
                    x = layer[i][j]
                    if x is not None and not 1 <= x <= n:
                        raise InvalidInstance(f"symbol {x} out of range at ({i},{j}) layer {m}")
            for i in range(n):
                row = [x for x in layer[i] if x is not None]
                if len(row) != len(set(row)):
                    raise InvalidInstance(f"layer {m}: repeated symbol in row {i}")
                col = [layer[t][i] for t in range(n) if layer[t][i] is not None]
                if len(col) != len(set(col)):
                    raise InvalidInstance(f"layer {m}: repeated symbol in column {i}")
        for a, b in combinations(range(len(self.layers)), 2):
            seen = set()
            for i in range(n):
                for j in range(n):
                    x, y = self.layers[a][i][j], self.layers[b][i][j]
                    if x is not None and y is not None:
                        if (x, y) in seen:
                            raise InvalidInstance(f"layers {a},{b} not orthogonal at ({i},{j})")
                        seen.add((x, y))

    def contains(self, other: "MolsInstance") -> bool:
        """Every filled cell of `other` carries the same symbol here."""
        for la, lb in zip(self.layers, other.layers):
            for i in range(self.n):
                for j in range(self.n):
                    if lb[i][j] is not None and la[i][j] != lb[i][j]:
                        return False
        return True

    # text format: rows of comma-separated cells, '.' for empty, blank line between layers
    def dumps(self) -> str:
        blocks = []
        for layer in self.layers:
            blocks.append("\n".join(",".join("." if x is None else str(x) for x in row) for row in layer))
        return "\n\n".join(blocks) + "\n"

    @classmethod
    def loads(cls, text: str) -> "MolsInstance":
        blocks = [b for b in text.strip().split("\n\n") if b.strip()]
        layers = []
        for b in blocks:
            rows = [ln.strip() for ln in b.strip().splitlines() if ln.strip()]
            layers.append([[None if c.strip() == "." else int(c) for c in ln.split(",")] for ln in rows])
        if not layers:
            raise InvalidInstance("empty grid file")
        inst = cls(len(layers[0]), layers)
        inst.validate()
        return inst


@dataclass
class UsageCounters:
    row_use: dict[int, int] = field(default_factory=dict)
    col_use: dict[int, int] = field(default_factory=dict)
    symbol_use: dict[tuple[int, int], int] = field(default_factory=dict)
    s: dict[int, int] = field(default_factory=dict)

    @classmethod
    def from_instance(cls, m: MolsInstance) -> "UsageCounters":
        c = cls()
        for i, j in m.filled():
            c.row_use[i] = c.row_use.get(i, 0) + 1
            c.col_use[j] = c.col_use.get(j, 0) + 1
        for t, layer in enumerate(m.layers):
            for row in layer:
                for x in row:
                    if x is not None:
                        c.symbol_use[(t, x)] = c.symbol_use.get((t, x), 0) + 1
        return c


@dataclass
class Stuck:
    fragment: int
    missing_class: int
    candidates: list[int]


def vertex(n: int, cls: int, idx: int) -> int:
    return cls * n + idx


def mols_to_graph(m: MolsInstance) -> tuple[MultipartiteGraph, list[Clique]]:
    """The graph G of the instance and its edge-disjoint clique fragments.

    Edges repeated by several layers (the row-column edge) are stored once.
    """
    m.validate()
    n, r = m.n, m.r
    fragments: list[Clique] = []
    for i, j in m.filled():
        vs = [vertex(n, r - 2, i), vertex(n, r - 1, j)]
        for t, layer in enumerate(m.layers):
            if layer[i][j] is not None:
                vs.append(vertex(n, t, layer[i][j] - 1))
        fragments.append(tuple(sorted(vs)))
    edges: set = set()
    for f in fragments:
        es = set(clique_edges(f))
        assert not (es & edges), "fragments overlap; instance invariants violated"
        edges |= es
    return MultipartiteGraph(r, n, edges), fragments


def graph_to_mols(d: CliqueDecomposition | Sequence[Clique], r: int, n: int) -> MolsInstance:
    cliques = d.cliques if isinstance(d, CliqueDecomposition) else list(d)
    host = MultipartiteGraph.complete(r, n)
    if not verify_clique_partition(host.edges, cliques, host.colour(), r):
        raise NotComplete("cliques do not decompose the complete r-partite graph")
    inst = MolsInstance.empty(n, r)
    for c in cliques:
        by = {v // n: v % n for v in c}
        i, j = by[r - 2], by[r - 1]
        for t in range(r - 2):
            inst.layers[t][i][j] = by[t] + 1
    inst.validate()
    return inst


def default_cr(r: int) -> float:
    return 1 / 25 if r == 3 else 9 / (10 ** 7 * r ** 3)


def greedy_extend_fragments(g: MultipartiteGraph, fragments: Sequence[Clique],
                            counters: UsageCounters | None = None, c_r: float | None = None,
                            eps: float = 0.0) -> list[Clique] | Stuck:
    """Extend each fragment in turn to a transversal K_r, edge-disjoint from
    everything chosen so far and from G.

    Missing classes are filled in increasing order by the least vertex that
    is adjacent in the complement to all vertices chosen so far.  With c_r
    set, vertices whose membership count reached 10(c_r - eps)n/9 are
    avoided; c_r=None disables that filter.
    """
    r, n = g.r, g.n
    counters = counters or UsageCounters()
    used = set(g.edges)
    s = counters.s
    for f in fragments:
        for v in f:
            s[v] = s.get(v, 0) + 1
    busy = None if c_r is None else 10 * (c_r - eps) * n / 9
    bound = None if c_r is None else 10 * (c_r - eps * eps) * n / 9
    out: list[Clique] = []
    for p, f in enumerate(fragments):
        chosen = list(f)
        have = {v // n for v in f}
        for j in range(r):
            if j in have:
                continue
            cands = []
            for x in range(j * n, (j + 1) * n):
                if busy is not None and s.get(x, 0) >= busy:
                    continue
                if all(norm_edge(x, y) not in used for y in chosen):
                    cands.append(x)
            if not cands:
                return Stuck(p, j, [])
            x = cands[0]
            chosen.append(x)
            s[x] = s.get(x, 0) + 1
        c = tuple(sorted(chosen))
        used |= set(clique_edges(c))
        out.append(c)
    if bound is not None:
        assert max(s.values(), default=0) <= bound + 1e-9 or busy is None
    return out


def _constrained_exact(inst: MolsInstance, fragments: list[Clique], budget: int):
    n, r = inst.n, inst.r
    host = MultipartiteGraph.complete(r, n)
    need: dict[tuple[int, int], frozenset] = {}
    for f in fragments:
        row = next(v for v in f if v // n == r - 2)
        col = next(v for v in f if v // n == r - 1)
        need[(row, col)] = frozenset(f)

    def allowed(c: Clique) -> bool:
        row = next(v for v in c if v // n == r - 2)
        col = next(v for v in c if v // n == r - 1)
        req = need.get((row, col))
        return req is None or req <= set(c)

    return solve_clique_partition(host.edges, host.colour(), r, budget, allowed)


def complete_mols(m: MolsInstance, strategy: str = "exact", budget: int = 2_000_000,
                  c_r: float | None = None, seed: int = 0):
    """Complete a partial instance: extend the fragments to K_r's, decompose
    the r-partite complement, and read the grids back off the union.

    When the greedy extension leaves an undecomposable complement, the exact
    strategy retries with a single constrained search on the complete graph.
    """
    m.validate()
    n, r = m.n, m.r
    g, fragments = mols_to_graph(m)
    ext = fragments if r == 3 else greedy_extend_fragments(g, fragments, c_r=c_r)
    res = None
    if not isinstance(ext, Stuck):
        gq_edges = set()
        for c in ext:
            gq_edges |= set(clique_edges(c))
        comp = MultipartiteGraph.complete(r, n).without_edges(gq_edges)
        if strategy == "pipeline":
            from .pipeline import decompose_by_absorption
            out = decompose_by_absorption(comp, seed=seed)
            res = out.decomposition.cliques if out.decomposition is not None else Infeasible("pipeline", {})
        elif strategy == "exact":
            res = solve_clique_partition(comp.edges, comp.colour(), r, budget)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        if isinstance(res, list):
            res = res + list(ext)
    if not isinstance(res, list):
        if isinstance(res, BudgetExhausted):
            return res
        res = _constrained_exact(m, fragments, budget)
        if not isinstance(res, list):
            return res
    out = graph_to_mols(res, r, n)
    assert out.contains(m)
    return out


def brute_force_latin_squares(n: int) -> list[Grid]:
    """All Latin squares of order n (row by row permutations); small n only."""
    from itertools import permutations
    perms = list(permutations(range(1, n + 1)))
    out: list[Grid] = []

    def rec(rows):
        if len(rows) == n:
            out.append([list(r) for r in rows])
            return
        for p in perms:
            if all(p[c] != row[c] for row in rows for c in range(n)):
                rec(rows + [p])

    rec([])
    return out
