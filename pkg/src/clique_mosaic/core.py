"""Balanced r-partite graphs, degree predicates and an exact clique-partition solver.

Vertices are integers 0..r*n-1 and vertex v lives in class v // n.  Classes are
indexed from 0 throughout the library.  Adjacency is kept as one Python int
bitmask per vertex, which makes common-neighbourhood queries cheap.

The exact solver works on any properly coloured edge set, not only on balanced
hosts, because gadget graphs (transformers, absorbers) have unequal class sizes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations, product
from math import comb
from typing import Callable, Iterable, Mapping, Sequence

Edge = tuple[int, int]
Clique = tuple[int, ...]


class GraphError(ValueError):
    """Raised when a graph would violate the r-partite model."""


def norm_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


class MultipartiteGraph:
    """Balanced r-partite graph on classes V_0..V_{r-1} of size n each.

    Instances are immutable; the edit helpers return new graphs.
    """

    __slots__ = ("r", "n", "adj", "_edges", "_class_masks")

    def __init__(self, r: int, n: int, edges: Iterable[Sequence[int]] = ()):
        if r < 2:
            raise GraphError(f"need at least two classes, got r={r}")
        if n < 0:
            raise GraphError(f"negative class size n={n}")
        self.r = r
        self.n = n
        nv = r * n
        adj = [0] * nv
        es = set()
        for e in edges:
            u, v = int(e[0]), int(e[1])
            if not (0 <= u < nv and 0 <= v < nv):
                raise GraphError(f"edge {e} out of range for {nv} vertices")
            if u == v:
                raise GraphError(f"loop at {u}")
            if n and u // n == v // n:
                raise GraphError(f"edge {u}-{v} lies inside class {u // n}")
            adj[u] |= 1 << v
            adj[v] |= 1 << u
            es.add(norm_edge(u, v))
        self.adj = tuple(adj)
        self._edges = tuple(sorted(es))
        full = (1 << n) - 1
        self._class_masks = tuple(full << (j * n) for j in range(r))

    # --- basic queries ---

    @property
    def num_vertices(self) -> int:
        return self.r * self.n

    @property
    def edges(self) -> tuple[Edge, ...]:
        return self._edges

    def edge_set(self) -> frozenset[Edge]:
        return frozenset(self._edges)

    def num_edges(self) -> int:
        return len(self._edges)

    def class_of(self, v: int) -> int:
        return v // self.n

    def colour(self) -> dict[int, int]:
        return {v: v // self.n for v in range(self.num_vertices)}

    def class_vertices(self, j: int) -> range:
        return range(j * self.n, (j + 1) * self.n)

    def class_mask(self, j: int) -> int:
        return self._class_masks[j]

    def has_edge(self, u: int, v: int) -> bool:
        return bool(self.adj[u] >> v & 1)

    def neighbours(self, v: int) -> list[int]:
        return list(_bits(self.adj[v]))

    def degree(self, v: int) -> int:
        return self.adj[v].bit_count()

    def degree_to(self, v: int, j: int) -> int:
        """d(v, V_j)."""
        return (self.adj[v] & self._class_masks[j]).bit_count()

    def degree_into(self, v: int, verts: Iterable[int]) -> int:
        mask = 0
        for u in verts:
            mask |= 1 << u
        return (self.adj[v] & mask).bit_count()

    def max_degree(self) -> int:
        return max((a.bit_count() for a in self.adj), default=0)

    # --- edits ---

    def with_edges(self, extra: Iterable[Sequence[int]]) -> "MultipartiteGraph":
        return MultipartiteGraph(self.r, self.n, list(self._edges) + [tuple(e) for e in extra])

    def without_edges(self, removed: Iterable[Sequence[int]]) -> "MultipartiteGraph":
        drop = {norm_edge(*e) for e in removed}
        return MultipartiteGraph(self.r, self.n, [e for e in self._edges if e not in drop])

    def spanning(self, edges: Iterable[Sequence[int]]) -> "MultipartiteGraph":
        """Graph on the same vertex classes with the given edges."""
        return MultipartiteGraph(self.r, self.n, edges)

    def induced_edges(self, verts: Iterable[int]) -> list[Edge]:
        vs = set(verts)
        return [e for e in self._edges if e[0] in vs and e[1] in vs]

    def complement(self) -> "MultipartiteGraph":
        """The r-partite complement."""
        out = []
        for j1, j2 in combinations(range(self.r), 2):
            for u in self.class_vertices(j1):
                for v in self.class_vertices(j2):
                    if not self.has_edge(u, v):
                        out.append((u, v))
        return MultipartiteGraph(self.r, self.n, out)

    @classmethod
    def complete(cls, r: int, n: int) -> "MultipartiteGraph":
        es = []
        for j1, j2 in combinations(range(r), 2):
            es.extend(product(range(j1 * n, (j1 + 1) * n), range(j2 * n, (j2 + 1) * n)))
        return cls(r, n, es)

    # --- codec ---

    def to_dict(self) -> dict:
        return {"r": self.r, "n": self.n, "edges": [list(e) for e in self._edges]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "MultipartiteGraph":
        return cls(int(data["r"]), int(data["n"]), [tuple(e) for e in data.get("edges", [])])

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def loads(cls, text: str) -> "MultipartiteGraph":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other) -> bool:
        return (isinstance(other, MultipartiteGraph) and self.r == other.r
                and self.n == other.n and self._edges == other._edges)

    def __hash__(self) -> int:
        return hash((self.r, self.n, self._edges))

    def __repr__(self) -> str:
        return f"MultipartiteGraph(r={self.r}, n={self.n}, e={len(self._edges)})"


@dataclass
class CliqueDecomposition:
    cliques: list[Clique] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"cliques": [list(c) for c in self.cliques]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "CliqueDecomposition":
        return cls([tuple(sorted(int(x) for x in c)) for c in data["cliques"]])

    def __len__(self) -> int:
        return len(self.cliques)


@dataclass(frozen=True)
class Infeasible:
    """No decomposition exists.  `reason` is "divisibility", "edge-count",
    "uncoverable-edge" or "exhausted"; `detail` holds the witness."""
    reason: str
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BudgetExhausted:
    steps: int
    budget: int


@dataclass
class DegreeProfile:
    table: dict[tuple[int, int], int]

    def __getitem__(self, key: tuple[int, int]) -> int:
        return self.table[key]


def degree_profile(g: MultipartiteGraph) -> DegreeProfile:
    return DegreeProfile({(v, j): g.degree_to(v, j)
                          for v in range(g.num_vertices) for j in range(g.r)})


def divisibility_defect(g: MultipartiteGraph):
    """First (v, j1, j2) with d(v,V_j1) != d(v,V_j2), or None."""
    for v in range(g.num_vertices):
        cv = g.class_of(v)
        ds = [(j, g.degree_to(v, j)) for j in range(g.r) if j != cv]
        for (j1, d1), (j2, d2) in zip(ds, ds[1:]):
            if d1 != d2:
                return v, j1, j2
    return None


def is_kr_divisible(g: MultipartiteGraph) -> bool:
    return divisibility_defect(g) is None


def hat_delta(g: MultipartiteGraph) -> int:
    """Partite minimum degree: min over v and foreign classes j of d(v, V_j)."""
    best = None
    for v in range(g.num_vertices):
        cv = g.class_of(v)
        for j in range(g.r):
            if j != cv:
                d = g.degree_to(v, j)
                if best is None or d < best:
                    best = d
    return 0 if best is None else best


def max_imbalance(g: MultipartiteGraph) -> int:
    """Largest |d(v,V_j1) - d(v,V_j2)| over v and foreign classes j1, j2."""
    worst = 0
    for v in range(g.num_vertices):
        cv = g.class_of(v)
        ds = [g.degree_to(v, j) for j in range(g.r) if j != cv]
        if ds:
            worst = max(worst, max(ds) - min(ds))
    return worst


def enumerate_r_cliques(g: MultipartiteGraph) -> list[Clique]:
    """All transversal K_r's, each as a sorted tuple, in lexicographic order."""
    out: list[Clique] = []
    r = g.r
    adj = g.adj

    def grow(j: int, chosen: list[int], cand: int):
        if j == r:
            out.append(tuple(chosen))
            return
        for w in _bits(cand & g.class_mask(j)):
            chosen.append(w)
            grow(j + 1, chosen, cand & adj[w])
            chosen.pop()

    grow(0, [], (1 << g.num_vertices) - 1)
    return out


# --- coloured edge sets (unequal class sizes allowed) ---

def edges_divisible(edges: Iterable[Edge], colour: Mapping[int, int], r: int) -> bool:
    """K_r-divisibility for an arbitrary properly coloured edge set."""
    deg: dict[int, list[int]] = {}
    for u, v in edges:
        deg.setdefault(u, [0] * r)[colour[v]] += 1
        deg.setdefault(v, [0] * r)[colour[u]] += 1
    for v, row in deg.items():
        c = colour[v]
        vals = {row[j] for j in range(r) if j != c}
        if len(vals) > 1:
            return False
    return True


def clique_edges(c: Sequence[int]) -> list[Edge]:
    return [norm_edge(a, b) for a, b in combinations(c, 2)]


def verify_clique_partition(edges: Iterable[Sequence[int]], cliques: Iterable[Sequence[int]],
                            colour: Mapping[int, int], r: int) -> bool:
    """True iff `cliques` are transversal K_r's partitioning `edges` exactly."""
    remaining = {(a, b) if a < b else (b, a) for a, b in edges}
    take = remaining.remove
    for c in cliques:
        c = sorted(c)
        if len(c) != r:
            return False
        try:
            if len({colour[v] for v in c}) != r:
                return False
            for e in combinations(c, 2):
                take(e)
        except KeyError:
            return False
    return not remaining


def verify_decomposition(g: MultipartiteGraph, d) -> bool:
    cliques = d.cliques if isinstance(d, CliqueDecomposition) else d
    return verify_clique_partition(g.edges, cliques, g.colour(), g.r)


class _Search:
    """Backtracking over the least uncovered edge, on local vertex indices."""

    def __init__(self, adj: list[int], cls_masks: list[int], colour: list[int], r: int,
                 budget: int, allowed: Callable[[Clique], bool] | None, memo_cap: int):
        self.adj = adj
        self.cls_masks = cls_masks
        self.colour = colour
        self.r = r
        self.budget = budget
        self.allowed = allowed
        self.steps = 0
        self.exhausted = False
        self.failed: set[tuple[int, ...]] = set()
        self.memo_cap = memo_cap
        self.stack: list[Clique] = []

    def least_edge(self):
        for u, a in enumerate(self.adj):
            if a:
                return u, (a & -a).bit_length() - 1
        return None

    def candidates(self, u: int, v: int) -> list[Clique]:
        adj = self.adj
        others = [j for j in range(self.r) if j != self.colour[u] and j != self.colour[v]]
        out: list[Clique] = []

        def grow(i: int, chosen: list[int], cand: int):
            if i == len(others):
                out.append(tuple(sorted(chosen)))
                return
            for w in _bits(cand & self.cls_masks[others[i]]):
                chosen.append(w)
                grow(i + 1, chosen, cand & adj[w])
                chosen.pop()

        grow(0, [u, v], adj[u] & adj[v])
        if self.allowed is not None:
            out = [c for c in out if self.allowed(c)]
        return out

    def coverable(self) -> bool:
        # necessary condition: every edge has a common neighbour in every other class
        adj = self.adj
        masks = self.cls_masks
        colour = self.colour
        r = self.r
        for u, a in enumerate(adj):
            rest = a >> (u + 1) << (u + 1)
            while rest:
                low = rest & -rest
                v = low.bit_length() - 1
                rest ^= low
                common = a & adj[v]
                cu, cv = colour[u], colour[v]
                for j in range(r):
                    if j != cu and j != cv and not common & masks[j]:
                        return False
        return True

    def toggle(self, c: Clique):
        adj = self.adj
        for a, b in combinations(c, 2):
            adj[a] ^= 1 << b
            adj[b] ^= 1 << a

    def run(self) -> bool:
        e = self.least_edge()
        if e is None:
            return True
        key = tuple(self.adj)
        if key in self.failed:
            return False
        for c in self.candidates(*e):
            if self.steps >= self.budget:
                self.exhausted = True
                return False
            self.steps += 1
            self.toggle(c)
            self.stack.append(c)
            if self.coverable() and self.run():
                return True
            self.stack.pop()
            self.toggle(c)
            if self.exhausted:
                return False
        if len(self.failed) < self.memo_cap:
            self.failed.add(key)
        return False


DEFAULT_BUDGET = 200_000


def solve_clique_partition(edges: Iterable[Sequence[int]], colour: Mapping[int, int], r: int,
                           budget: int = DEFAULT_BUDGET,
                           allowed: Callable[[Clique], bool] | None = None,
                           memo_cap: int = 200_000):
    """Exact K_r-decomposition of a coloured edge set.

    Returns a list of cliques (sorted tuples, original vertex ids), an
    Infeasible, or a BudgetExhausted.  `allowed`, if given, filters candidate
    cliques (by original ids); it lets callers force structure into the cover.
    """
    es = sorted({norm_edge(*e) for e in edges})
    for u, v in es:
        if colour[u] == colour[v]:
            raise GraphError(f"edge {u}-{v} inside class {colour[u]}")
    if not es:
        return []
    if len(es) % comb(r, 2):
        return Infeasible("edge-count", {"edges": len(es), "modulus": comb(r, 2)})
    # divisibility precheck
    deg: dict[int, list[int]] = {}
    for u, v in es:
        deg.setdefault(u, [0] * r)[colour[v]] += 1
        deg.setdefault(v, [0] * r)[colour[u]] += 1
    for v in sorted(deg):
        row = deg[v]
        fs = [j for j in range(r) if j != colour[v]]
        for j1, j2 in zip(fs, fs[1:]):
            if row[j1] != row[j2]:
                return Infeasible("divisibility", {"vertex": v, "classes": [j1, j2],
                                                   "degrees": [row[j1], row[j2]]})
    verts = sorted(deg)
    local = {v: i for i, v in enumerate(verts)}
    adj = [0] * len(verts)
    for u, v in es:
        adj[local[u]] |= 1 << local[v]
        adj[local[v]] |= 1 << local[u]
    masks = [0] * r
    lcol = [colour[v] for v in verts]
    for i, c in enumerate(lcol):
        masks[c] |= 1 << i
    wrapped = None
    if allowed is not None:
        def wrapped(c: Clique) -> bool:
            return allowed(tuple(sorted(verts[i] for i in c)))
    s = _Search(adj, masks, lcol, r, budget, wrapped, memo_cap)
    if not s.coverable():
        u, v = next((a, b) for a, b in es if not _edge_has_cover(s, local[a], local[b]))
        return Infeasible("uncoverable-edge", {"edge": [u, v]})
    ok = s.run()
    if ok:
        return [tuple(sorted(verts[i] for i in c)) for c in s.stack]
    if s.exhausted:
        return BudgetExhausted(s.steps, budget)
    return Infeasible("exhausted", {"steps": s.steps, "root_edge": list(es[0])})


def _edge_has_cover(s: _Search, u: int, v: int) -> bool:
    common = s.adj[u] & s.adj[v]
    return all(common & s.cls_masks[j] for j in range(s.r)
               if j != s.colour[u] and j != s.colour[v])


def exact_decompose(g: MultipartiteGraph, budget: int = DEFAULT_BUDGET,
                    allowed: Callable[[Clique], bool] | None = None):
    """CliqueDecomposition, Infeasible or BudgetExhausted for a balanced host."""
    res = solve_clique_partition(g.edges, g.colour(), g.r, budget, allowed)
    if isinstance(res, list):
        return CliqueDecomposition(res)
    return res


def is_solution(res) -> bool:
    return isinstance(res, (list, CliqueDecomposition))


class ColouredGraph:
    """A properly r-coloured graph with arbitrary class sizes.

    Gadgets (expansions, transformers, absorbers) are built on fresh vertices
    whose classes need not be balanced, so they use this looser container.
    `colour` maps every vertex, including isolated ones, to its class.
    """

    def __init__(self, r: int, colour: Mapping[int, int] | None = None,
                 edges: Iterable[Sequence[int]] = ()):
        self.r = r
        self.colour: dict[int, int] = dict(colour or {})
        self.edges: set[Edge] = set()
        self._next = max(self.colour, default=-1) + 1
        for u, v in edges:
            self.add_edge(u, v)

    def add_vertex(self, c: int) -> int:
        if not 0 <= c < self.r:
            raise GraphError(f"class {c} out of range")
        v = self._next
        self._next += 1
        self.colour[v] = c
        return v

    def ensure_vertex(self, v: int, c: int):
        old = self.colour.get(v)
        if old is not None and old != c:
            raise GraphError(f"vertex {v} already has class {old}")
        self.colour[v] = c
        self._next = max(self._next, v + 1)

    def add_edge(self, u: int, v: int):
        if u not in self.colour or v not in self.colour:
            raise GraphError(f"edge ({u},{v}) touches an unknown vertex")
        if self.colour[u] == self.colour[v]:
            raise GraphError(f"edge ({u},{v}) inside class {self.colour[u]}")
        e = norm_edge(u, v)
        if e in self.edges:
            raise GraphError(f"duplicate edge {e}")
        self.edges.add(e)

    @property
    def vertices(self) -> list[int]:
        return sorted(self.colour)

    def __len__(self) -> int:
        return len(self.colour)

    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {v: set() for v in self.colour}
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return adj

    def degree_table(self) -> dict[int, list[int]]:
        deg = {v: [0] * self.r for v in self.colour}
        for u, v in self.edges:
            deg[u][self.colour[v]] += 1
            deg[v][self.colour[u]] += 1
        return deg

    def is_divisible(self) -> bool:
        return edges_divisible(self.edges, self.colour, self.r)

    def class_pair_counts(self) -> dict[tuple[int, int], int]:
        out = {(a, b): 0 for a, b in combinations(range(self.r), 2)}
        for u, v in self.edges:
            a, b = sorted((self.colour[u], self.colour[v]))
            out[(a, b)] += 1
        return out

    def copy(self) -> "ColouredGraph":
        g = ColouredGraph(self.r, self.colour)
        g.edges = set(self.edges)
        g._next = self._next
        return g

    def subgraph(self, edges: Iterable[Sequence[int]]) -> "ColouredGraph":
        """Spanning subgraph on the vertices touched by `edges`."""
        es = {norm_edge(*e) for e in edges}
        verts = {x for e in es for x in e}
        g = ColouredGraph(self.r, {v: self.colour[v] for v in verts})
        g.edges = es
        return g

    def to_dict(self) -> dict:
        return {"r": self.r,
                "colour": {str(v): c for v, c in sorted(self.colour.items())},
                "edges": [list(e) for e in sorted(self.edges)]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "ColouredGraph":
        return cls(int(data["r"]), {int(v): int(c) for v, c in data["colour"].items()},
                   data["edges"])

    @classmethod
    def from_multipartite(cls, g: MultipartiteGraph, only_touched: bool = True) -> "ColouredGraph":
        if only_touched:
            verts = {x for e in g.edges for x in e}
        else:
            verts = range(g.num_vertices)
        return cls(g.r, {v: g.class_of(v) for v in verts}, g.edges)

    def __repr__(self) -> str:
        return f"ColouredGraph(r={self.r}, v={len(self.colour)}, e={len(self.edges)})"


def verify_coloured(g: ColouredGraph, cliques: Iterable[Sequence[int]]) -> bool:
    return verify_clique_partition(g.edges, cliques, g.colour, g.r)
