"""Labelled template graphs and greedy edge-disjoint embedding.

A template vertex is labelled either by a single host vertex (a root), by a
cell slice U^i_j, or by a whole class V_j.  Embedding processes templates in
order and their vertices in a rooted degeneracy order, so each new vertex only
has to be adjacent to a bounded number of already placed ones.

`FreeHost` is the degenerate case of a complete r-partite host whose slices
grow on demand: every non-root vertex gets a brand new host vertex, so copies
are automatically edge-disjoint.  Gadget constructions that would need
thousands of host vertices are placed there.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

from .core import Edge, MultipartiteGraph, norm_edge
from .partitions import KPartition


@dataclass(frozen=True)
class Singleton:
    v: int


@dataclass(frozen=True)
class Cell:
    i: int
    j: int


@dataclass(frozen=True)
class ClassLabel:
    j: int


Label = Union[Singleton, Cell, ClassLabel]


class TemplateError(ValueError):
    pass


@dataclass
class LabelledGraph:
    labels: dict[int, Label]
    edges: set[Edge] = field(default_factory=set)

    def roots(self) -> list[int]:
        return sorted(v for v, lab in self.labels.items() if isinstance(lab, Singleton))

    def adjacency(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {v: set() for v in self.labels}
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return adj

    def label_class(self, v: int, class_of) -> int:
        lab = self.labels[v]
        if isinstance(lab, Singleton):
            return class_of(lab.v)
        return lab.j

    def validate(self, class_of) -> None:
        """Roots independent, singleton labels used once, same-class labels independent."""
        seen = set()
        for v, lab in self.labels.items():
            if isinstance(lab, Singleton):
                if lab.v in seen:
                    raise TemplateError(f"host vertex {lab.v} labels two template vertices")
                seen.add(lab.v)
        roots = set(self.roots())
        for u, v in self.edges:
            if u in roots and v in roots:
                raise TemplateError(f"roots {u},{v} are adjacent")
            if self.label_class(u, class_of) == self.label_class(v, class_of):
                raise TemplateError(f"edge {u},{v} inside one class")


def degeneracy(h: LabelledGraph) -> tuple[int, list[int]]:
    """Least d with an ordering (roots first) where every later vertex has at
    most d earlier neighbours.  Smallest-last removal on the non-roots is
    optimal for this, as for ordinary degeneracy."""
    adj = h.adjacency()
    roots = h.roots()
    rest = set(h.labels) - set(roots)
    deg = {v: len(adj[v]) for v in rest}
    removed: list[int] = []
    d = 0
    while rest:
        v = min(rest, key=lambda x: (deg[x], x))
        d = max(d, deg[v])
        removed.append(v)
        rest.discard(v)
        for u in adj[v]:
            if u in rest:
                deg[u] -= 1
    order = roots + removed[::-1]
    return d, order


def back_degrees(h: LabelledGraph, order: Sequence[int]) -> list[int]:
    pos = {v: i for i, v in enumerate(order)}
    adj = h.adjacency()
    return [sum(1 for u in adj[v] if pos[u] < pos[v]) for v in order]


@dataclass
class Stuck:
    template: int
    vertex: int | None
    reason: str
    candidates: list[int] = field(default_factory=list)
    telemetry: dict = field(default_factory=dict)


@dataclass
class Embedding:
    maps: list[dict[int, int]]
    images: list[set[Edge]]
    max_degree: int = 0

    def union(self) -> set[Edge]:
        out: set[Edge] = set()
        for es in self.images:
            out |= es
        return out


def _label_set(lab: Label, host: MultipartiteGraph, part: KPartition | None) -> list[int]:
    if isinstance(lab, Singleton):
        return [lab.v]
    if isinstance(lab, ClassLabel):
        return list(host.class_vertices(lab.j))
    if part is None:
        raise TemplateError("cell label without a partition")
    return part.slice(host, lab.i, lab.j)


def embed_all(host: MultipartiteGraph, partition: KPartition | None,
              templates: Sequence[LabelledGraph], cap: float, seed: int = 0,
              retries: int = 20, forbidden: Iterable[Sequence[int]] = ()) -> Embedding | Stuck:
    """Edge-disjoint copies of every template, compatible with labels, with
    Δ(union) <= cap*n.  Host edges in `forbidden` are never used."""
    rng = random.Random(seed)
    limit = int(cap * host.n)
    used: set[Edge] = {norm_edge(*e) for e in forbidden}
    load = [0] * host.num_vertices
    maps: list[dict[int, int]] = []
    images: list[set[Edge]] = []
    for ti, t in enumerate(templates):
        t.validate(host.class_of)
        _, order = degeneracy(t)
        adj = t.adjacency()
        placed = None
        last = None
        for _ in range(max(1, retries)):
            phi: dict[int, int] = {}
            taken: set[int] = set()
            new_edges: set[Edge] = set()
            ok = True
            bump: dict[int, int] = {}
            for v in order:
                back = [phi[u] for u in adj[v] if u in phi]
                cands = []
                for c in _label_set(t.labels[v], host, partition):
                    if c in taken:
                        continue
                    if load[c] + bump.get(c, 0) + len(back) > limit:
                        continue
                    good = True
                    for b in back:
                        e = norm_edge(b, c)
                        if (not host.has_edge(b, c) or e in used or e in new_edges
                                or load[b] + bump.get(b, 0) + 1 > limit):
                            good = False
                            break
                    if good:
                        cands.append(c)
                if not cands:
                    ok = False
                    last = Stuck(ti, v, "no eligible host vertex", [],
                                 {"placed": len(phi), "limit": limit})
                    break
                c = rng.choice(cands)
                phi[v] = c
                taken.add(c)
                for b in back:
                    new_edges.add(norm_edge(b, c))
                    bump[b] = bump.get(b, 0) + 1
                bump[c] = bump.get(c, 0) + len(back)
            if ok:
                placed = (phi, new_edges, bump)
                break
        if placed is None:
            return last
        phi, new_edges, bump = placed
        for x, k in bump.items():
            load[x] += k
        used |= new_edges
        maps.append(phi)
        images.append(new_edges)
    emb = Embedding(maps, images, max(load, default=0))
    # post-conditions: disjoint images, labels respected, degree cap
    seen: set[Edge] = set()
    for t, phi, es in zip(templates, maps, images):
        assert not (seen & es), "embedded copies share an edge"
        seen |= es
        for v, c in phi.items():
            assert c in _label_set(t.labels[v], host, partition)
    assert emb.max_degree <= limit
    return emb


class FreeHost:
    """Complete r-partite host with k cells whose slices grow on demand.

    Base vertices are registered up front; `fresh(i, j)` mints a new vertex in
    slice U^i_j.  Vertex ids are never reused.
    """

    def __init__(self, r: int, k: int):
        self.r = r
        self.k = k
        self.colour: dict[int, int] = {}
        self.cell: dict[int, int] = {}
        self._next = 0

    def add_base(self, v: int, i: int, j: int):
        self.colour[v] = j
        self.cell[v] = i
        self._next = max(self._next, v + 1)

    def fresh(self, i: int, j: int) -> int:
        v = self._next
        self._next += 1
        self.colour[v] = j
        self.cell[v] = i
        return v

    def slice_sizes(self) -> dict[tuple[int, int], int]:
        out: dict[tuple[int, int], int] = {}
        for v, j in self.colour.items():
            key = (self.cell[v], j)
            out[key] = out.get(key, 0) + 1
        return out

    def place(self, t: LabelledGraph, default_cell: int = 0) -> tuple[dict[int, int], set[Edge]]:
        """Copy t onto fresh vertices; roots go to their labelled vertex.

        Class labels land in `default_cell`.  Every image edge has a fresh
        endpoint because roots are independent, so copies never collide.
        """
        t.validate(lambda v: self.colour[v])
        phi: dict[int, int] = {}
        for v in sorted(t.labels):
            lab = t.labels[v]
            if isinstance(lab, Singleton):
                if lab.v not in self.colour:
                    raise TemplateError(f"root label {lab.v} is not a host vertex")
                phi[v] = lab.v
            elif isinstance(lab, Cell):
                phi[v] = self.fresh(lab.i, lab.j)
            else:
                phi[v] = self.fresh(default_cell, lab.j)
        return phi, {norm_edge(phi[a], phi[b]) for a, b in t.edges}
