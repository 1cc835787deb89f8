"""Balancing graphs: excess multigraphs, theta gadgets, edge and degree balancers.

Vertices live in a `FreeHost` context that records each vertex's class and
cell.  A balancing graph B is a union of placed gadgets (copies of
theta(K(N)) for edge counts, theta(D_{x,y}) for single-vertex degree
transfers) plus absorbers, and it carries a clique certificate.  Applying it
to a leftover H peels off B' so that every vertex of an earlier cell sees a
later cell equally in every foreign class; B - B' gets its own certificate.

Skeleton vertices w^i_j are written as pairs (i, j).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from math import ceil
from typing import Callable, Iterable, Mapping, Sequence

from .core import Clique, ColouredGraph, Edge, clique_edges, norm_edge, verify_clique_partition
from .embedding import Cell, FreeHost, LabelledGraph, Singleton, degeneracy
from .gadgets import Absorber, build_absorber

W = tuple[int, int]
SkelEdge = tuple[W, W]


class CapacityExceeded(RuntimeError):
    pass


class AuxGraphFailed(RuntimeError):
    pass


class RoutingStuck(RuntimeError):
    pass


# ---------------------------------------------------------------- excess multigraphs

def skeleton_edges(r: int, k: int) -> list[SkelEdge]:
    """Edges of K_r(k): pairs of skeleton vertices in different classes."""
    ws = [(i, j) for i in range(k) for j in range(r)]
    return [(a, b) for a, b in combinations(ws, 2) if a[1] != b[1]]


@dataclass
class ExcessMultigraph:
    r: int
    k: int
    mult: dict[SkelEdge, int]

    def total(self) -> int:
        return sum(self.mult.values())

    def support(self) -> list[SkelEdge]:
        return sorted(e for e, m in self.mult.items() if m)

    def max_multiplicity(self) -> int:
        return max(self.mult.values(), default=0)

    def is_divisible(self) -> bool:
        return _divisible(self.mult, self.r, self.k)

    def minus(self, other: "ExcessMultigraph") -> "ExcessMultigraph":
        out = dict(self.mult)
        for e, m in other.mult.items():
            out[e] = out.get(e, 0) - m
            if out[e] < 0:
                raise ValueError("subtraction below zero")
        return ExcessMultigraph(self.r, self.k, {e: m for e, m in out.items() if m})

    def key(self) -> tuple:
        return tuple(sorted((e, m) for e, m in self.mult.items() if m))

    def to_dict(self) -> dict:
        return {"r": self.r, "k": self.k,
                "mult": [[list(a), list(b), m] for (a, b), m in sorted(self.mult.items()) if m]}


def _divisible(mult: Mapping[SkelEdge, int], r: int, k: int) -> bool:
    deg: dict[W, list[int]] = {}
    for (a, b), m in mult.items():
        if not m:
            continue
        deg.setdefault(a, [0] * r)[b[1]] += m
        deg.setdefault(b, [0] * r)[a[1]] += m
    for w, row in deg.items():
        if len({row[j] for j in range(r) if j != w[1]}) > 1:
            return False
    return True


def slot_counts(edges: Iterable[Edge], colour: Mapping[int, int], cell: Mapping[int, int]) -> dict[SkelEdge, int]:
    """e_H(U^{i1}_{j1}, U^{i2}_{j2}) for every skeleton edge with a nonzero count."""
    out: dict[SkelEdge, int] = {}
    for u, v in edges:
        a, b = (cell[u], colour[u]), (cell[v], colour[v])
        key = (a, b) if a < b else (b, a)
        out[key] = out.get(key, 0) + 1
    return out


def excess_multigraph(edges: Iterable[Edge], colour: Mapping[int, int], cell: Mapping[int, int],
                      r: int, k: int) -> ExcessMultigraph:
    counts = slot_counts(edges, colour, cell)
    by_pair: dict[tuple[int, int], list[SkelEdge]] = {}
    for e in skeleton_edges(r, k):
        by_pair.setdefault((e[0][0], e[1][0]), []).append(e)
    mult: dict[SkelEdge, int] = {}
    for slots in by_pair.values():
        low = min(counts.get(e, 0) for e in slots)
        for e in slots:
            m = counts.get(e, 0) - low
            if m:
                mult[e] = m
    return ExcessMultigraph(r, k, mult)


def _min_divisible_sub(mult: Mapping[SkelEdge, int], r: int, k: int, max_total: int | None = None,
                       strict_below: int | None = None) -> dict[SkelEdge, int] | None:
    """Least-total nonempty divisible x <= mult (lexicographic among ties)."""
    edges = sorted(e for e, m in mult.items() if m)
    if not edges:
        return None
    last: dict[W, int] = {}
    for idx, (a, b) in enumerate(edges):
        last[a] = idx
        last[b] = idx
    closing: dict[int, list[W]] = {}
    for w, idx in last.items():
        closing.setdefault(idx, []).append(w)
    cap = sum(mult[e] for e in edges) if max_total is None else max_total
    if strict_below is not None:
        cap = min(cap, strict_below - 1)
    x = [0] * len(edges)
    deg: dict[W, list[int]] = {w: [0] * r for w in last}

    def balanced(w: W) -> bool:
        row = deg[w]
        return len({row[j] for j in range(r) if j != w[1]}) <= 1

    def rec(i: int, rem: int) -> bool:
        if i == len(edges):
            return rem == 0
        a, b = edges[i]
        for val in range(min(mult[edges[i]], rem) + 1):
            x[i] = val
            deg[a][b[1]] += val
            deg[b][a[1]] += val
            ok = all(balanced(w) for w in closing.get(i, ()))
            if ok and rec(i + 1, rem - val):
                return True
            deg[a][b[1]] -= val
            deg[b][a[1]] -= val
        x[i] = 0
        return False

    for total in range(1, cap + 1):
        if rec(0, total):
            return {e: x[i] for i, e in enumerate(edges) if x[i]}
    return None


def is_irreducible(piece: ExcessMultigraph) -> bool:
    if not piece.total() or not piece.is_divisible():
        return False
    return _min_divisible_sub(piece.mult, piece.r, piece.k, strict_below=piece.total()) is None


def decompose_irreducible(em: ExcessMultigraph) -> list[ExcessMultigraph]:
    """Repeatedly split off a least-total nonempty divisible sub-multigraph.

    A least-total divisible piece has no proper nonempty divisible part, so
    every piece is irreducible by construction (and re-checked).
    """
    if not em.is_divisible():
        raise ValueError("excess multigraph is not K_r-divisible")
    rest = ExcessMultigraph(em.r, em.k, {e: m for e, m in em.mult.items() if m})
    out = []
    while rest.total():
        sub = _min_divisible_sub(rest.mult, em.r, em.k)
        if sub is None:
            raise AssertionError("divisible remainder without a divisible part")
        piece = ExcessMultigraph(em.r, em.k, sub)
        assert is_irreducible(piece)
        out.append(piece)
        rest = rest.minus(piece)
    total: dict[SkelEdge, int] = {}
    for p in out:
        for e, m in p.mult.items():
            total[e] = total.get(e, 0) + m
    assert total == {e: m for e, m in em.mult.items() if m}
    return out


@lru_cache(maxsize=None)
def irreducible_multiplicity_bound(r: int, k: int, total_cap: int = 8) -> int:
    """Largest edge multiplicity among irreducible divisible multigraphs on
    K_r(k) with total multiplicity <= total_cap (bounded search)."""
    edges = skeleton_edges(r, k)
    best = 1
    full = {e: total_cap for e in edges}
    # enumerate divisible vectors by total, keep irreducible ones
    last: dict[W, int] = {}
    for idx, (a, b) in enumerate(edges):
        last[a] = idx
        last[b] = idx
    closing: dict[int, list[W]] = {}
    for w, idx in last.items():
        closing.setdefault(idx, []).append(w)
    deg = {w: [0] * r for w in last}
    x = [0] * len(edges)
    found: list[dict] = []

    def balanced(w):
        row = deg[w]
        return len({row[j] for j in range(r) if j != w[1]}) <= 1

    def rec(i, rem):
        if i == len(edges):
            if rem == 0:
                found.append({e: x[t] for t, e in enumerate(edges) if x[t]})
            return
        a, b = edges[i]
        for val in range(rem + 1):
            x[i] = val
            deg[a][b[1]] += val
            deg[b][a[1]] += val
            if all(balanced(w) for w in closing.get(i, ())):
                rec(i + 1, rem - val)
            deg[a][b[1]] -= val
            deg[b][a[1]] -= val
        x[i] = 0

    for total in range(1, total_cap + 1):
        found.clear()
        rec(0, total)
        for vec in found:
            if max(vec.values()) > best and is_irreducible(ExcessMultigraph(r, k, vec)):
                best = max(vec.values())
    del full
    return best


# ---------------------------------------------------------------- theta gadgets

@dataclass
class ThetaGadget:
    """theta of a skeleton multigraph: each skeleton edge ab becomes a copy of
    the link graph K[W^{g(a)}, W^{g(b)}] minus ab, joined to a and b crosswise."""
    kind: str
    r: int
    template: LabelledGraph
    colour: dict[int, int]
    originals: dict[int, tuple[int, int]]      # template id -> (group, class)
    pieces: list[tuple[tuple[int, int], set[Edge]]]   # (skeleton edge as template ids, edges)
    meta: dict = field(default_factory=dict)

    def edges_of(self, indices: Iterable[int]) -> set[Edge]:
        out: set[Edge] = set()
        for i in indices:
            out |= self.pieces[i][1]
        return out

    def graph(self, indices: Iterable[int] | None = None) -> ColouredGraph:
        es = self.template.edges if indices is None else self.edges_of(indices)
        g = ColouredGraph(self.r, {v: self.colour[v] for e in es for v in e})
        g.edges = set(es)
        return g


def _theta(kind: str, r: int, originals: dict[int, tuple[int, int]], base_label: dict[int, object],
           top_label: dict[int, object], multiedges: list[tuple[int, int]]) -> ThetaGadget:
    colour = {w: gj[1] for w, gj in originals.items()}
    labels = dict(top_label)
    groups: dict[int, list[int]] = {}
    for w, (g, _j) in originals.items():
        groups.setdefault(g, []).append(w)
    nxt = max(originals) + 1
    pieces = []
    all_edges: set[Edge] = set()
    for a, b in multiedges:
        ga, gb = originals[a][0], originals[b][0]
        members = sorted(set(groups[ga]) | set(groups[gb]))
        copy = {}
        for w in members:
            copy[w] = nxt
            colour[nxt] = colour[w]
            labels[nxt] = base_label[w]
            nxt += 1
        es: set[Edge] = set()
        for u, v in combinations(members, 2):
            if colour[u] == colour[v]:
                continue
            if ga != gb and originals[u][0] == originals[v][0]:
                continue
            if {u, v} == {a, b}:
                continue
            es.add(norm_edge(copy[u], copy[v]))
        es.add(norm_edge(a, copy[b]))
        es.add(norm_edge(b, copy[a]))
        assert not (es & all_edges)
        all_edges |= es
        pieces.append(((a, b), es))
    return ThetaGadget(kind, r, LabelledGraph(labels, all_edges), colour, dict(originals), pieces)


def build_theta_KN(k: int, r: int, N: int, cells: Sequence[int] | None = None) -> ThetaGadget:
    """theta(K(N)) with w^i_j = template vertex i*r + j labelled U^{cells[i]}_j."""
    cells = list(range(k)) if cells is None else list(cells)
    originals = {i * r + j: (i, j) for i in range(k) for j in range(r)}
    base = {w: Cell(cells[g], j) for w, (g, j) in originals.items()}
    multi = []
    keys = []
    for (a, b) in skeleton_edges(r, k):
        for t in range(N):
            multi.append((a[0] * r + a[1], b[0] * r + b[1]))
            keys.append(((a, b), t))
    th = _theta("thetaKN", r, originals, base, base, multi)
    th.meta = {"k": k, "N": N, "index": {key: i for i, key in enumerate(keys)}, "cells": cells}
    return th


def theta_pair_count(I: Mapping[SkelEdge, int], a: W, b: W) -> int:
    """e_{theta(I)}(U^{a}, U^{b}) = e_I(W^{a_i}, W^{b_i}) + m_I(ab)."""
    ga, gb = sorted((a[0], b[0]))
    between = sum(m for (x, y), m in I.items() if sorted((x[0], y[0])) == [ga, gb])
    key = (a, b) if a < b else (b, a)
    return between + I.get(key, 0)


def theta_indices_for(th: ThetaGadget, I: Mapping[SkelEdge, int]) -> list[int]:
    idx = th.meta["index"]
    out = []
    for e, m in I.items():
        if m > th.meta["N"]:
            raise CapacityExceeded(f"multiplicity {m} on {e} exceeds N={th.meta['N']}")
        out += [idx[(e, t)] for t in range(m)]
    return sorted(out)


def build_D_gadgets(x: int, y: int, j1: int, j2: int, r: int, cells: tuple[int, int] = (0, 1)) -> ThetaGadget:
    """theta(D_{x,y}) with the sub-gadget theta(D^{j2}_{x->y}) recorded in meta.

    D_0 = K_r(3) on w^g_j (template id g*r + j); groups 0 and 1 are labelled
    by the first cell, group 2 by the second.  w^0_{j1} is rooted at x and
    w^1_{j1} at y.
    """
    if j1 == j2:
        raise ValueError("j2 must differ from j1")
    i1, i2 = cells
    originals = {g * r + j: (g, j) for g in range(3) for j in range(r)}
    base = {w: Cell(i1 if g < 2 else i2, j) for w, (g, j) in originals.items()}
    top = dict(base)
    top[0 * r + j1] = Singleton(x)
    top[1 * r + j1] = Singleton(y)
    multi = [(a, b) for a, b in combinations(sorted(originals), 2) if originals[a][1] != originals[b][1]]
    th = _theta("Dxy", r, originals, base, top, multi)
    w = lambda g, j: g * r + j
    sub = set()
    for a, b in combinations([w(0, j) for j in range(r) if j != j1], 2):
        sub.add(norm_edge(a, b))
    for a, b in combinations([w(2, j) for j in range(r) if j != j1], 2):
        sub.add(norm_edge(a, b))
    for j in range(r):
        if j not in (j1, j2):
            sub.add(norm_edge(w(0, j1), w(2, j)))
            sub.add(norm_edge(w(0, j), w(1, j1)))
    sub.add(norm_edge(w(0, j1), w(0, j2)))
    sub.add(norm_edge(w(1, j1), w(2, j2)))
    sel = [i for i, (e, _) in enumerate(th.pieces) if norm_edge(*e) in sub]
    assert len(sel) == len(sub)
    th.meta = {"x": x, "y": y, "j1": j1, "j2": j2, "cells": cells, "transfer": sel,
               "x_id": w(0, j1), "y_id": w(1, j1)}
    return th


def theta_audit(th: ThetaGadget) -> dict:
    d, order = degeneracy(th.template)
    r = th.r
    out = {"order": len(th.template.labels), "degeneracy": d}
    if th.kind == "thetaKN":
        k, N = th.meta["k"], th.meta["N"]
        out["order_bound"] = len(th.template.labels) <= k * k * r ** 3 * N
    else:
        out["order_bound"] = len(th.template.labels) <= 10 * r ** 3
    out["degeneracy_ok"] = d <= r - 1
    return out


# ---------------------------------------------------------------- degree audits

def degree_into(edges: Iterable[Edge], colour: Mapping[int, int], cell: Mapping[int, int]) -> dict[int, dict[W, int]]:
    out: dict[int, dict[W, int]] = {}
    for u, v in edges:
        out.setdefault(u, {})
        out.setdefault(v, {})
        kv, ku = (cell[v], colour[v]), (cell[u], colour[u])
        out[u][kv] = out[u].get(kv, 0) + 1
        out[v][ku] = out[v].get(ku, 0) + 1
    return out


def cross_balance_defects(edges: Iterable[Edge], colour: Mapping[int, int], cell: Mapping[int, int],
                          r: int, k: int) -> list[tuple]:
    """(v, i, j1, j2) with v in an earlier cell than i and d(v,U^i_j1) != d(v,U^i_j2)."""
    deg = degree_into(edges, colour, cell)
    bad = []
    for v, row in deg.items():
        for i in range(cell[v] + 1, k):
            vals = [(j, row.get((i, j), 0)) for j in range(r) if j != colour[v]]
            for (ja, da), (jb, db) in zip(vals, vals[1:]):
                if da != db:
                    bad.append((v, i, ja, jb))
    return bad


def edge_balance_defects(edges: Iterable[Edge], colour: Mapping[int, int], cell: Mapping[int, int],
                         r: int, k: int) -> list[tuple]:
    counts = slot_counts(edges, colour, cell)
    bad = []
    for i1 in range(k):
        for i2 in range(i1 + 1, k):
            for j1 in range(r):
                vals = [counts.get(((i1, j1), (i2, j)), 0) for j in range(r) if j != j1]
                if len(set(vals)) > 1:
                    bad.append((i1, j1, i2, vals))
    return bad


def local_balance_defects(edges: Iterable[Edge], colour: Mapping[int, int], cell: Mapping[int, int],
                          r: int) -> list[tuple]:
    deg = degree_into(edges, colour, cell)
    bad = []
    for v, row in deg.items():
        i = cell[v]
        vals = {row.get((i, j), 0) for j in range(r) if j != colour[v]}
        if len(vals) > 1:
            bad.append((v, i))
    return bad


def transfer_table(edges: Iterable[Edge], colour, cell, v: int, i2: int, j3: int, j4: int) -> int:
    deg = degree_into(edges, colour, cell).get(v, {})
    return deg.get((i2, j3), 0) - deg.get((i2, j4), 0)


# ---------------------------------------------------------------- placement and absorbers

@dataclass
class Placed:
    gadget: ThetaGadget
    phi: dict[int, int]
    edges: set[Edge]
    absorber: Absorber
    meta: dict = field(default_factory=dict)

    def image(self, indices: Iterable[int]) -> set[Edge]:
        out: set[Edge] = set()
        for i in indices:
            for a, b in self.gadget.pieces[i][1]:
                out.add(norm_edge(self.phi[a], self.phi[b]))
        return out


_ABSORBER_CACHE: dict[tuple, Absorber] = {}


class AbsorberBank:
    """Abstract absorbers cached by gadget shape and copied onto fresh host vertices.

    The abstract absorber for a shape is built once per process; only the copy
    is per balancing graph.
    """

    def __init__(self, host: FreeHost, park_cell: int = 0, s: int | None = None):
        self.host = host
        self.park_cell = park_cell
        self.s = s
        self._cache = _ABSORBER_CACHE
        self.built = 0
        self.placed = 0

    def absorber(self, key: tuple, th: ThetaGadget, indices: Iterable[int] | None, phi: Mapping[int, int]) -> Absorber:
        key = key + (self.s,)
        ab = self._cache.get(key)
        if ab is None:
            ab = build_absorber(th.graph(indices), s=self.s, fit_cube=False)
            self._cache[key] = ab
            self.built += 1
        self.placed += 1
        m = {}
        for v in ab.target.colour:
            m[v] = phi[v]
        for v, c in sorted(ab.graph.colour.items()):
            if v not in m:
                m[v] = self.host.fresh(self.park_cell, c)
        return _relabel(ab, m)


def _relabel(ab: Absorber, m: Mapping[int, int]) -> Absorber:
    r = ab.graph.r
    g = ColouredGraph(r)
    g.colour = {m[v]: c for v, c in ab.graph.colour.items()}
    g.edges = {norm_edge(m[a], m[b]) for a, b in ab.graph.edges}
    t = ColouredGraph(r)
    t.colour = {m[v]: c for v, c in ab.target.colour.items()}
    t.edges = {norm_edge(m[a], m[b]) for a, b in ab.target.edges}
    mp = lambda cs: [tuple(sorted(m[v] for v in c)) for c in cs]
    return Absorber(g, t, mp(ab.cert_alone), mp(ab.cert_with_target), ab.s, {"order": len(g)})


# ---------------------------------------------------------------- auxiliary graph and routing

def aux_graph(vertices: Sequence[int], p: float, rng: random.Random, retries: int = 50) -> dict[int, set[int]]:
    """Random graph on `vertices` with Δ < 2pm and |N(S)| >= p^2 m / 2 for |S| <= 2."""
    m = len(vertices)
    need = p * p * m / 2
    for _ in range(retries):
        adj = {v: set() for v in vertices}
        for u, v in combinations(vertices, 2):
            if rng.random() < p:
                adj[u].add(v)
                adj[v].add(u)
        if max((len(s) for s in adj.values()), default=0) >= 2 * p * m:
            continue
        if any(len(adj[v]) < need for v in vertices):
            continue
        if any(len(adj[u] & adj[v]) < need for u, v in combinations(vertices, 2)):
            continue
        return adj
    raise AuxGraphFailed(f"no auxiliary graph on {m} vertices with p={p}")


def route_pairs(adj: Mapping[int, set[int]], pairs: Sequence[tuple[int, int]], rng: random.Random,
                usable: Callable[[int, int], bool] | None = None) -> list[tuple[int, int, int]]:
    """Edge-disjoint 2-edge paths u - t - w in the auxiliary graph, one per pair."""
    used: set[Edge] = set()
    out = []
    for u, w in pairs:
        cands = []
        for t in sorted(adj[u] & adj[w]):
            if t in (u, w):
                continue
            if norm_edge(u, t) in used or norm_edge(t, w) in used:
                continue
            if usable is not None and not (usable(u, t) and usable(t, w)):
                continue
            cands.append(t)
        if not cands:
            raise RoutingStuck(f"no free middle vertex for {u} -> {w}")
        t = rng.choice(cands)
        used.add(norm_edge(u, t))
        used.add(norm_edge(t, w))
        out.append((u, t, w))
    return out


def surplus_pairs(deg: Mapping[int, Mapping[W, int]], verts: Sequence[int], i2: int, j: int,
                  jmin: int) -> list[tuple[int, int]]:
    """The bijection g_j: i-th surplus copy to i-th deficit copy."""
    plus, minus = [], []
    for v in sorted(verts):
        row = deg.get(v, {})
        f = row.get((i2, j), 0) - row.get((i2, jmin), 0)
        plus += [v] * max(f, 0)
        minus += [v] * max(-f, 0)
    if len(plus) != len(minus):
        raise ValueError(f"edge counts unbalanced for class {j}: {len(plus)} vs {len(minus)}")
    return list(zip(plus, minus))


# ---------------------------------------------------------------- balancing graph

@dataclass
class BalancingGraph:
    host: FreeHost
    r: int
    k: int
    N: int
    J: list[Placed]
    D: list[Placed]
    absorbers: list[Absorber]
    certificate: list
    bank: AbsorberBank | None
    plan: dict = field(default_factory=dict)
    telemetry: dict = field(default_factory=dict)

    def gadget_edges(self) -> set[Edge]:
        out: set[Edge] = set()
        for p in self.J + self.D:
            out |= p.edges
        return out

    def edges(self) -> set[Edge]:
        out = self.gadget_edges()
        for a in self.absorbers:
            out |= a.graph.edges
        return out

    def verify(self) -> bool:
        return verify_clique_partition(self.edges(), self.certificate, self.host.colour, self.r)


@dataclass
class BalanceResult:
    B_prime: set[Edge]
    H_prime: set[Edge]
    certificate: list
    telemetry: dict = field(default_factory=dict)


_KN_CACHE: dict[tuple, ThetaGadget] = {}


def _kn(k: int, r: int, N: int) -> ThetaGadget:
    key = (k, r, N)
    if key not in _KN_CACHE:
        _KN_CACHE[key] = build_theta_KN(k, r, N)
    return _KN_CACHE[key]


def _place(host: FreeHost, th: ThetaGadget, meta: dict) -> Placed:
    phi, es = host.place(th.template)
    return Placed(th, phi, es, None, meta)


def _apply_pieces(J: Sequence[Placed], pieces: Sequence[ExcessMultigraph]) -> set[Edge]:
    out: set[Edge] = set()
    for pl, piece in zip(J, pieces):
        removed = pl.image(theta_indices_for(pl.gadget, piece.mult))
        out |= pl.edges - removed
    return out


def _route_round(host: FreeHost, current: set[Edge], i1: int, i2: int, j1: int, rng: random.Random,
                 pick: Callable[[list[tuple[int, int]], int], list[tuple[int, int, int]]]) -> list[tuple]:
    """One application of the single-class degree balancer: returns
    (j, x, y) transfers for slice U^{i1}_{j1} against cell i2."""
    r = host.r
    deg = degree_into(current, host.colour, host.cell)
    verts = [v for v in deg if host.cell[v] == i1 and host.colour[v] == j1]
    jmin = min(j for j in range(r) if j != j1)
    moves = []
    for j in range(r):
        if j in (j1, jmin):
            continue
        pairs = surplus_pairs(deg, verts, i2, j, jmin)
        if not pairs:
            continue
        for u, t, w in pick(pairs, j):
            moves.append((j, u, t))
            moves.append((j, t, w))
    return moves


def build_balancing_graph(host: FreeHost, demand: Iterable[Sequence[int]] | None = None,
                          gamma: float = 0.01, copies: int | None = None, p: float = 0.9,
                          min_aux: int = 8, seed: int = 0, total_cap: int = 10,
                          with_absorbers: bool = True) -> BalancingGraph:
    """Balancing graph in a free host.

    With `demand` (targeted mode) the copies of theta(K(N)) and the transfer
    gadgets are exactly the ones needed to balance that leftover.  Without
    it, `copies` (default ceil(3 gamma k^2 r^2 n^2)) copies of theta(K(N)) are
    placed and a transfer gadget is placed for every auxiliary-graph edge,
    direction and class.
    """
    r, k = host.r, host.k
    rng = random.Random(seed)
    N = irreducible_multiplicity_bound(r, k, total_cap)
    kn = _kn(k, r, N)
    plan: dict = {"targeted": demand is not None}
    J: list[Placed] = []
    D: list[Placed] = []
    if demand is not None:
        H = {norm_edge(*e) for e in demand}
        pieces = decompose_irreducible(excess_multigraph(H, host.colour, host.cell, r, k))
        for piece in pieces:
            if piece.max_multiplicity() > N:
                raise CapacityExceeded(f"irreducible piece with multiplicity {piece.max_multiplicity()} > N={N}")
        for _ in pieces:
            J.append(_place(host, kn, {"kind": "J"}))
        current = H | _apply_pieces(J, pieces)
        assert not edge_balance_defects(current, host.colour, host.cell, r, k)
        routes = []
        for i1 in range(k):
            for i2 in range(i1 + 1, k):
                for j1 in range(r):
                    def pick(pairs, j, i1=i1, j1=j1):
                        verts = sorted({v for pr in pairs for v in pr})
                        while len(verts) < min_aux:
                            verts.append(host.fresh(i1, j1))
                        adj = aux_graph(verts, p, rng)
                        return route_pairs(adj, pairs, rng)
                    moves = _route_round(host, current, i1, i2, j1, rng, pick)
                    for j, x, y in moves:
                        th = build_D_gadgets(x, y, j1, j, r, (i1, i2))
                        pl = _place(host, th, {"kind": "D", "x": x, "y": y, "j1": j1, "j": j, "cells": (i1, i2)})
                        D.append(pl)
                        current |= pl.image(th.meta["transfer"])
                        routes.append((i1, i2, j1, j, x, y))
        assert not cross_balance_defects(current, host.colour, host.cell, r, k)
        plan.update(pieces=[pc.key() for pc in pieces], routes=routes)
    else:
        n = max(host.slice_sizes().values(), default=0) * k
        ell = copies if copies is not None else ceil(3 * gamma * k * k * r * r * n * n)
        for _ in range(ell):
            J.append(_place(host, kn, {"kind": "J"}))
        for i1 in range(k):
            for i2 in range(i1 + 1, k):
                for j1 in range(r):
                    verts = sorted(v for v in host.colour if host.cell[v] == i1 and host.colour[v] == j1)
                    if len(verts) < 3:
                        continue
                    adj = aux_graph(verts, p, rng)
                    for a in verts:
                        for b in sorted(adj[a]):
                            for j in range(r):
                                if j == j1:
                                    continue
                                th = build_D_gadgets(a, b, j1, j, r, (i1, i2))
                                D.append(_place(host, th, {"kind": "D", "x": a, "y": b, "j1": j1, "j": j,
                                                           "cells": (i1, i2)}))
        plan["copies"] = ell
    bank = AbsorberBank(host) if with_absorbers else None
    absorbers: list[Absorber] = []
    cert: list = []
    if bank is not None:
        for pl in J + D:
            key = ("KN", k, r, N) if pl.meta["kind"] == "J" else ("D", r)
            pl.absorber = bank.absorber(key, pl.gadget, None, pl.phi)
            absorbers.append(pl.absorber)
            cert += pl.absorber.cert_with_target
    B = BalancingGraph(host, r, k, N, J, D, absorbers, cert, bank, plan)
    gadget_edges = B.gadget_edges()
    B.telemetry = {
        "J": len(J), "D": len(D), "N": N,
        "gadget_edges": len(gadget_edges),
        "local_balance_defects_gadgets": len(local_balance_defects(gadget_edges, host.colour, host.cell, r)),
        "absorbers_built": bank.built if bank else 0,
    }
    return B


def apply_balancing(B: BalancingGraph, demand: Iterable[Sequence[int]], seed: int = 0) -> BalanceResult:
    """Select B' inside B so that H + B' is cross-cell balanced; certify B - B'."""
    host, r, k = B.host, B.r, B.k
    rng = random.Random(seed)
    H = {norm_edge(*e) for e in demand}
    pieces = decompose_irreducible(excess_multigraph(H, host.colour, host.cell, r, k))
    if len(pieces) > len(B.J):
        raise CapacityExceeded(f"{len(pieces)} irreducible pieces but only {len(B.J)} edge balancers")
    current = H | _apply_pieces(B.J, pieces)
    bad = edge_balance_defects(current, host.colour, host.cell, r, k)
    if bad:
        raise AssertionError(f"edge balancing left defects {bad[:3]}")
    edge_stage = set(current)

    avail: dict[tuple, list[int]] = {}
    for idx, pl in enumerate(B.D):
        m = pl.meta
        avail.setdefault((m["cells"], m["j1"], m["j"], m["x"], m["y"]), []).append(idx)
    chosen: list[int] = []
    planned = list(B.plan.get("routes", ()))
    for i1 in range(k):
        for i2 in range(i1 + 1, k):
            for j1 in range(r):
                def usable(j, i1=i1, i2=i2, j1=j1):
                    return lambda x, y: bool(avail.get(((i1, i2), j1, j, x, y)))

                def pick(pairs, j, i1=i1, i2=i2, j1=j1):
                    adj: dict[int, set[int]] = {v: set() for pr in pairs for v in pr}
                    for (cells, a1, jj, x, y), lst in avail.items():
                        if cells == (i1, i2) and a1 == j1 and jj == j and lst:
                            adj.setdefault(x, set()).add(y)
                            adj.setdefault(y, set()).add(x)
                    return route_pairs(adj, pairs, rng, usable(j))

                if B.plan.get("targeted"):
                    want = [(j, x, y) for (a, b, c, j, x, y) in planned if (a, b, c) == (i1, i2, j1)]
                    got = None
                    try:
                        probe = _route_round(host, current, i1, i2, j1, rng,
                                             lambda pairs, j: [(u, None, w) for u, w in pairs])
                        got = probe
                    except ValueError:
                        pass
                    moves = want if got is not None and _same_endpoints(got, want) else \
                        _route_round(host, current, i1, i2, j1, rng, pick)
                else:
                    moves = _route_round(host, current, i1, i2, j1, rng, pick)
                for j, x, y in moves:
                    lst = avail.get(((i1, i2), j1, j, x, y))
                    if not lst:
                        raise RoutingStuck(f"no transfer gadget {x}->{y} for class {j}")
                    idx = lst.pop(0)
                    chosen.append(idx)
                    pl = B.D[idx]
                    current |= pl.image(pl.gadget.meta["transfer"])
    defects = cross_balance_defects(current, host.colour, host.cell, r, k)
    if defects:
        raise AssertionError(f"degree balancing left defects {defects[:3]}")
    B_prime = current - H

    cert: list = []
    if B.bank is not None:
        for s, pl in enumerate(B.J):
            if s < len(pieces):
                idx = theta_indices_for(pl.gadget, pieces[s].mult)
                rest = B.bank.absorber(("KN-I", k, r, B.N, pieces[s].key()), pl.gadget, idx, pl.phi)
                B.absorbers.append(rest)
                B.certificate += rest.cert_alone
                cert += rest.cert_with_target + pl.absorber.cert_alone
            else:
                cert += pl.absorber.cert_with_target
        sel = set(chosen)
        for idx, pl in enumerate(B.D):
            if idx in sel:
                m = pl.gadget.meta
                keep = set(m["transfer"])
                idxs = [i for i in range(len(pl.gadget.pieces)) if i not in keep]
                rest = B.bank.absorber(("D-rest", r, m["j1"], m["j2"]), pl.gadget, idxs, pl.phi)
                B.absorbers.append(rest)
                B.certificate += rest.cert_alone
                cert += rest.cert_with_target + pl.absorber.cert_alone
            else:
                cert += pl.absorber.cert_with_target
        ok = verify_clique_partition(B.edges() - B_prime, cert, host.colour, r)
        if not ok:
            raise AssertionError("certificate for B - B' does not verify")
    tele = {"pieces": len(pieces), "transfers": len(chosen),
            "edge_stage_edges": len(edge_stage), "B_prime_edges": len(B_prime)}
    return BalanceResult(B_prime, current, cert, tele)


def _same_endpoints(probe: list[tuple], want: list[tuple]) -> bool:
    """Planned 2-edge paths serve the same surplus/deficit pairs as now."""
    need = sorted((j, u, w) for j, u, _t, w in _as_paths(probe))
    have = sorted((j, u, w) for j, u, _t, w in _as_paths(want))
    return need == have


def _as_paths(moves: list[tuple]) -> list[tuple]:
    out = []
    for a in range(0, len(moves) - 1, 2):
        (j, u, t), (_j, t2, w) = moves[a], moves[a + 1]
        out.append((j, u, t, w))
    return out


def certificate_edges(cert: Iterable[Clique]) -> set[Edge]:
    out: set[Edge] = set()
    for c in cert:
        out |= set(clique_edges(c))
    return out
