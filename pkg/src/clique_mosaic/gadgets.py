"""K_r-expansions, the bank graph M_h, transformers and absorbers.

Everything is first built over fresh abstract vertices drawn from a
`ColouredGraph` used as an id/colour registry (the "universe").  Every claim
that some graph decomposes into K_r's comes with an explicit list of cliques,
and constructors check those lists before returning.

Transformer layout for a source H and an identification phi: H -> H':
  Z^{xy}   r-2 fresh vertices per edge xy of H, one in each class missing from xy
  S^x      s fresh vertices in every class other than that of x
  E_H      x to Z^x            E_H'   phi(x) to Z^x        E_Z   cliques on each Z^{xy}
  E_S      x to S^x            E_S'   phi(x) to S^x
  F1[x]    perfect K_{r-1}-matching of S^x + Z^x with Z^x independent
  F2[x]    perfect K_{r-1}-matching of S^x, edge-disjoint from F1[x]
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Iterable, Mapping, Sequence

from .core import (Clique, ColouredGraph, Edge, MultipartiteGraph, clique_edges, hat_delta,
                   norm_edge, solve_clique_partition, verify_clique_partition)
from .embedding import (ClassLabel, Embedding, LabelledGraph, Singleton, Stuck, degeneracy,
                        embed_all)


class NotIdentification(ValueError):
    pass


class EdgeAbsent(KeyError):
    pass


class MatchingUnavailable(ValueError):
    """The cyclic F-matchings do not exist for the requested s."""


def _universe(*graphs: ColouredGraph) -> ColouredGraph:
    u = ColouredGraph(graphs[0].r)
    for g in graphs:
        for v, c in g.colour.items():
            u.ensure_vertex(v, c)
    return u


def _check(ok: bool, what: str):
    if not ok:
        raise AssertionError(f"certificate check failed: {what}")


# ---------------------------------------------------------------- expansions

@dataclass
class Expansion:
    graph: ColouredGraph
    pieces: dict[Edge, tuple[int, ...]]   # expanded edge -> (u_0, ..., u_{r-1})


def _expand_into(g: ColouredGraph, uni: ColouredGraph, x: int, y: int) -> tuple[int, ...]:
    r = g.r
    j1, j2 = g.colour[x], g.colour[y]
    us = []
    for j in range(r):
        v = uni.add_vertex(j)
        g.ensure_vertex(v, j)
        us.append(v)
    for a, b in combinations(range(r), 2):
        if {a, b} != {j1, j2}:
            g.add_edge(us[a], us[b])
    g.add_edge(x, us[j2])
    g.add_edge(y, us[j1])
    return tuple(us)


def kr_expand(h: ColouredGraph, edge: Sequence[int], universe: ColouredGraph | None = None) -> Expansion:
    """Replace xy by F = K_r - u_{c(x)}u_{c(y)} plus the edges x u_{c(y)}, y u_{c(x)}."""
    e = norm_edge(*edge)
    if e not in h.edges:
        raise EdgeAbsent(e)
    uni = universe if universe is not None else _universe(h)
    g = h.copy()
    g.edges.discard(e)
    return Expansion(g, {e: _expand_into(g, uni, *e)})


def expand_all(h: ColouredGraph, universe: ColouredGraph | None = None) -> Expansion:
    uni = universe if universe is not None else _universe(h)
    g = ColouredGraph(h.r, h.colour)
    pieces = {e: _expand_into(g, uni, *e) for e in sorted(h.edges)}
    return Expansion(g, pieces)


def identify(g: ColouredGraph, mapping: Mapping[int, int], target_colour: Mapping[int, int] | None = None) -> ColouredGraph:
    """Image of g under a vertex map; fails if two edges collide or a class changes."""
    col = dict(target_colour or {})
    out = ColouredGraph(g.r)
    for v, c in g.colour.items():
        w = mapping.get(v, v)
        if col.get(w, out.colour.get(w, c)) != c:
            raise NotIdentification(f"vertex {v} -> {w} changes class")
        out.ensure_vertex(w, c)
    for a, b in g.edges:
        e = norm_edge(mapping.get(a, a), mapping.get(b, b))
        if e[0] == e[1] or e in out.edges:
            raise NotIdentification(f"edge ({a},{b}) collides after identification")
        out.edges.add(e)
    return out


def attach_back(exp: Expansion) -> ColouredGraph:
    """Identify x with u_{c(x)} for every expanded edge xy (x the smaller id)."""
    m = {}
    for (x, _y), us in exp.pieces.items():
        m[us[exp.graph.colour[x]]] = x
    return identify(exp.graph, m)


def with_pendant_cliques(h: ColouredGraph, exp: Expansion) -> ColouredGraph:
    """h plus, for each expanded edge xy, the K_r on x and the u_j with j != c(x)."""
    g = h.copy()
    for (x, _y), us in exp.pieces.items():
        cx = h.colour[x]
        members = [x] + [u for j, u in enumerate(us) if j != cx]
        for u in members[1:]:
            g.ensure_vertex(u, exp.graph.colour[u])
        for a, b in combinations(members, 2):
            g.add_edge(a, b)
    return g


# ---------------------------------------------------------------- M_h

@dataclass
class MhGraph:
    graph: ColouredGraph
    centres: tuple[int, ...]
    pieces: dict[tuple[int, int, int], tuple[int, ...]]
    h: int


def build_M_h(r: int, h: int, universe: ColouredGraph | None = None) -> MhGraph:
    """Expansion of the multigraph with h parallel edges on every pair of an r-clique."""
    if h < 1:
        raise ValueError("h must be at least 1")
    uni = universe if universe is not None else ColouredGraph(r)
    centres = tuple(uni.add_vertex(j) for j in range(r))
    g = ColouredGraph(r, {m: j for j, m in enumerate(centres)})
    pieces = {}
    for a, b in combinations(range(r), 2):
        for t in range(h):
            pieces[(a, b, t)] = _expand_into(g, uni, centres[a], centres[b])
    return MhGraph(g, centres, pieces, h)


def as_template(g: ColouredGraph, roots: Iterable[int] = ()) -> LabelledGraph:
    rs = set(roots)
    labels = {v: (Singleton(v) if v in rs else ClassLabel(c)) for v, c in g.colour.items()}
    return LabelledGraph(labels, set(g.edges))


# ---------------------------------------------------------------- transformers

@dataclass
class TransformerTemplate:
    r: int
    s: int
    source: ColouredGraph
    target: ColouredGraph
    phi: dict[int, int]
    Z: dict[Edge, dict[int, int]]
    S: dict[int, dict[int, list[int]]]
    groups: dict[str, set[Edge]]
    F1: dict[int, list[tuple[int, ...]]]
    F2: dict[int, list[tuple[int, ...]]]
    graph: ColouredGraph
    cert_with_source: list[Clique]
    cert_with_target: list[Clique]
    audit: dict = field(default_factory=dict)

    def z_vertices(self) -> list[int]:
        return sorted(z for d in self.Z.values() for z in d.values())

    def t1_edges(self) -> set[Edge]:
        return self.groups["E_H"] | self.groups["E_H'"] | self.groups["E_Z"]


def _degree_per_class(g: ColouredGraph) -> dict[int, int]:
    out = {}
    for v, row in g.degree_table().items():
        c = g.colour[v]
        vals = {row[j] for j in range(g.r) if j != c}
        if len(vals) > 1:
            raise NotIdentification(f"vertex {v} is unbalanced: {row}")
        out[v] = vals.pop() if vals else 0
    return out


def check_identification(source: ColouredGraph, target: ColouredGraph, phi: Mapping[int, int]) -> None:
    """phi must be a class-preserving surjection, bijective on edges, whose
    fibres have pairwise disjoint neighbourhoods."""
    if set(source.colour) & set(target.colour):
        raise NotIdentification("source and target share vertices")
    if set(phi) != set(source.colour):
        raise NotIdentification("phi is not defined on every source vertex")
    for v, w in phi.items():
        if w not in target.colour or target.colour[w] != source.colour[v]:
            raise NotIdentification(f"phi({v}) = {w} is not a same-class target vertex")
    if set(phi.values()) != set(target.colour):
        raise NotIdentification("phi is not onto the target vertices")
    image = [norm_edge(phi[a], phi[b]) for a, b in source.edges]
    if len(set(image)) != len(image) or set(image) != target.edges:
        raise NotIdentification("phi is not a bijection between edge sets")
    adj = source.adjacency()
    fibres: dict[int, list[int]] = {}
    for v, w in phi.items():
        fibres.setdefault(w, []).append(v)
    for vs in fibres.values():
        for a, b in combinations(vs, 2):
            if adj[a] & adj[b]:
                raise NotIdentification(f"identified vertices {a},{b} share a neighbour")


def _cyclic_matchings(zl: list[list[int]], sl: list[list[int]], s: int):
    """Round-robin F1 on Z+S (Z listed first) and a shifted F2 on S avoiding F1."""
    m = len(zl)
    zc = len(zl[0])
    n_x = zc + s
    if any(len(z) != zc for z in zl) or m * zc > n_x:
        raise MatchingUnavailable(f"s={s} too small for {zc} Z-vertices per class")
    lists = [zl[i] + sl[i] for i in range(m)]
    f1 = [tuple(lists[i][(t + i * zc) % n_x] for i in range(m)) for t in range(n_x)]
    zset = {z for z in sum(zl, [])}
    f1_edges = {e for c in f1 for e in clique_edges(sorted(c))}
    for c in f1:
        if sum(1 for v in c if v in zset) > 1:
            raise MatchingUnavailable("Z is not independent in F1")
    for delta in range(max(s, 1)):
        f2 = [tuple(sl[i][(t + i * delta) % s] for i in range(m)) for t in range(s)]
        if all(e not in f1_edges for c in f2 for e in clique_edges(sorted(c))):
            return f1, f2
    raise MatchingUnavailable(f"no shift gives F2 disjoint from F1 at s={s}")


def min_transformer_s(source: ColouredGraph) -> int:
    d = max(_degree_per_class(source).values(), default=0)
    return max(1, (source.r - 2) ** 2 * d)


def build_transformer(H: ColouredGraph, Hp: ColouredGraph, phi: Mapping[int, int], s: int | None = None,
                      universe: ColouredGraph | None = None) -> TransformerTemplate:
    """A graph T with T+H and T+H' both K_r-decomposable, with both certificates.

    With s=None the smallest s for which the cyclic matchings exist is used.
    """
    r = H.r
    if not H.is_divisible() or not Hp.is_divisible():
        raise NotIdentification("source and target must be K_r-divisible")
    check_identification(H, Hp, phi)
    phi = dict(phi)
    uni = universe if universe is not None else _universe(H, Hp)
    if s is None:
        s = min_transformer_s(H)
        while True:
            try:
                return _build_transformer(H, Hp, phi, s, uni)
            except MatchingUnavailable:
                s += 1
    return _build_transformer(H, Hp, phi, s, uni)


def _build_transformer(H, Hp, phi, s, uni):
    r = H.r
    deg = _degree_per_class(H)
    adj = H.adjacency()
    # Plan the matchings on placeholder ids first so a failure leaves `uni` untouched.
    plan_start = uni._next
    for x in sorted(H.colour):
        cx = H.colour[x]
        others = [j for j in range(r) if j != cx]
        zc = (r - 2) * deg[x]
        fake_z = [[-(k + 1) - 1000 * i for k in range(zc)] for i in range(len(others))]
        fake_s = [[10**9 + k + 1000 * i for k in range(s)] for i in range(len(others))]
        _cyclic_matchings(fake_z, fake_s, s)
    assert uni._next == plan_start

    Z: dict[Edge, dict[int, int]] = {}
    for e in sorted(H.edges):
        a, b = e
        Z[e] = {j: uni.add_vertex(j) for j in range(r) if j not in (H.colour[a], H.colour[b])}
    S: dict[int, dict[int, list[int]]] = {}
    for x in sorted(H.colour):
        S[x] = {j: [uni.add_vertex(j) for _ in range(s)] for j in range(r) if j != H.colour[x]}

    zx: dict[int, dict[int, list[int]]] = {x: {j: [] for j in range(r) if j != H.colour[x]} for x in H.colour}
    for (a, b), zs in Z.items():
        for x in (a, b):
            for j, z in zs.items():
                zx[x][j].append(z)

    groups = {k: set() for k in ("E_H", "E_H'", "E_Z", "E_S", "E_S'", "F")}
    for (a, b), zs in Z.items():
        for x in (a, b):
            for z in zs.values():
                groups["E_H"].add(norm_edge(x, z))
                groups["E_H'"].add(norm_edge(phi[x], z))
        for e in clique_edges(sorted(zs.values())):
            groups["E_Z"].add(e)
    F1, F2 = {}, {}
    for x in sorted(H.colour):
        others = sorted(S[x])
        for j in others:
            for v in S[x][j]:
                groups["E_S"].add(norm_edge(x, v))
                groups["E_S'"].add(norm_edge(phi[x], v))
        f1, f2 = _cyclic_matchings([sorted(zx[x][j]) for j in others], [S[x][j] for j in others], s)
        F1[x], F2[x] = f1, f2
        for c in f1 + f2:
            for e in clique_edges(sorted(c)):
                if e in groups["F"]:
                    raise AssertionError("F-matchings overlap")
                groups["F"].add(e)

    total = sum(len(g) for g in groups.values())
    union: set[Edge] = set().union(*groups.values())
    colour = dict(H.colour)
    colour.update(Hp.colour)
    for zs in Z.values():
        for j, z in zs.items():
            colour[z] = j
    for x in S:
        for j, vs in S[x].items():
            for v in vs:
                colour[v] = j
    T = ColouredGraph(r, colour)
    T.edges = union

    clq_src = [tuple(sorted((a, b, *Z[(a, b)].values()))) for a, b in sorted(H.edges)]
    clq_tgt = [tuple(sorted((phi[a], phi[b], *Z[(a, b)].values()))) for a, b in sorted(H.edges)]
    blocks_for_tgt, blocks_for_src = [], []
    for x in sorted(H.colour):
        blocks_for_tgt += [tuple(sorted((phi[x], *c))) for c in F1[x]]
        blocks_for_tgt += [tuple(sorted((x, *c))) for c in F2[x]]
        blocks_for_src += [tuple(sorted((x, *c))) for c in F1[x]]
        blocks_for_src += [tuple(sorted((phi[x], *c))) for c in F2[x]]
    cert_src = clq_src + blocks_for_tgt
    cert_tgt = clq_tgt + blocks_for_src

    full = dict(colour)
    _check(verify_clique_partition(T.edges | H.edges, cert_src, full, r), "T + H")
    _check(verify_clique_partition(T.edges | Hp.edges, cert_tgt, full, r), "T + H'")

    tt = TransformerTemplate(r, s, H, Hp, phi, Z, S, groups, F1, F2, T, cert_src, cert_tgt)
    tt.audit = transformer_audit(tt, total)
    bad = [k for k, ok in tt.audit.items() if ok is False]
    if bad:
        raise AssertionError(f"transformer audit failed: {bad}")
    return tt


def transformer_audit(tt: TransformerTemplate, group_total: int | None = None) -> dict:
    r, s, H, Hp = tt.r, tt.s, tt.source, tt.target
    out = {}
    if group_total is None:
        group_total = sum(len(g) for g in tt.groups.values())
    out["groups_disjoint"] = group_total == len(tt.graph.edges)
    expected = len(H) + len(Hp) + (r - 2) * H.num_edges() + (r - 1) * s * len(H)
    out["order_formula"] = len(tt.graph) == expected
    t1 = tt.t1_edges()
    deg: dict[int, int] = {}
    for a, b in t1:
        deg[a] = deg.get(a, 0) + 1
        deg[b] = deg.get(b, 0) + 1
    out["z_degree_r_plus_1"] = all(deg.get(z, 0) == r + 1 for z in tt.z_vertices())
    zset = set(tt.z_vertices())
    out["z_independent_in_F1"] = all(sum(1 for v in c if v in zset) <= 1
                                     for cs in tt.F1.values() for c in cs)
    f1 = {e for cs in tt.F1.values() for c in cs for e in clique_edges(sorted(c))}
    f2 = {e for cs in tt.F2.values() for c in cs for e in clique_edges(sorted(c))}
    out["F1_F2_disjoint"] = not (f1 & f2)
    ok_cover = True
    for x in H.colour:
        cover1 = sorted(v for c in tt.F1[x] for v in c)
        want1 = sorted([v for vs in tt.S[x].values() for v in vs]
                       + [z for e, zs in tt.Z.items() if x in e for z in zs.values()])
        cover2 = sorted(v for c in tt.F2[x] for v in c)
        want2 = sorted(v for vs in tt.S[x].values() for v in vs)
        ok_cover &= cover1 == want1 and cover2 == want2
    out["matchings_perfect"] = ok_cover
    used = set(H.colour) | set(Hp.colour)
    fresh = [z for z in zset] + [v for x in tt.S for vs in tt.S[x].values() for v in vs]
    out["fresh_sets_disjoint"] = len(set(fresh)) == len(fresh) and not (set(fresh) & used)
    out["edge_disjoint_from_H_and_H'"] = not (tt.graph.edges & (H.edges | Hp.edges))
    return out


# ---------------------------------------------------------------- routes to M_h

@dataclass
class Route:
    """R with R+H and R+M_h both decomposable, built from two transformers."""
    graph: ColouredGraph
    source: ColouredGraph
    mh: MhGraph
    attach: ColouredGraph
    expanded: Expansion
    t_attach: TransformerTemplate
    t_bank: TransformerTemplate
    cert_with_source: list[Clique]
    cert_with_bank: list[Clique]


def route_to_bank(H: ColouredGraph, mh: MhGraph, uni: ColouredGraph, s: int) -> Route:
    r = H.r
    # H_att: pendant K_r at the smaller endpoint of each edge
    att = H.copy()
    pendants: dict[Edge, dict[int, int]] = {}
    for x, y in sorted(H.edges):
        ps = {j: uni.add_vertex(j) for j in range(r) if j != H.colour[x]}
        for j, p in ps.items():
            att.ensure_vertex(p, j)
        for a, b in combinations([x] + list(ps.values()), 2):
            att.add_edge(a, b)
        pendants[(x, y)] = ps
    # H_exp': a fresh copy of H, then expanded
    copy_of = {v: uni.add_vertex(c) for v, c in sorted(H.colour.items())}
    hc = ColouredGraph(r, {copy_of[v]: c for v, c in H.colour.items()},
                       [(copy_of[a], copy_of[b]) for a, b in H.edges])
    exp = ColouredGraph(r, hc.colour)
    pieces: dict[Edge, tuple[int, ...]] = {}
    for x, y in sorted(H.edges):
        pieces[(x, y)] = _expand_into(exp, uni, copy_of[x], copy_of[y])
    expansion = Expansion(exp, {norm_edge(copy_of[x], copy_of[y]): us for (x, y), us in pieces.items()})

    phi_att: dict[int, int] = {copy_of[v]: v for v in H.colour}
    phi_bank: dict[int, int] = {copy_of[v]: mh.centres[c] for v, c in H.colour.items()}
    counters: dict[tuple[int, int], int] = {}
    for (x, y), us in sorted(pieces.items()):
        cx = H.colour[x]
        for j, u in enumerate(us):
            phi_att[u] = x if j == cx else pendants[(x, y)][j]
        a, b = sorted((H.colour[x], H.colour[y]))
        t = counters.get((a, b), 0)
        counters[(a, b)] = t + 1
        target = mh.pieces[(a, b, t)]
        for j, u in enumerate(us):
            phi_bank[u] = target[j]
    if any(v != mh.h for v in counters.values()) or len(counters) != comb(r, 2):
        raise NotIdentification("edge counts per class pair do not match h")

    t1 = build_transformer(exp, att, phi_att, s, uni)
    t2 = build_transformer(exp, mh.graph, phi_bank, s, uni)
    pend_edges = att.edges - H.edges
    colour = {}
    for g in (t1.graph, t2.graph, exp, att):
        colour.update(g.colour)
    R = ColouredGraph(r, colour)
    R.edges = t1.graph.edges | t2.graph.edges | exp.edges | pend_edges
    assert len(R.edges) == (len(t1.graph.edges) + len(t2.graph.edges) + len(exp.edges) + len(pend_edges))
    pend_cliques = [tuple(sorted([x] + list(ps.values()))) for (x, _y), ps in sorted(pendants.items())]
    cert_src = t1.cert_with_target + t2.cert_with_source
    cert_bank = t1.cert_with_source + t2.cert_with_target + pend_cliques
    return Route(R, H, mh, att, expansion, t1, t2, cert_src, cert_bank)


# ---------------------------------------------------------------- absorbers

@dataclass
class Absorber:
    graph: ColouredGraph
    target: ColouredGraph
    cert_alone: list[Clique]
    cert_with_target: list[Clique]
    s: int = 0
    audit: dict = field(default_factory=dict)
    parts: dict = field(default_factory=dict)

    def verify(self) -> bool:
        col = dict(self.graph.colour)
        col.update(self.target.colour)
        return (verify_clique_partition(self.graph.edges, self.cert_alone, col, self.graph.r)
                and verify_clique_partition(self.graph.edges | self.target.edges,
                                            self.cert_with_target, col, self.graph.r))


def _strip(h: ColouredGraph) -> ColouredGraph:
    g = h.subgraph(h.edges)
    g.r = h.r
    return g


def absorber_order(H: ColouredGraph, s: int) -> int:
    """|A| for the two-route construction, from the component sizes."""
    r = H.r
    c2 = comb(r, 2)
    h = H.num_edges() // c2

    def route(nv, ne):
        n_exp = nv + r * ne
        return (nv + (r - 1) * ne) + n_exp + 2 * (r - 2) * (c2 + 1) * ne + 2 * (r - 1) * s * n_exp

    return route(len(H), H.num_edges()) + route(h * r, h * c2) + (r + h * c2 * r)


def build_absorber(H: ColouredGraph, s: int | None = None, fit_cube: bool = True,
                   universe: ColouredGraph | None = None) -> Absorber:
    """Absorber A = T_H + T_K + M_h + hK_r for a K_r-divisible H.

    s=None picks the least s for which every transformer matching exists and,
    if fit_cube, also |A| <= s^3.
    """
    r = H.r
    H = _strip(H)
    if not H.edges:
        return Absorber(ColouredGraph(r), H, [], [], 0, {"order": 0, "within_s_cubed": True})
    if not H.is_divisible():
        raise NotIdentification("absorbers exist only for K_r-divisible graphs")
    c2 = comb(r, 2)
    h = H.num_edges() // c2
    s_min = max(min_transformer_s(H), 1)
    if s is None:
        s = s_min
        if fit_cube:
            while absorber_order(H, s) > s ** 3:
                s += 1
        while True:
            try:
                return _build_absorber(H, h, s, universe)
            except MatchingUnavailable:
                s += 1
    return _build_absorber(H, h, s, universe)


def _build_absorber(H, h, s, universe):
    r = H.r
    uni = universe if universe is not None else _universe(H)
    mark = uni.copy()
    try:
        mh = build_M_h(r, h, uni)
        K = ColouredGraph(r)
        k_cliques = []
        for _ in range(h):
            vs = [uni.add_vertex(j) for j in range(r)]
            for j, v in enumerate(vs):
                K.ensure_vertex(v, j)
            for a, b in combinations(vs, 2):
                K.add_edge(a, b)
            k_cliques.append(tuple(vs))
        rH = route_to_bank(H, mh, uni, s)
        rK = route_to_bank(K, mh, uni, s)
    except MatchingUnavailable:
        if universe is not None:
            universe.colour = mark.colour
            universe._next = mark._next
        raise
    colour = {}
    for g in (rH.graph, rK.graph, mh.graph, K):
        colour.update(g.colour)
    A = ColouredGraph(r, colour)
    A.edges = rH.graph.edges | rK.graph.edges | mh.graph.edges | K.edges
    assert len(A.edges) == sum(len(g.edges) for g in (rH.graph, rK.graph, mh.graph, K))
    A = _strip(A)
    cert_alone = rH.cert_with_bank + rK.cert_with_source
    cert_with = rH.cert_with_source + rK.cert_with_bank + k_cliques
    ab = Absorber(A, H, cert_alone, cert_with, s,
                  parts={"route_H": rH, "route_K": rK, "bank": mh, "cliques": K})
    _check(ab.verify(), "absorber certificates")
    order = len(A)
    ab.audit = {
        "order": order,
        "order_formula": order == absorber_order(H, s),
        "within_s_cubed": order <= s ** 3,
        "h": h,
        "transformers": {name: t.audit for name, t in (
            ("H_attach", rH.t_attach), ("H_bank", rH.t_bank),
            ("K_attach", rK.t_attach), ("K_bank", rK.t_bank))},
    }
    return ab


def relabel_absorber(ab: Absorber, phi: Mapping[int, int]) -> Absorber:
    """Copy of an absorber under an injective vertex map (used to reuse templates)."""
    r = ab.graph.r
    g = ColouredGraph(r, {phi[v]: c for v, c in ab.graph.colour.items()})
    g.edges = {norm_edge(phi[a], phi[b]) for a, b in ab.graph.edges}
    t = ColouredGraph(r, {phi[v]: c for v, c in ab.target.colour.items()})
    t.edges = {norm_edge(phi[a], phi[b]) for a, b in ab.target.edges}
    mp = lambda cs: [tuple(sorted(phi[v] for v in c)) for c in cs]
    return Absorber(g, t, mp(ab.cert_alone), mp(ab.cert_with_target), ab.s, dict(ab.audit))


# ---------------------------------------------------------------- absorbing sets in a host

def divisible_subgraphs(H: ColouredGraph, limit: int = 1 << 16) -> list[frozenset[Edge]]:
    """All K_r-divisible edge subsets of H (including the empty one)."""
    es = sorted(H.edges)
    if 2 ** len(es) > limit:
        raise ValueError(f"{len(es)} edges give more than {limit} subsets")
    out = []
    for mask in range(1 << len(es)):
        sub = [es[i] for i in range(len(es)) if mask >> i & 1]
        g = H.subgraph(sub)
        if g.is_divisible():
            out.append(frozenset(sub))
    return out


@dataclass
class AbsorbingSet:
    absorbers: list[tuple[int, frozenset[Edge], Absorber]]
    telemetry: dict = field(default_factory=dict)

    def lookup(self, index: int, sub: Iterable[Sequence[int]]) -> Absorber | None:
        key = frozenset(norm_edge(*e) for e in sub)
        for i, k, ab in self.absorbers:
            if i == index and k == key:
                return ab
        return None

    def union_edges(self) -> set[Edge]:
        out: set[Edge] = set()
        for _, _, ab in self.absorbers:
            out |= ab.graph.edges
        return out


def frame_absorber(host: MultipartiteGraph, target: Sequence[Edge], free: set[Edge],
                   avoid: set[int], rng: random.Random, budget: int = 50_000,
                   tries: int = 6) -> Absorber | None:
    """Compact absorber found by exact search.

    Pad the target's vertex set X to a class-balanced X' and pick a set Y of
    unused host vertices, y0 per class.  A is every free host edge of the
    complete r-partite frame on X' + Y that touches Y.  Both A and A + target
    are then handed to the exact solver.
    """
    r, n = host.r, host.n
    colour = host.colour()
    X = sorted({v for e in target for v in e})
    by_class = [[v for v in X if colour[v] == j] for j in range(r)]
    b = max(len(c) for c in by_class)
    pool = [[v for v in host.class_vertices(j) if v not in avoid and v not in X] for j in range(r)]
    for _ in range(tries):
        for y0 in range(max(b, 1), n):
            pads = []
            ok = True
            for j in range(r):
                need = b - len(by_class[j]) + y0
                if len(pool[j]) < need:
                    ok = False
                    break
                pads.append(rng.sample(pool[j], need))
            if not ok:
                break
            xs = [by_class[j] + pads[j][: b - len(by_class[j])] for j in range(r)]
            ys = [pads[j][b - len(by_class[j]):] for j in range(r)]
            xset = {v for c in xs for v in c}
            verts = sorted(xset | {v for c in ys for v in c})
            A = []
            complete = True
            for u, v in combinations(verts, 2):
                if colour[u] == colour[v] or (u in xset and v in xset):
                    continue
                e = norm_edge(u, v)
                if e not in free or not host.has_edge(u, v):
                    complete = False
                    break
                A.append(e)
            if not complete:
                continue
            c1 = solve_clique_partition(A, colour, r, budget=budget)
            if not isinstance(c1, list):
                continue
            c2 = solve_clique_partition(A + list(target), colour, r, budget=budget)
            if not isinstance(c2, list):
                continue
            col = {v: colour[v] for v in verts}
            g = ColouredGraph(r, col, A)
            t = ColouredGraph(r, {v: colour[v] for v in X}, target)
            ab = Absorber(g, t, c1, c2, 0, {"kind": "frame", "order": len(col), "y0": y0})
            _check(ab.verify(), "frame absorber")
            return ab
    return None


def build_absorbing_set(host: MultipartiteGraph, family: Sequence[Iterable[Sequence[int]]],
                        eps: float = 0.5, eta: float = 0.05, strategy: str = "auto", seed: int = 0,
                        check_hypothesis: bool = True, budget: int = 50_000,
                        max_edges: int = 16) -> AbsorbingSet | Stuck:
    """One absorber in `host` for every divisible subgraph of every member of `family`.

    strategy "gadget" embeds the abstract two-route absorber; "search" looks
    for compact frame absorbers with the exact solver; "auto" tries gadget
    first.  Absorbers are edge-disjoint from each other and from every family
    member, and Δ of their union is kept <= eps*n.
    """
    r, n = host.r, host.n
    colour = host.colour()
    hyp = hat_delta(host) >= (1 - 1 / (r + 1)) * n
    if check_hypothesis and not hyp and family:
        return Stuck(-1, None, "host minimum degree below the absorber threshold",
                     telemetry={"hat_delta": hat_delta(host)})
    rng = random.Random(seed)
    fam = [sorted({norm_edge(*e) for e in H}) for H in family]
    busy_edges: set[Edge] = {e for H in fam for e in H}
    free = set(host.edges) - busy_edges
    load = [0] * host.num_vertices
    limit = int(eps * n)
    busy_threshold = eta ** 0.5 * n
    out: list[tuple[int, frozenset[Edge], Absorber]] = []
    tele = {"subgraphs": 0, "gadget": 0, "frame": 0, "empty": 0, "hypothesis_held": hyp}
    for idx, H in enumerate(fam):
        hg = ColouredGraph(r, {v: colour[v] for e in H for v in e}, H)
        if len(H) > max_edges:
            return Stuck(idx, None, f"member has {len(H)} edges, more than max_edges={max_edges}")
        for sub in divisible_subgraphs(hg):
            tele["subgraphs"] += 1
            if not sub:
                out.append((idx, sub, Absorber(ColouredGraph(r), ColouredGraph(r), [], [], 0, {"kind": "empty"})))
                tele["empty"] += 1
                continue
            target = sorted(sub)
            busy = {v for v in range(host.num_vertices) if load[v] >= busy_threshold}
            ab = None
            if strategy in ("gadget", "auto"):
                ab = _embed_gadget_absorber(host, hg.subgraph(target), free, load, limit, busy, rng.randrange(1 << 30))
                if ab is not None:
                    tele["gadget"] += 1
            if ab is None and strategy in ("search", "auto"):
                avoid = {v for e in H for v in e} | busy | {v for v in range(host.num_vertices)
                                                           if load[v] + r >= limit}
                ab = frame_absorber(host, target, free, avoid, rng, budget)
                if ab is not None:
                    tele["frame"] += 1
            if ab is None:
                return Stuck(idx, None, "no absorber could be placed",
                             telemetry={**tele, "target": [list(e) for e in target]})
            for a, b in ab.graph.edges:
                load[a] += 1
                load[b] += 1
            free -= ab.graph.edges
            out.append((idx, sub, ab))
    union: set[Edge] = set()
    for _, _, ab in out:
        assert not (union & ab.graph.edges), "absorbers overlap"
        union |= ab.graph.edges
    assert not (union & busy_edges)
    assert max(load, default=0) <= limit, "absorbing set exceeds the degree cap"
    tele["max_degree"] = max(load, default=0)
    return AbsorbingSet(out, tele)


def _embed_gadget_absorber(host, target: ColouredGraph, free, load, limit, busy, seed):
    ab = build_absorber(target, fit_cube=False)
    if len(ab.graph) > host.num_vertices:
        return None
    tpl = as_template(ab.graph, roots=target.colour)
    forbidden = set(host.edges) - free
    res = embed_all(host, None, [tpl], cap=limit / host.n if host.n else 0, seed=seed,
                    retries=3, forbidden=forbidden)
    if isinstance(res, Stuck):
        return None
    phi = res.maps[0]
    for v in target.colour:
        phi.setdefault(v, v)
    placed = relabel_absorber(ab, phi)
    extra = [0] * host.num_vertices
    for a, b in placed.graph.edges:
        extra[a] += 1
        extra[b] += 1
    if any(load[v] + extra[v] > limit for v in range(host.num_vertices)):
        return None
    return placed
