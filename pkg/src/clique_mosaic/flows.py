"""Degree-constrained subgraphs by max-flow, the divisibility fixer, and a
small-scale degree-reduction step.

degree_constrained_subgraph solves: given a bipartite graph (A, B, E) and a
target degree n_v for every vertex, find F within E with d_F(v) = n_v.  The
network is source -> a (capacity n_a), a -> b (capacity 1 per edge),
b -> sink (capacity n_b); a saturating flow is exactly such an F.

fix_divisibility removes a subgraph H, built pair by pair from such flows, so
that every vertex of G - H has the same degree into every foreign class.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import networkx as nx

from .core import (Clique, Edge, MultipartiteGraph, clique_edges, hat_delta,
                   is_kr_divisible, max_imbalance, norm_edge)
from .fractional import approx_decompose


class UnbalancedDemand(ValueError):
    pass


class HypothesisViolated(ValueError):
    def __init__(self, msg: str, detail: dict | None = None):
        super().__init__(msg)
        self.detail = detail or {}


class FlowInfeasible(ValueError):
    def __init__(self, msg: str, cut: dict | None = None):
        super().__init__(msg)
        self.cut = cut or {}


@dataclass
class DegreeDemand:
    n_v: dict[int, int]

    def __getitem__(self, v: int) -> int:
        return self.n_v.get(v, 0)


@dataclass(frozen=True)
class FlowCut:
    """Min cut certifying that no subgraph meets the demand.

    source_side_a / source_side_b are the A and B vertices reachable from the
    source in the residual network; `value` < `required`.
    """
    value: int
    required: int
    source_side_a: tuple[int, ...]
    source_side_b: tuple[int, ...]


def degree_constrained_subgraph(A: Sequence[int], B: Sequence[int], edges: Iterable[Sequence[int]],
                                demand: DegreeDemand | Mapping[int, int]):
    """List of edges (a, b) meeting the demand exactly, or a FlowCut."""
    nv = demand.n_v if isinstance(demand, DegreeDemand) else dict(demand)
    sa = sum(nv.get(a, 0) for a in A)
    sb = sum(nv.get(b, 0) for b in B)
    if sa != sb:
        raise UnbalancedDemand(f"side sums differ: {sa} vs {sb}")
    aset = set(A)
    net = nx.DiGraph()
    src, snk = ("s",), ("t",)
    net.add_node(src)
    net.add_node(snk)
    for a in A:
        net.add_edge(src, ("a", a), capacity=nv.get(a, 0))
    for b in B:
        net.add_edge(("b", b), snk, capacity=nv.get(b, 0))
    for u, v in edges:
        a, b = (u, v) if u in aset else (v, u)
        net.add_edge(("a", a), ("b", b), capacity=1)
    value, flow = nx.maximum_flow(net, src, snk,
                                  flow_func=nx.algorithms.flow.dinitz)
    if value < sa:
        cut_value, (reach, _) = nx.minimum_cut(net, src, snk,
                                               flow_func=nx.algorithms.flow.dinitz)
        return FlowCut(int(cut_value), sa,
                       tuple(sorted(x[1] for x in reach if x[0] == "a")),
                       tuple(sorted(x[1] for x in reach if x[0] == "b")))
    out = []
    for a in A:
        for node, f in flow[("a", a)].items():
            if f and node[0] == "b":
                out.append(norm_edge(a, node[1]))
    out.sort()
    # the contract is on degrees, so re-check them here rather than trust the flow
    deg: dict[int, int] = {}
    for u, v in out:
        deg[u] = deg.get(u, 0) + 1
        deg[v] = deg.get(v, 0) + 1
    for v in list(A) + list(B):
        assert deg.get(v, 0) == nv.get(v, 0), f"flow degree mismatch at {v}"
    return out


@dataclass
class FixResult:
    H: MultipartiteGraph
    g_prime: MultipartiteGraph
    targets: dict[tuple[int, int], int]  # (v, j) -> n_{v,j}
    xi_ceil: int
    m_v: dict[int, int] = field(default_factory=dict)
    p_v: dict[int, int] = field(default_factory=dict)


def split_evenly(total: int, verts: Sequence[int]) -> dict[int, int]:
    """Spread `total` over `verts` as evenly as possible, extra units to least ids."""
    vs = sorted(verts)
    if not vs:
        return {}
    q, rem = divmod(total, len(vs))
    return {v: q + (1 if i < rem else 0) for i, v in enumerate(vs)}


def fix_divisibility(g: MultipartiteGraph, gamma: float, alpha: float | None = None,
                     check_hypothesis: bool = True) -> FixResult:
    """Find H with G - H K_r-divisible and Delta(H) <= gamma*n.

    m_v is v's least foreign-class degree, a_{v,j} its excess over m_v, and p_v
    spreads the class surplus M_j so that every pair of classes ends up with
    matching totals.  H[V_j1, V_j2] is extracted by a flow with degree n_{v,j}.
    """
    r, n = g.r, g.n
    if check_hypothesis:
        need = (0.5 + 2 * gamma / r) * n
        hd = hat_delta(g)
        if hd < need:
            raise HypothesisViolated(f"hat_delta {hd} below (1/2 + 2gamma/r)n = {need:.3f}",
                                     {"hat_delta": hd, "required": need})
        if alpha is not None:
            imb = max_imbalance(g)
            if imb >= alpha * n:
                raise HypothesisViolated(f"imbalance {imb} not below alpha*n = {alpha * n:.3f}",
                                         {"imbalance": imb})
    xi = gamma / (2 * r)
    xc = math.ceil(xi * n - 1e-12)
    m_v: dict[int, int] = {}
    a: dict[tuple[int, int], int] = {}
    for v in range(g.num_vertices):
        cv = g.class_of(v)
        ds = {j: g.degree_to(v, j) for j in range(r) if j != cv}
        m_v[v] = min(ds.values())
        for j, d in ds.items():
            a[(v, j)] = d - m_v[v]
    N_j = [sum(m_v[v] for v in g.class_vertices(j)) for j in range(r)]
    N = min(N_j)
    p_v: dict[int, int] = {}
    for j in range(r):
        p_v.update(split_evenly(N_j[j] - N, g.class_vertices(j)))
    targets = {(v, j): xc + a[(v, j)] + p_v[v] for (v, j) in a}
    h_edges: list[Edge] = []
    for j1, j2 in combinations(range(r), 2):
        A = list(g.class_vertices(j1))
        B = list(g.class_vertices(j2))
        lhs = sum(targets[(v, j2)] for v in A)
        e12 = sum(g.degree_to(v, j2) for v in A)
        assert lhs == xc * n - N + e12 == sum(targets[(v, j1)] for v in B), \
            f"pair sums do not balance for classes {j1},{j2}"
        dem = {v: targets[(v, j2)] for v in A}
        dem.update({v: targets[(v, j1)] for v in B})
        pair_edges = [e for e in g.edges if g.class_of(e[0]) == j1 and g.class_of(e[1]) == j2]
        res = degree_constrained_subgraph(A, B, pair_edges, dem)
        if isinstance(res, FlowCut):
            raise FlowInfeasible(f"no subgraph meets the demand between classes {j1},{j2}",
                                 {"classes": [j1, j2], "cut": res})
        h_edges.extend(res)
    H = g.spanning(h_edges)
    gp = g.without_edges(h_edges)
    for (v, j), t in targets.items():
        assert H.degree_to(v, j) == t
    assert is_kr_divisible(gp), "G - H is not divisible"
    if check_hypothesis:
        assert H.max_degree() <= gamma * n + 1e-9, \
            f"Delta(H) = {H.max_degree()} exceeds gamma*n = {gamma * n}"
    return FixResult(H, gp, targets, xc, m_v, p_v)


@dataclass
class Stuck:
    vertex: int | None
    reason: str
    telemetry: dict = field(default_factory=dict)


@dataclass
class ReduceResult:
    remainder: MultipartiteGraph
    cover: list[Clique]
    telemetry: dict = field(default_factory=dict)


def reduce_degree(g: MultipartiteGraph, eta: float = 0.1, gamma: float = 0.5, seed: int = 0,
                  rho: float = 0.3, fix_gamma: float | None = None,
                  match_budget: int = 20_000, approx_tries: int = 10, cleanup_tries: int = 10,
                  skip_unmatched: bool = False):
    """Small-scale degree reduction: a packing whose leftover has Delta <= gamma*n.

    Steps: reserve a random H_1 (edge probability rho); make G - H_1 divisible
    with fix_divisibility (H_2); pack G - H_1 - H_2 greedily; call a vertex bad
    if its leftover degree exceeds sqrt(eta)*n, return the cliques at bad
    vertices to the leftover, and cover every leftover edge at a bad vertex v
    by cliques {v} + K where K runs over a perfect K_{r-1}-matching of
    H_1[N_L(v)] found by exact search.

    Two additions for small n: the packing step keeps the best of
    `approx_tries` random packings (least maximum leftover degree), and the
    final remainder is greedily repacked (best of `cleanup_tries`).  Both only
    add cliques, so the output contract is unchanged.  With
    skip_unmatched=True a bad vertex whose matching search fails is left for
    the final degree check instead of stopping the run.
    """
    from .cover import perfect_clique_matching, MatchingFound

    r, n = g.r, g.n
    rng = random.Random(seed)
    h1 = [e for e in g.edges if rho > 0 and rng.random() < rho]
    rest = g.without_edges(h1)
    fg = fix_gamma if fix_gamma is not None else gamma / 2
    try:
        fix = fix_divisibility(rest, fg, check_hypothesis=False)
    except FlowInfeasible as exc:
        return Stuck(None, f"divisibility fix failed: {exc}")
    core_graph = fix.g_prime
    approx = min((approx_decompose(core_graph, seed=rng.randrange(1 << 30))
                  for _ in range(max(1, approx_tries))),
                 key=lambda a: (a.leftover.max_degree(), a.leftover.num_edges()))
    left = approx.leftover
    thresh = math.sqrt(eta) * n
    bad = {v for v in range(g.num_vertices) if left.degree(v) > thresh}
    kept = [c for c in approx.cliques if not bad.intersection(c)]
    freed = [e for c in approx.cliques if bad.intersection(c) for e in clique_edges(c)]
    L = set(left.edges) | set(freed)
    h1_free = set(h1)
    extra: list[Clique] = []
    skipped: list[int] = []
    for v in sorted(bad):
        nbrs = sorted({b if a == v else a for a, b in L if v in (a, b)})
        if not nbrs:
            continue
        if not h1_free:
            if skip_unmatched:
                skipped.append(v)
                continue
            return Stuck(v, "reserved graph has no edges left",
                         {"bad": sorted(bad)})
        sub = MultipartiteGraph(r, n, [e for e in h1_free if e[0] in nbrs and e[1] in nbrs])
        res = perfect_clique_matching(sub, nbrs, r - 1, budget=match_budget,
                                      seed=rng.randrange(1 << 30))
        if not isinstance(res, MatchingFound):
            if skip_unmatched:
                skipped.append(v)
                continue
            return Stuck(v, f"no K_{r - 1}-matching in the reserved graph on N(v): {type(res).__name__}",
                         {"bad": sorted(bad), "neighbourhood": nbrs})
        for K in res.cliques:
            c = tuple(sorted((v,) + tuple(K)))
            for e in clique_edges(c):
                if v in e:
                    L.discard(e)
                else:
                    h1_free.discard(e)
            extra.append(c)
    cover = kept + extra
    used = {e for c in cover for e in clique_edges(c)}
    remainder = g.without_edges(used)
    repacked: list[Clique] = []
    if cleanup_tries and remainder.num_edges():
        best = min((approx_decompose(remainder, seed=rng.randrange(1 << 30))
                    for _ in range(cleanup_tries)),
                   key=lambda a: (a.leftover.max_degree(), a.leftover.num_edges()))
        if best.cliques:
            repacked = best.cliques
            cover = cover + repacked
            remainder = best.leftover
    tel = {"h1_edges": len(h1), "fix_edges": fix.H.num_edges(), "bad": sorted(bad),
           "packed": len(approx.cliques), "kept": len(kept), "matched": len(extra),
           "repacked": len(repacked), "skipped": skipped,
           "max_remainder_degree": remainder.max_degree()}
    if remainder.max_degree() > gamma * n:
        return Stuck(None, f"remainder max degree {remainder.max_degree()} exceeds gamma*n", tel)
    return ReduceResult(remainder, cover, tel)
