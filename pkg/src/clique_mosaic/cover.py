"""Perfect K_{r-1}-matchings and the cross-edge cover.

For a vertex x with a class-balanced neighbourhood N(x, W) inside a cell W, a
perfect K_{r-1}-matching T of G[N(x, W)] turns every edge from x into W into
part of a clique {x} + K, K in T.  Doing this edge-disjointly for all x in the
earlier cells covers every cross edge and spends only edges inside cells.

Matchings come from exact backtracking with a seeded vertex order.  The
random-greedy scheme keeps its structure (generate several edge-disjoint
candidates for each target, pick one at random) but the quantitative
hypotheses are recorded, not required, unless strict=True.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

from .core import (BudgetExhausted, Clique, Edge, Infeasible, MultipartiteGraph, clique_edges,
                   norm_edge, verify_clique_partition)
from .partitions import KPartition, cross_edges


@dataclass
class MatchingFound:
    cliques: list[Clique]
    hypothesis_held: bool
    steps: int = 0


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _match_search(adj: dict[int, int], verts: Sequence[int], colour, size: int, budget: int,
                  rng: random.Random):
    """Vertex partition of `verts` into `size`-cliques using adjacency masks."""
    classes = sorted({colour(v) for v in verts})
    if len(classes) != size:
        return Infeasible("unbalanced", {"classes": classes, "size": size})
    counts = {c: sum(1 for v in verts if colour(v) == c) for c in classes}
    if len(set(counts.values())) != 1:
        return Infeasible("unbalanced", {"counts": counts})
    cmask = {c: 0 for c in classes}
    for v in verts:
        cmask[colour(v)] |= 1 << v
    order = list(verts)
    rng.shuffle(order)
    pivot_class = classes[0]
    pivots = [v for v in order if colour(v) == pivot_class]
    others = classes[1:]
    steps = 0
    out: list[Clique] = []

    def rec(free: int) -> bool | None:
        nonlocal steps
        v = next((p for p in pivots if free >> p & 1), None)
        if v is None:
            return True
        cands: list[tuple[int, ...]] = []

        def grow(i: int, chosen: list[int], cand: int):
            if i == len(others):
                cands.append(tuple(chosen))
                return
            for w in _bits(cand & cmask[others[i]]):
                chosen.append(w)
                grow(i + 1, chosen, cand & adj.get(w, 0))
                chosen.pop()

        grow(0, [v], adj.get(v, 0) & free)
        rng.shuffle(cands)
        for c in cands:
            if steps >= budget:
                return None
            steps += 1
            m = 0
            for w in c:
                m |= 1 << w
            out.append(tuple(sorted(c)))
            res = rec(free & ~m)
            if res:
                return True
            out.pop()
            if res is None:
                return None
        return False

    free = 0
    for v in verts:
        free |= 1 << v
    res = rec(free)
    if res is None:
        return BudgetExhausted(steps, budget)
    if not res:
        return Infeasible("exhausted", {"steps": steps})
    return out, steps


def _hs_hypothesis(adj: dict[int, int], verts: Sequence[int], colour, size: int) -> bool:
    """Partite minimum degree of the induced graph at least (1 - 1/size) * part size."""
    classes = sorted({colour(v) for v in verts})
    if not classes:
        return True
    part = len(verts) // len(classes)
    masks = {c: 0 for c in classes}
    for v in verts:
        masks[colour(v)] |= 1 << v
    need = (1 - 1 / size) * part
    for v in verts:
        for c in classes:
            if c != colour(v) and (adj.get(v, 0) & masks[c]).bit_count() < need:
                return False
    return True


def perfect_clique_matching(g: MultipartiteGraph, vertex_set: Sequence[int], clique_size: int,
                            budget: int = 50_000, seed: int | None = 0):
    """MatchingFound, Infeasible or BudgetExhausted for a K_size-factor of g[vertex_set]."""
    verts = sorted(set(vertex_set))
    if not verts:
        return MatchingFound([], True, 0)
    vm = 0
    for v in verts:
        vm |= 1 << v
    adj = {v: g.adj[v] & vm for v in verts}
    rng = random.Random(seed)
    res = _match_search(adj, verts, g.class_of, clique_size, budget, rng)
    if isinstance(res, (Infeasible, BudgetExhausted)):
        return res
    cliques, steps = res
    return MatchingFound(sorted(cliques), _hs_hypothesis(adj, verts, g.class_of, clique_size), steps)


@dataclass
class MatchingRequest:
    g: MultipartiteGraph
    targets: list[list[int]]
    k: int
    rho: float
    t: int | None = None
    n_ref: int | None = None  # the n in the proof's bounds; defaults to g.n

    @property
    def n(self) -> int:
        return self.n_ref if self.n_ref is not None else self.g.n

    def t_value(self) -> int:
        if self.t is not None:
            return self.t
        return math.ceil(8 * self.k * self.g.r * self.rho ** 1.5 * self.n)


@dataclass
class MatchingFamily:
    matchings: list[list[Clique]]
    telemetry: dict = field(default_factory=dict)


@dataclass
class CoverFailed:
    reason: str
    detail: dict = field(default_factory=dict)


def request_shape_ok(req: MatchingRequest) -> list[str]:
    """Condition (i): each target misses exactly one class and is balanced on the rest."""
    out = []
    r = req.g.r
    for i, W in enumerate(req.targets):
        counts = [0] * r
        for v in W:
            counts[req.g.class_of(v)] += 1
        zero = [j for j in range(r) if counts[j] == 0]
        nonzero = {counts[j] for j in range(r) if counts[j]}
        if W and (len(zero) != 1 or len(nonzero) != 1):
            out.append(f"target {i}: class counts {counts}")
    return out


def request_hypotheses(req: MatchingRequest) -> dict:
    """Conditions (ii)-(iv) evaluated on the request (booleans plus slack)."""
    g, r, rho, n, k = req.g, req.g.r, req.rho, req.n, req.k
    ok2 = True
    for W in req.targets:
        if not W:
            continue
        wm = 0
        for v in W:
            wm |= 1 << v
        classes = sorted({g.class_of(v) for v in W})
        ni = len(W) // len(classes)
        need = (1 - 1 / (r - 1)) * ni + 9 * k * r * r * rho ** 1.5 * n
        for v in W:
            for c in classes:
                if c != g.class_of(v):
                    d = (g.adj[v] & wm & g.class_mask(c)).bit_count()
                    if d < need:
                        ok2 = False
    ok3 = all(len(set(a) & set(b)) <= 2 * r * rho * rho * n
              for a, b in combinations(req.targets, 2))
    load: dict[int, int] = {}
    for W in req.targets:
        for v in W:
            load[v] = load.get(v, 0) + 1
    ok4 = all(c <= 2 * k * rho * n for c in load.values())
    return {"ii": ok2, "iii": ok3, "iv": ok4}


def random_greedy_matchings(req: MatchingRequest, seed: int = 0, budget: int = 20_000,
                            max_candidates: int = 6, strict: bool = False):
    """Edge-disjoint perfect K_{r-1}-matchings T_s of G[W^s], one per target.

    For each target in turn: drop the edges already used, generate up to
    min(t, max_candidates) mutually edge-disjoint perfect matchings there, and
    pick one uniformly.  Steps whose used-edge degree inside W^s exceeds
    (r-2) rho^{3/2} n are counted as degenerate; the per-vertex hit counts
    X^{i,w} are compared with rho^{3/2} n.  Both are reported, and only
    enforced with strict=True.
    """
    g = req.g
    r = g.r
    shape = request_shape_ok(req)
    if shape:
        return CoverFailed("request shape", {"violations": shape})
    hyp = request_hypotheses(req)
    if strict and not all(hyp.values()):
        return CoverFailed("hypotheses", hyp)
    rng = random.Random(seed)
    t = max(1, req.t_value())
    used_adj: dict[int, int] = {}
    thresh = (r - 2) * req.rho ** 1.5 * req.n
    degenerate = []
    chosen: list[list[Clique]] = []
    for s, W in enumerate(req.targets):
        if not W:
            chosen.append([])
            continue
        wm = 0
        for v in W:
            wm |= 1 << v
        used_deg = max(((used_adj.get(v, 0) & wm).bit_count() for v in W), default=0)
        if used_deg > thresh:
            degenerate.append(s)
            if strict:
                return CoverFailed("degenerate step", {"step": s, "used_degree": used_deg})
        adj = {v: g.adj[v] & wm & ~used_adj.get(v, 0) for v in W}
        pool: list[list[Clique]] = []
        for _ in range(min(t, max_candidates)):
            res = _match_search(adj, sorted(W), g.class_of, r - 1, budget,
                                random.Random(rng.randrange(1 << 30)))
            if isinstance(res, (Infeasible, BudgetExhausted)):
                break
            cl, _steps = res
            pool.append(sorted(cl))
            for c in cl:
                for a, b in combinations(c, 2):
                    adj[a] &= ~(1 << b)
                    adj[b] &= ~(1 << a)
        if not pool:
            return CoverFailed("no perfect matching", {"step": s, "target": sorted(W)})
        T = pool[rng.randrange(len(pool))]
        for c in T:
            for a, b in combinations(c, 2):
                used_adj[a] = used_adj.get(a, 0) | (1 << b)
                used_adj[b] = used_adj.get(b, 0) | (1 << a)
        chosen.append(T)
    # X^{i,w}: number of matchings containing an edge at w inside W^i
    worst = 0
    for i, W in enumerate(req.targets):
        ws = set(W)
        for w in W:
            x = 0
            for T in chosen:
                if any(w in c and any(u in ws for u in c if u != w) for c in T):
                    x += 1
            worst = max(worst, x)
    tel = {"t": t, "degenerate_steps": degenerate, "max_X": worst,
           "X_bound": req.rho ** 1.5 * req.n, "hypotheses": hyp}
    if strict and worst > req.rho ** 1.5 * req.n:
        return CoverFailed("hit-count bound", tel)
    # structural guarantees hold unconditionally
    seen: set[Edge] = set()
    for T, W in zip(chosen, req.targets):
        covered = sorted(v for c in T for v in c)
        assert covered == sorted(W), "matching is not perfect on its target"
        for c in T:
            for e in clique_edges(c):
                assert e not in seen, "matchings share an edge"
                seen.add(e)
    return MatchingFamily(chosen, tel)


@dataclass
class CoverResult:
    g0: list[Edge]
    cliques: list[Clique]
    telemetry: dict = field(default_factory=dict)


def cover_conditions(g: MultipartiteGraph, part: KPartition, rho: float) -> dict:
    """Evaluate conditions (i)-(iv) of the cross-edge cover for every later cell."""
    k = len(part.cells)
    r = g.r
    res = {"i": True, "ii": True, "iii": True, "iv": True, "i_witness": None}
    for i in range(1, k):
        U = part.cells[i]
        umask = 0
        for v in U:
            umask |= 1 << v
        slices = [[v for v in U if g.class_of(v) == j] for j in range(r)]
        smask = [sum(1 << v for v in s) for s in slices]
        size1 = len(slices[0])
        before = [v for c in part.cells[:i] for v in c]
        nbhds = {}
        for x in before:
            cx = g.class_of(x)
            ds = [(g.adj[x] & smask[j]).bit_count() for j in range(r) if j != cx]
            if len(set(ds)) > 1 and res["i_witness"] is None:
                res["i"] = False
                res["i_witness"] = {"cell": i, "vertex": x, "degrees": ds}
            nb = g.adj[x] & umask
            nbhds[x] = nb
            for j in range(r):
                if j == cx:
                    continue
                need = (1 - 1 / (r - 1)) * (g.adj[x] & smask[j]).bit_count() + 9 * k * r * rho ** 1.5 * len(U)
                for v in _bits(nb):
                    for c in range(r):
                        if c != g.class_of(v) and c != cx:
                            if (g.adj[v] & nb & smask[c]).bit_count() < need:
                                res["ii"] = False
        for a, b in combinations(before, 2):
            if (nbhds[a] & nbhds[b]).bit_count() > 2 * rho * rho * len(U):
                res["iii"] = False
                break
        bm = sum(1 << v for v in before)
        for y in U:
            if (g.adj[y] & bm).bit_count() > 2 * k * rho * size1:
                res["iv"] = False
                break
    return res


def cover_cross_edges(g: MultipartiteGraph, part: KPartition, rho: float, seed: int = 0,
                      retries: int = 5, strict: bool = False, budget: int = 20_000):
    """Cover E(G[P]) plus a subgraph G_0 of the cell interiors by K_r's.

    For each later cell U^i and each x in the earlier cells, x is joined to a
    perfect K_{r-1}-matching of G[N(x, U^i)]; G_0 collects the matching edges.
    Condition (i), equal degree from x into every foreign slice of U^i, is
    structural and always enforced.  (ii)-(iv) are recorded and enforced only
    with strict=True.
    """
    r = g.r
    k = len(part.cells)
    conds = cover_conditions(g, part, rho)
    if not conds["i"]:
        return CoverFailed("condition (i) violated", {"witness": conds["i_witness"]})
    if strict and not all(conds[c] for c in ("ii", "iii", "iv")):
        return CoverFailed("conditions (ii)-(iv) not all met", conds)
    rng = random.Random(seed)
    last = None
    for attempt in range(max(1, retries)):
        cliques: list[Clique] = []
        g0: list[Edge] = []
        tel_cells = []
        failed = None
        for i in range(1, k):
            U = part.cells[i]
            umask = sum(1 << v for v in U)
            before = sorted(v for c in part.cells[:i] for v in c)
            xs = [x for x in before if g.adj[x] & umask]
            targets = [sorted(_bits(g.adj[x] & umask)) for x in xs]
            inner = MultipartiteGraph(g.r, g.n, g.induced_edges(U))
            req = MatchingRequest(inner, targets, k, rho, n_ref=g.n)
            fam = random_greedy_matchings(req, rng.randrange(1 << 30), budget=budget, strict=strict)
            if isinstance(fam, CoverFailed):
                step = fam.detail.get("step")
                failed = CoverFailed(fam.reason, {"cell": i, "vertex": xs[step] if step is not None else None,
                                                  "detail": fam.detail, "attempt": attempt})
                break
            for x, T in zip(xs, fam.matchings):
                for c in T:
                    cliques.append(tuple(sorted((x,) + tuple(c))))
                    g0.extend(norm_edge(a, b) for a, b in combinations(c, 2))
            tel_cells.append(fam.telemetry)
        if failed is not None:
            last = failed
            continue
        target = set(cross_edges(g, part)) | set(g0)
        assert verify_clique_partition(target, cliques, g.colour(), r), "cover certificate invalid"
        h0 = MultipartiteGraph(g.r, g.n, g0)
        bound = 3 * r * rho * g.n
        for i in range(1, k):
            before = {v for c in part.cells[:i] for v in c}
            for y in part.cells[i]:
                assert h0.degree(y) <= (r - 1) * g.degree_into(y, before)
        tel = {"conditions": conds, "cells": tel_cells, "attempts": attempt + 1,
               "max_degree_g0": h0.max_degree(), "bound": bound}
        if h0.max_degree() > bound:
            return CoverFailed("max degree bound", tel)
        return CoverResult(sorted(g0), sorted(cliques), tel)
    return last
