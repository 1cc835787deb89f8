"""Fractional K_r-decompositions by exact LP, plus a greedy approximate packer.

The LP has one variable per transversal K_r and one equality row per edge:
every edge must carry total weight exactly 1.  Feasibility is decided with a
phase-one simplex over Fractions using Bland's rule, so a returned point is
exact and an infeasible answer carries a Farkas vector y with y.A <= 0 and
y.b > 0.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction as Frac
from typing import Callable

from .core import Clique, MultipartiteGraph, clique_edges, enumerate_r_cliques


class DimensionTooLarge(ValueError):
    pass


@dataclass
class FractionalDecomposition:
    cliques: list[Clique]
    weights: list[Frac]
    exact: bool = True

    def support(self) -> dict[Clique, Frac]:
        return {c: w for c, w in zip(self.cliques, self.weights) if w}

    def to_dict(self) -> dict:
        return {"exact": self.exact,
                "weights": [[list(c), str(w)] for c, w in self.support().items()]}


@dataclass
class InfeasibleCertificate:
    """Farkas vector over edges: sum over each clique's edges of y is <= 0,
    while the sum of y over all edges is > 0."""
    edges: list[tuple[int, int]]
    y: list[Frac]

    def to_dict(self) -> dict:
        return {"edges": [list(e) for e in self.edges], "y": [str(v) for v in self.y]}


@dataclass
class ApproxResult:
    cliques: list[Clique]
    leftover: MultipartiteGraph
    leftover_ratio: float = field(default=0.0)


class _Tableau:
    """Phase-one simplex for A x = b, x >= 0 with b >= 0."""

    def __init__(self, rows: list[list[int]], ncols: int, b: list[Frac]):
        m = len(rows)
        self.m = m
        self.nx = ncols
        width = ncols + m
        self.T = []
        for i, cols in enumerate(rows):
            row = [Frac(0)] * (width + 1)
            for j in cols:
                row[j] += 1
            row[ncols + i] = Frac(1)
            row[-1] = Frac(b[i])
            self.T.append(row)
        self.basis = [ncols + i for i in range(m)]
        # reduced costs for cost vector (0 on x, 1 on artificials)
        d = [Frac(0)] * (width + 1)
        for row in self.T:
            for j in range(ncols):
                if row[j]:
                    d[j] -= row[j]
            d[-1] -= row[-1]
        self.d = d

    def pivot(self, r: int, c: int):
        T = self.T
        prow = T[r]
        piv = prow[c]
        if piv != 1:
            prow[:] = [x / piv for x in prow]
        nz = [j for j, x in enumerate(prow) if x]
        for i, row in enumerate(T):
            if i != r:
                f = row[c]
                if f:
                    for j in nz:
                        row[j] -= f * prow[j]
        f = self.d[c]
        if f:
            for j in nz:
                self.d[j] -= f * prow[j]
        self.basis[r] = c

    def solve(self, max_pivots: int = 10**7):
        for _ in range(max_pivots):
            enter = next((j for j in range(len(self.d) - 1) if self.d[j] < 0), None)
            if enter is None:
                return
            best = None
            for i, row in enumerate(self.T):
                a = row[enter]
                if a > 0:
                    ratio = row[-1] / a
                    key = (ratio, self.basis[i])
                    if best is None or key < best[0]:
                        best = (key, i)
            if best is None:  # unbounded cannot happen in phase one
                raise RuntimeError("phase-one LP reported unbounded")
            self.pivot(best[1], enter)
        raise RuntimeError("pivot limit reached")

    def objective(self) -> Frac:
        return -self.d[-1]


def fractional_decompose(g: MultipartiteGraph, cap: int = 4000, method: str = "exact"):
    """FractionalDecomposition or InfeasibleCertificate for g.

    method="float" uses scipy's HiGHS instead and returns an uncertified point
    (exact=False) or None when the float solve reports infeasibility; it exists
    for exploratory scans where exact arithmetic is too slow.
    """
    cliques = enumerate_r_cliques(g)
    edges = list(g.edges)
    if len(cliques) > cap:
        raise DimensionTooLarge(f"{len(cliques)} cliques exceeds cap {cap}")
    if not edges:
        return FractionalDecomposition(cliques, [Frac(0)] * len(cliques))
    index = {e: i for i, e in enumerate(edges)}
    rows: list[list[int]] = [[] for _ in edges]
    for k, c in enumerate(cliques):
        for e in clique_edges(c):
            rows[index[e]].append(k)
    if method == "float":
        return _float_solve(rows, cliques, len(edges))
    if not cliques:
        return InfeasibleCertificate(edges, [Frac(1)] * len(edges))
    tab = _Tableau(rows, len(cliques), [Frac(1)] * len(edges))
    tab.solve()
    if tab.objective() > 0:
        y = [1 - tab.d[len(cliques) + i] for i in range(len(edges))]
        return InfeasibleCertificate(edges, y)
    x = [Frac(0)] * len(cliques)
    for i, var in enumerate(tab.basis):
        if var < len(cliques):
            x[var] = tab.T[i][-1]
    return FractionalDecomposition(cliques, x)


def _float_solve(rows, cliques, m):
    import numpy as np
    from scipy.optimize import linprog
    from scipy.sparse import lil_matrix

    if not cliques:
        return None
    A = lil_matrix((m, len(cliques)))
    for i, cols in enumerate(rows):
        for j in cols:
            A[i, j] = 1.0
    res = linprog(np.zeros(len(cliques)), A_eq=A.tocsr(), b_eq=np.ones(m),
                  bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    return FractionalDecomposition(cliques, [float(v) for v in res.x], exact=False)


def verify_fractional(g: MultipartiteGraph, fd: FractionalDecomposition) -> bool:
    """Exact check: nonnegative weights on cliques of g summing to 1 on every edge."""
    load = {e: Frac(0) for e in g.edges}
    for c, w in zip(fd.cliques, fd.weights):
        if w < 0:
            return False
        if not w:
            continue
        for e in clique_edges(c):
            if e not in load:
                return False
            load[e] += w
    return all(v == 1 for v in load.values())


def verify_certificate(g: MultipartiteGraph, cert: InfeasibleCertificate) -> bool:
    """Check the Farkas conditions against a fresh clique enumeration."""
    y = dict(zip(cert.edges, cert.y))
    if set(y) != set(g.edges):
        return False
    for c in enumerate_r_cliques(g):
        if sum(y[e] for e in clique_edges(c)) > 0:
            return False
    return sum(cert.y) > 0


def approx_decompose(g: MultipartiteGraph, seed: int = 0,
                     score: Callable[[Clique, MultipartiteGraph], float] | None = None) -> ApproxResult:
    """Greedy packing: repeatedly take a uniformly random clique among the
    highest-scoring ones still available.  With no score every available clique
    ties, so this is a random maximal packing."""
    rng = random.Random(seed)
    cliques = enumerate_r_cliques(g)
    used: set = set()
    taken: list[Clique] = []
    if score is None:
        order = cliques[:]
        rng.shuffle(order)
        for c in order:
            es = clique_edges(c)
            if not any(e in used for e in es):
                used.update(es)
                taken.append(c)
    else:
        alive = list(cliques)
        while True:
            alive = [c for c in alive if not any(e in used for e in clique_edges(c))]
            if not alive:
                break
            best = max(score(c, g) for c in alive)
            top = [c for c in alive if score(c, g) == best]
            c = rng.choice(top)
            used.update(clique_edges(c))
            taken.append(c)
    left = g.without_edges(used)
    n2 = g.n * g.n
    return ApproxResult(taken, left, left.num_edges() / n2 if n2 else 0.0)
