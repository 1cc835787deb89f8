"""Random k-partitions, nested partition sequences and reserved random subgraphs.

Everything here is sample-then-verify: a candidate is drawn at random and the
defining inequalities are checked exactly against the graph.  The validators
are public so callers (and tests) can re-check any object independently.

Conventions: a KPartition of a vertex set W splits every class slice W_j into
k parts whose sizes differ by at most one, with the same size pattern in every
class and larger parts at higher indices.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import Edge, MultipartiteGraph


@dataclass
class KPartition:
    cells: list[list[int]]

    def cell_index(self) -> dict[int, int]:
        return {v: i for i, c in enumerate(self.cells) for v in c}

    def slice(self, g: MultipartiteGraph, i: int, j: int) -> list[int]:
        """U^i_j."""
        return [v for v in self.cells[i] if g.class_of(v) == j]

    def slices(self, g: MultipartiteGraph) -> list[list[list[int]]]:
        return [[self.slice(g, i, j) for j in range(g.r)] for i in range(len(self.cells))]

    def to_dict(self) -> dict:
        return {"cells": [sorted(c) for c in self.cells]}

    @classmethod
    def from_dict(cls, data) -> "KPartition":
        return cls([list(map(int, c)) for c in data["cells"]])


@dataclass
class Failed:
    reason: str
    detail: dict = field(default_factory=dict)


def cross_edges(g: MultipartiteGraph, part: KPartition) -> list[Edge]:
    """E(G[P]): edges joining different cells."""
    idx = part.cell_index()
    return [e for e in g.edges if e[0] in idx and e[1] in idx and idx[e[0]] != idx[e[1]]]


def interior_edges(g: MultipartiteGraph, part: KPartition) -> list[Edge]:
    idx = part.cell_index()
    return [e for e in g.edges if e[0] in idx and e[1] in idx and idx[e[0]] == idx[e[1]]]


def _mask(vs: Iterable[int]) -> int:
    m = 0
    for v in vs:
        m |= 1 << v
    return m


def equitable_sizes(size: int, k: int) -> list[int]:
    q, rem = divmod(size, k)
    return [q] * (k - rem) + [q + 1] * rem


def k_partition_violations(g: MultipartiteGraph, part: KPartition, within: Sequence[int] | None = None) -> list[str]:
    """(Pa1) equitable per class and (Pa2) equal slices inside each cell."""
    out = []
    verts = set(range(g.num_vertices)) if within is None else set(within)
    allv = [v for c in part.cells for v in c]
    if sorted(allv) != sorted(verts):
        out.append("cells do not partition the vertex set")
    for j in range(g.r):
        sizes = [len(part.slice(g, i, j)) for i in range(len(part.cells))]
        if sizes and max(sizes) - min(sizes) > 1:
            out.append(f"Pa1: class {j} slice sizes {sizes}")
    for i in range(len(part.cells)):
        sizes = {len(part.slice(g, i, j)) for j in range(g.r)}
        if len(sizes) > 1:
            out.append(f"Pa2: cell {i} slice sizes {sorted(sizes)}")
    return out


def partition_violations(g: MultipartiteGraph, part: KPartition, alpha: float, delta: float,
                         within: Sequence[int] | None = None) -> list[str]:
    """All of (Pa1)-(Pa4) for part as a partition of G[within]."""
    out = k_partition_violations(g, part, within)
    if out:
        return out
    k = len(part.cells)
    W = list(range(g.num_vertices)) if within is None else sorted(within)
    wmask = _mask(W)
    slices = part.slices(g)
    masks = [[_mask(s) for s in row] for row in slices]
    class_w = [_mask(v for v in W if g.class_of(v) == j) for j in range(g.r)]
    for v in W:
        cv = g.class_of(v)
        av = g.adj[v] & wmask
        for i in range(k):
            for j in range(g.r):
                size = len(slices[i][j])
                d = (av & masks[i][j]).bit_count()
                dV = (av & class_w[j]).bit_count()
                if abs(d - dV / k) >= alpha * size and size:
                    out.append(f"Pa3: v={v} cell={i} class={j} d={d} d(V)/k={dV / k:.3f}")
                if j != cv and d < delta * size:
                    out.append(f"Pa4: v={v} cell={i} class={j} d={d} < {delta * size:.3f}")
    return out


def random_k_partition(g: MultipartiteGraph, k: int, alpha: float, delta: float, seed: int = 0,
                       retries: int = 20, within: Sequence[int] | None = None):
    """Uniform class-wise equitable k-partition of `within` (default: all vertices)
    that passes (Pa1)-(Pa4); Failed with the last violations otherwise."""
    rng = random.Random(seed)
    W = list(range(g.num_vertices)) if within is None else sorted(within)
    by_class = [[v for v in W if g.class_of(v) == j] for j in range(g.r)]
    last: list[str] = []
    for attempt in range(max(1, retries)):
        cells: list[list[int]] = [[] for _ in range(k)]
        for vs in by_class:
            vs = vs[:]
            rng.shuffle(vs)
            pos = 0
            for i, s in enumerate(equitable_sizes(len(vs), k)):
                cells[i].extend(vs[pos:pos + s])
                pos += s
        part = KPartition([sorted(c) for c in cells])
        last = partition_violations(g, part, alpha, delta, W)
        if not last:
            return part
        if k == 1:
            break
    return Failed("partition conditions not met", {"violations": last[:20], "count": len(last)})


@dataclass
class PartitionSequence:
    levels: list[KPartition]
    alpha: float
    k: int
    delta: float
    m: int

    @property
    def length(self) -> int:
        return len(self.levels)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "k": self.k, "delta": self.delta, "m": self.m,
                "levels": [p.to_dict()["cells"] for p in self.levels]}


def restrict(part: KPartition, W: Iterable[int]) -> KPartition:
    """P[W]: the cells of part contained in W."""
    ws = set(W)
    return KPartition([c for c in part.cells if set(c) <= ws])


def sequence_violations(g: MultipartiteGraph, seq: PartitionSequence) -> list[str]:
    """Independent check of (S1)-(S4)."""
    out = []
    prev = KPartition([list(range(g.num_vertices))])
    for q, part in enumerate(seq.levels, start=1):
        for c in part.cells:
            parents = [W for W in prev.cells if set(c) <= set(W)]
            if len(parents) != 1:
                out.append(f"S1: level {q} cell not inside a single parent")
        for W in prev.cells:
            sub = restrict(part, W)
            for msg in partition_violations(g, sub, seq.alpha, seq.delta, W):
                out.append(f"S2 level {q}: {msg}")
            wm = _mask(W)
            for U in sub.cells:
                uj = [_mask(v for v in U if g.class_of(v) == j) for j in range(g.r)]
                usize = [len([v for v in U if g.class_of(v) == j]) for j in range(g.r)]
                for v in W:
                    j1 = g.class_of(v)
                    ds = [(g.adj[v] & wm & uj[j]).bit_count() for j in range(g.r) if j != j1]
                    if ds and max(ds) - min(ds) >= seq.alpha * usize[j1]:
                        out.append(f"S3 level {q}: v={v} spread {max(ds) - min(ds)}")
        prev = part
    if seq.levels:
        for U in seq.levels[-1].cells:
            for j in range(g.r):
                s = len([v for v in U if g.class_of(v) == j])
                if s not in (seq.m, seq.m - 1):
                    out.append(f"S4: final cell slice size {s} not in {{m, m-1}} with m={seq.m}")
    return out


def build_partition_sequence(g: MultipartiteGraph, k: int, alpha: float, delta: float, m_prime: int,
                             seed: int = 0, retries: int = 20):
    """Refine cell by cell while every part would keep slices of size >= m'."""
    rng = random.Random(seed)
    n = g.n
    if n < m_prime:
        return Failed("n below m'", {"n": n, "m_prime": m_prime})
    levels: list[KPartition] = []
    prev = [list(range(g.num_vertices))]
    size = n
    while size // k >= m_prime and k >= 2:
        cells: list[list[int]] = []
        for ci, W in enumerate(prev):
            res = random_k_partition(g, k, alpha, delta, rng.randrange(1 << 30), retries, W)
            if isinstance(res, Failed):
                return Failed("level partition failed",
                              {"level": len(levels) + 1, "cell": ci, "violations": res.detail})
            cells.extend(res.cells)
        levels.append(KPartition(cells))
        prev = cells
        size = -(-size // k)
    m = max(len([v for v in U if g.class_of(v) == j]) for U in prev for j in range(g.r))
    seq = PartitionSequence(levels, alpha, k, delta, m)
    bad = sequence_violations(g, seq)
    if bad:
        return Failed("sequence conditions not met", {"violations": bad[:20]})
    return seq


@dataclass
class ReservedSubgraphs:
    R: list[list[Edge]]
    rho: float
    alpha: float
    telemetry: dict = field(default_factory=dict)


def level_cross_edges(g: MultipartiteGraph, seq: PartitionSequence, q: int) -> set[Edge]:
    """E(G_q) with G_q = G[P_q] and G_0 empty."""
    if q == 0:
        return set()
    if q > seq.length:
        return set(g.edges)
    return set(cross_edges(g, seq.levels[q - 1]))


def reservation_violations(g: MultipartiteGraph, seq: PartitionSequence, R: list[list[Edge]],
                           rho: float, alpha: float,
                           conditions: Sequence[str] = ("i", "ii", "iii", "iv")) -> list[dict]:
    """Check the four reserved-subgraph inequalities literally.

    (i)   d_R(x,U_j) < rho d_{G_q}(x,U_j) + alpha|U_j|
    (ii)  d_R({x,y},U_j) < (rho^2 + alpha)|U_j|
    (iii) |d_R(x,U_j) - d_R(x,U'_j')| < 3 alpha |U_j|   for x outside U, U', V_j, V_j'
    (iv)  d_{G'_{q+1}}(y, N_R(x,U_j)) >= rho(1-1/(r-1)) d_{G_q}(x,U_j) + rho^{5/4}|U_j|
          for x outside U, y in U, x, y outside V_j
    """
    out: list[dict] = []
    r = g.r
    ell = seq.length
    nv = g.num_vertices
    for q in range(1, ell + 1):
        Rq = R[q - 1]
        radj = [0] * nv
        for u, v in Rq:
            radj[u] |= 1 << v
            radj[v] |= 1 << u
        Gq = level_cross_edges(g, seq, q)
        gqadj = [0] * nv
        for u, v in Gq:
            gqadj[u] |= 1 << v
            gqadj[v] |= 1 << u
        # G'_{q+1}
        if q < ell:
            nxt = level_cross_edges(g, seq, q + 1) - set(R[q])
        else:
            nxt = set(g.edges)
        nadj = [0] * nv
        for u, v in nxt:
            nadj[u] |= 1 << v
            nadj[v] |= 1 << u
        prev_cells = seq.levels[q - 2].cells if q >= 2 else [list(range(nv))]
        for W in prev_cells:
            sub = restrict(seq.levels[q - 1], W)
            umasks = [[_mask(v for v in U if g.class_of(v) == j) for j in range(r)] for U in sub.cells]
            usize = [[len([v for v in U if g.class_of(v) == j]) for j in range(r)] for U in sub.cells]
            usets = [set(U) for U in sub.cells]
            Wl = sorted(W)
            for x in Wl:
                cx = g.class_of(x)
                for ui in range(len(sub.cells)):
                    for j in range(r):
                        size = usize[ui][j]
                        dR = (radj[x] & umasks[ui][j]).bit_count()
                        dG = (gqadj[x] & umasks[ui][j]).bit_count()
                        if "i" in conditions and not dR < rho * dG + alpha * size:
                            out.append({"q": q, "condition": "i", "x": x, "cell": ui, "class": j})
                        if "iv" in conditions and x not in usets[ui] and j != cx:
                            nr = radj[x] & umasks[ui][j]
                            bound = rho * (1 - 1 / (r - 1)) * dG + rho ** 1.25 * size
                            for y in sub.cells[ui]:
                                if g.class_of(y) == j:
                                    continue
                                if (nadj[y] & nr).bit_count() < bound:
                                    out.append({"q": q, "condition": "iv", "x": x, "y": y,
                                                "cell": ui, "class": j, "bound": bound})
                                    break
                if "ii" in conditions:
                    for y in Wl:
                        if y <= x:
                            continue
                        common = radj[x] & radj[y]
                        for ui in range(len(sub.cells)):
                            for j in range(r):
                                if not (common & umasks[ui][j]).bit_count() < (rho ** 2 + alpha) * usize[ui][j]:
                                    out.append({"q": q, "condition": "ii", "x": x, "y": y,
                                                "cell": ui, "class": j})
                if "iii" in conditions:
                    vals = []
                    for ui in range(len(sub.cells)):
                        if x in usets[ui]:
                            continue
                        for j in range(r):
                            if j != cx:
                                vals.append(((radj[x] & umasks[ui][j]).bit_count(), usize[ui][j]))
                    for a, sa in vals:
                        for b, _ in vals:
                            if not abs(a - b) < 3 * alpha * sa:
                                out.append({"q": q, "condition": "iii", "x": x})
                                break
                        else:
                            continue
                        break
    return out


def reserve_random_subgraphs(g: MultipartiteGraph, seq: PartitionSequence, rho: float, alpha: float,
                             seed: int = 0, retries: int = 20,
                             conditions: Sequence[str] = ("i", "ii", "iii", "iv")):
    """Sample R_q from G_q - G_{q-1} edge by edge with probability rho and keep
    the first sample passing the selected conditions (all four by default)."""
    rng = random.Random(seed)
    last: list[dict] = []
    for attempt in range(max(1, retries)):
        R = []
        for q in range(1, seq.length + 1):
            pool = sorted(level_cross_edges(g, seq, q) - level_cross_edges(g, seq, q - 1))
            R.append([e for e in pool if rng.random() < rho])
        last = reservation_violations(g, seq, R, rho, alpha, conditions)
        if not last:
            return ReservedSubgraphs(R, rho, alpha, {"attempts": attempt + 1,
                                                     "conditions": list(conditions)})
    first = last[0]
    return Failed(f"reserved subgraph condition ({first['condition']}) failed",
                  {"q": first["q"], "condition": first["condition"], "witness": first,
                   "violations": len(last)})
