"""Dense K_r-divisible graphs with no K_r-decomposition.

Each class V_j is split into r-1 blocks U^i_j of size m, so n = (r-1)m.  The
base graph G_0 keeps only edges between blocks with different i, so it is
(r-1)-partite in the block index and contains no transversal K_r.  Adding a
q-regular bipartite graph between U^i_j1 and U^i_j2 gives G_q, where every
K_r must spend at least one of the added edges.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import comb

from .core import MultipartiteGraph


@dataclass(frozen=True)
class ExtremalParams:
    r: int
    m: int
    q: int

    def __post_init__(self):
        if self.r < 3:
            raise ValueError("extremal construction needs r >= 3")
        if self.m < 1:
            raise ValueError("block size m must be positive")
        if not 0 <= self.q <= self.m:
            raise ValueError(f"need 0 <= q <= m, got q={self.q}, m={self.m}")

    @property
    def n(self) -> int:
        return (self.r - 1) * self.m


def q0(r: int, m: int) -> int:
    """Largest q for which the leftover bound stays positive: ceil(2m/(r+1)) - 1."""
    return -(-2 * m // (r + 1)) - 1


def block_of(p: ExtremalParams, v: int) -> tuple[int, int]:
    """(i, j) with v in U^i_j."""
    n = p.n
    return (v % n) // p.m, v // n


def build_extremal(params: ExtremalParams, seed: int | None = None) -> MultipartiteGraph:
    """G_q = G_0 plus q cyclic perfect matchings between U^i_j1 and U^i_j2.

    With a seed, vertices are relabelled by a class-preserving shuffle; the
    default (None) keeps the canonical block layout.
    """
    r, m, q, n = params.r, params.m, params.q, params.n

    def vid(i: int, j: int, t: int) -> int:
        return j * n + i * m + t

    edges = []
    for j1, j2 in combinations(range(r), 2):
        for i1 in range(r - 1):
            for i2 in range(r - 1):
                if i1 == i2:
                    continue
                for t1 in range(m):
                    for t2 in range(m):
                        edges.append((vid(i1, j1, t1), vid(i2, j2, t2)))
        for i in range(r - 1):
            for t in range(m):
                for s in range(q):
                    edges.append((vid(i, j1, t), vid(i, j2, (t + s) % m)))
    if seed is not None:
        rng = random.Random(seed)
        perm = []
        for j in range(r):
            block = list(range(j * n, (j + 1) * n))
            rng.shuffle(block)
            perm.extend(block)
        edges = [(perm[u], perm[v]) for u, v in edges]
    return MultipartiteGraph(r, n, edges)


def added_edges(params: ExtremalParams) -> int:
    """e(H_q): edges inside the blocks U^i."""
    return (params.r - 1) * comb(params.r, 2) * params.q * params.m


def leftover_lower_bound(params: ExtremalParams) -> Fraction:
    """(m - (r+1)q/2)(r-2)C(r,2)n, the number of edges any packing leaves over.

    Negative values mean the counting gives no obstruction.
    """
    r, m, q = params.r, params.m, params.q
    return (Fraction(m) - Fraction((r + 1) * q, 2)) * (r - 2) * comb(r, 2) * params.n
