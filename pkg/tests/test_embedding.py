import random

import pytest
from hypothesis import given, settings, strategies as st

from clique_mosaic.core import MultipartiteGraph, norm_edge
from clique_mosaic.embedding import (Cell, ClassLabel, Embedding, FreeHost, LabelledGraph, Singleton,
                                     Stuck, TemplateError, back_degrees, degeneracy, embed_all)
from clique_mosaic.partitions import KPartition


def brute_degeneracy(h):
    """Minimum over all orderings (roots first) of the largest back-degree."""
    from itertools import permutations
    roots = h.roots()
    rest = [v for v in h.labels if v not in roots]
    return min(max(back_degrees(h, roots + list(p)) or [0]) for p in permutations(rest))


@st.composite
def templates(draw):
    nv = draw(st.integers(1, 6))
    labels = {v: ClassLabel(v % 3) for v in range(nv)}
    es = [(a, b) for a in range(nv) for b in range(a + 1, nv) if a % 3 != b % 3]
    keep = draw(st.lists(st.booleans(), min_size=len(es), max_size=len(es)))
    return LabelledGraph(labels, {e for e, k in zip(es, keep) if k})


@settings(max_examples=60, deadline=None)
@given(templates())
def test_degeneracy_is_optimal(h):
    d, order = degeneracy(h)
    assert sorted(order) == sorted(h.labels)
    assert max(back_degrees(h, order), default=0) == d
    assert d == brute_degeneracy(h)


def test_roots_come_first():
    h = LabelledGraph({0: Singleton(0), 1: ClassLabel(1), 2: ClassLabel(2)}, {(0, 1), (0, 2), (1, 2)})
    d, order = degeneracy(h)
    assert order[0] == 0 and d == 2


def test_validate_rejects_bad_templates():
    host = MultipartiteGraph.complete(3, 3)
    with pytest.raises(TemplateError):
        LabelledGraph({0: Singleton(0), 1: Singleton(3)}, {(0, 1)}).validate(host.class_of)
    with pytest.raises(TemplateError):
        LabelledGraph({0: ClassLabel(1), 1: ClassLabel(1)}, {(0, 1)}).validate(host.class_of)
    with pytest.raises(TemplateError):
        LabelledGraph({0: Singleton(0), 1: Singleton(0)}, set()).validate(host.class_of)


def triangle_at(v):
    return LabelledGraph({0: Singleton(v), 1: ClassLabel(1), 2: ClassLabel(2)},
                         {(0, 1), (0, 2), (1, 2)})


def test_embed_all_edge_disjoint_and_compatible():
    host = MultipartiteGraph.complete(3, 6)
    temps = [triangle_at(v) for v in range(6)]
    emb = embed_all(host, None, temps, cap=1.0, seed=3)
    assert isinstance(emb, Embedding)
    seen = set()
    for t, phi, img in zip(temps, emb.maps, emb.images):
        assert phi[0] == t.labels[0].v
        assert host.class_of(phi[1]) == 1 and host.class_of(phi[2]) == 2
        assert img == {norm_edge(phi[a], phi[b]) for a, b in t.edges}
        assert img <= set(host.edges) and not img & seen
        seen |= img
    assert emb.max_degree <= host.n


def test_cell_labels_and_forbidden():
    host = MultipartiteGraph.complete(3, 4)
    part = KPartition([[0, 1, 4, 5, 8, 9], [2, 3, 6, 7, 10, 11]])
    t = LabelledGraph({0: Singleton(0), 1: Cell(1, 1), 2: Cell(1, 2)}, {(0, 1), (0, 2), (1, 2)})
    emb = embed_all(host, part, [t], cap=1.0, forbidden=[(0, 6)])
    assert isinstance(emb, Embedding)
    phi = emb.maps[0]
    assert phi[1] in (6, 7) and phi[2] in (10, 11) and phi[1] == 7


def test_embed_reports_stuck():
    host = MultipartiteGraph(3, 2, [(0, 2), (0, 4)])
    res = embed_all(host, None, [triangle_at(0)], cap=1.0, retries=2)
    assert isinstance(res, Stuck)


def test_free_host_places_on_fresh_vertices():
    fh = FreeHost(3, 2)
    for v, (i, j) in enumerate([(0, 0), (0, 1), (1, 2)]):
        fh.add_base(v, i, j)
    t = LabelledGraph({0: Singleton(0), 1: Cell(1, 1), 2: ClassLabel(2)}, {(0, 1), (0, 2), (1, 2)})
    phi, es = fh.place(t)
    assert phi[0] == 0 and phi[1] >= 3 and phi[2] >= 3
    assert fh.cell[phi[1]] == 1 and fh.colour[phi[2]] == 2 and fh.cell[phi[2]] == 0
    phi2, es2 = fh.place(t)
    assert not es & es2
    with pytest.raises(TemplateError):
        fh.place(LabelledGraph({0: Singleton(99)}, set()))
