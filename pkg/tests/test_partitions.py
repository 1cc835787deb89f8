import random

from hypothesis import given, settings, strategies as st

from clique_mosaic.core import MultipartiteGraph
from clique_mosaic.partitions import (Failed, KPartition, PartitionSequence, ReservedSubgraphs,
                                      build_partition_sequence, cross_edges, equitable_sizes,
                                      interior_edges, k_partition_violations, random_k_partition,
                                      reservation_violations, reserve_random_subgraphs, restrict,
                                      sequence_violations)

from conftest import dense_near_divisible


def slice_sizes(g, part):
    return [[sum(1 for v in c if g.class_of(v) == j) for j in range(g.r)] for c in part.cells]


def test_equitable_sizes():
    assert equitable_sizes(7, 3) == [2, 2, 3]
    assert sum(equitable_sizes(12, 5)) == 12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 3))
def test_random_partition_shape(seed, k):
    g = MultipartiteGraph.complete(3, 6)
    part = random_k_partition(g, k, alpha=0.5, delta=0.3, seed=seed)
    assert isinstance(part, KPartition)
    assert sorted(v for c in part.cells for v in c) == list(range(18))
    sizes = slice_sizes(g, part)
    for row in sizes:
        assert len(set(row)) == 1
    cols = list(zip(*sizes))
    for col in cols:
        assert max(col) - min(col) <= 1
    assert k_partition_violations(g, part) == []


def test_cross_and_interior_split_edges():
    g = dense_near_divisible(9, random.Random(2))
    part = random_k_partition(g, 3, 0.9, 0.1, seed=1)
    cr, inn = set(cross_edges(g, part)), set(interior_edges(g, part))
    assert not cr & inn and cr | inn == set(g.edges)
    idx = part.cell_index()
    assert all(idx[a] != idx[b] for a, b in cr)


def test_partition_failure_is_reported():
    g = MultipartiteGraph(3, 6, [(0, 6)])
    res = random_k_partition(g, 2, alpha=0.01, delta=0.9, retries=2)
    assert isinstance(res, Failed) and res.detail["violations"]


def test_sequence_is_nested():
    g = MultipartiteGraph.complete(3, 12)
    seq = build_partition_sequence(g, 2, 0.5, 0.3, 3, seed=4)
    assert isinstance(seq, PartitionSequence)
    assert seq.length == 2 and seq.m == 3
    assert sequence_violations(g, seq) == []
    for outer, inner in zip(seq.levels, seq.levels[1:]):
        for c in inner.cells:
            assert sum(set(c) <= set(W) for W in outer.cells) == 1
    assert len(restrict(seq.levels[1], seq.levels[0].cells[0]).cells) == 2


def test_sequence_too_small():
    g = MultipartiteGraph.complete(3, 2)
    assert isinstance(build_partition_sequence(g, 2, 0.5, 0.3, 3), Failed)


def test_reservation_samples_from_level_edges():
    g = MultipartiteGraph.complete(3, 8)
    seq = build_partition_sequence(g, 2, 0.5, 0.3, 2, seed=1)
    res = reserve_random_subgraphs(g, seq, rho=0.5, alpha=0.9, seed=2, conditions=("i", "ii"))
    assert isinstance(res, ReservedSubgraphs)
    assert len(res.R) == seq.length
    prev = set()
    for q, Rq in enumerate(res.R, start=1):
        level = set(cross_edges(g, seq.levels[q - 1])) if q <= seq.length else set(g.edges)
        assert set(Rq) <= level - prev
        prev = level
    assert reservation_violations(g, seq, res.R, 0.5, 0.9, ("i", "ii")) == []


def test_partition_roundtrip():
    p = KPartition([[0, 3], [1, 2]])
    assert KPartition.from_dict(p.to_dict()).cells == [[0, 3], [1, 2]]
