from itertools import combinations

import pytest

from clique_mosaic.core import (CliqueDecomposition, Infeasible, enumerate_r_cliques, exact_decompose,
                                hat_delta, is_kr_divisible)
from clique_mosaic.extremal import (ExtremalParams, added_edges, block_of, build_extremal,
                                    leftover_lower_bound, q0)
from clique_mosaic.fractional import InfeasibleCertificate, fractional_decompose, verify_certificate


def brute_leftover(g, p):
    """Edges no packing can reach: every K_r spends an edge inside a block,
    so at most e(H) cliques fit.  Counted straight from the graph."""
    inside = [e for e in g.edges if block_of(p, e[0])[0] == block_of(p, e[1])[0]]
    for c in enumerate_r_cliques(g):
        assert any(block_of(p, a)[0] == block_of(p, b)[0] for a, b in combinations(c, 2))
    return g.num_edges() - len(inside) * (p.r * (p.r - 1) // 2), len(inside)


def test_q0_values():
    assert [q0(3, m) for m in (1, 2, 3, 4, 5, 6)] == [0, 0, 1, 1, 2, 2]
    assert q0(4, 5) == 1


def test_param_validation():
    with pytest.raises(ValueError):
        ExtremalParams(2, 3, 1)
    with pytest.raises(ValueError):
        ExtremalParams(3, 2, 3)


@pytest.mark.parametrize("r,m,q", [(3, 2, 0), (3, 3, 1), (3, 4, 1), (4, 2, 1), (3, 4, 3)])
def test_structure(r, m, q):
    p = ExtremalParams(r, m, q)
    g = build_extremal(p)
    assert is_kr_divisible(g)
    assert hat_delta(g) == (r - 2) * m + q
    degs = {g.degree(v) for v in range(g.num_vertices)}
    assert degs == {(r - 1) * ((r - 2) * m + q)}
    left, inside = brute_leftover(g, p)
    assert inside == added_edges(p)
    assert left == leftover_lower_bound(p)


def test_leftover_value_m4():
    # 120 edges, 24 of them inside blocks, each triangle spends one: 120 - 3*24
    p = ExtremalParams(3, 4, q0(3, 4))
    assert leftover_lower_bound(p) == 48
    assert brute_leftover(build_extremal(p), p)[0] == 48


def test_shuffle_preserves_classes():
    p = ExtremalParams(3, 3, 1)
    a, b = build_extremal(p), build_extremal(p, seed=7)
    assert a.num_edges() == b.num_edges()
    assert sorted(a.degree(v) for v in range(9)) == sorted(b.degree(v) for v in range(9))
    assert is_kr_divisible(b)


@pytest.mark.parametrize("m", [2, 3])
def test_obstruction_small(m):
    g = build_extremal(ExtremalParams(3, m, q0(3, m)))
    assert isinstance(exact_decompose(g), Infeasible)
    cert = fractional_decompose(g)
    assert isinstance(cert, InfeasibleCertificate) and verify_certificate(g, cert)


def test_above_threshold_can_decompose():
    # q = m gives K_{n,n,n} minus nothing inside blocks: the complete graph when r=3, m=1
    g = build_extremal(ExtremalParams(3, 1, 1))
    assert isinstance(exact_decompose(g), CliqueDecomposition)
