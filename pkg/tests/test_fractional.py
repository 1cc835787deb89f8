import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from clique_mosaic.core import MultipartiteGraph, clique_edges, enumerate_r_cliques
from clique_mosaic.extremal import ExtremalParams, build_extremal
from clique_mosaic.fractional import (DimensionTooLarge, FractionalDecomposition,
                                      InfeasibleCertificate, approx_decompose, fractional_decompose,
                                      verify_certificate, verify_fractional)

from conftest import random_divisible


def float_feasible(g):
    """Reference answer from HiGHS on the same system."""
    cl = enumerate_r_cliques(g)
    es = list(g.edges)
    if not es:
        return True
    if not cl:
        return False
    idx = {e: i for i, e in enumerate(es)}
    A = np.zeros((len(es), len(cl)))
    for k, c in enumerate(cl):
        for e in clique_edges(c):
            A[idx[e], k] = 1
    res = linprog(np.zeros(len(cl)), A_eq=A, b_eq=np.ones(len(es)), bounds=(0, None), method="highs")
    return res.status == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_exact_lp_agrees_with_float(seed):
    rng = random.Random(seed)
    g = random_divisible(3, rng.randint(2, 4), rng)
    res = fractional_decompose(g)
    if isinstance(res, FractionalDecomposition):
        assert verify_fractional(g, res)
        assert float_feasible(g)
    else:
        assert isinstance(res, InfeasibleCertificate)
        assert verify_certificate(g, res)
        assert not float_feasible(g)


def test_complete_graph_uniform_weights_verify():
    g = MultipartiteGraph.complete(3, 3)
    res = fractional_decompose(g)
    assert isinstance(res, FractionalDecomposition) and verify_fractional(g, res)


def test_tampered_weights_fail():
    g = MultipartiteGraph.complete(3, 2)
    res = fractional_decompose(g)
    w = list(res.weights)
    w[0] += 1
    assert not verify_fractional(g, FractionalDecomposition(res.cliques, w))


def test_certificate_for_cycle():
    g = MultipartiteGraph(3, 2, [(0, 2), (2, 4), (4, 1), (1, 3), (3, 5), (5, 0)])
    cert = fractional_decompose(g)
    assert isinstance(cert, InfeasibleCertificate) and verify_certificate(g, cert)


def test_dimension_cap():
    with pytest.raises(DimensionTooLarge):
        fractional_decompose(MultipartiteGraph.complete(3, 5), cap=10)


def test_float_method():
    g = MultipartiteGraph.complete(3, 3)
    res = fractional_decompose(g, method="float")
    assert res is not None and not res.exact
    assert fractional_decompose(build_extremal(ExtremalParams(3, 2, 0)), method="float") is None


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_approx_packing_is_maximal(seed):
    rng = random.Random(seed)
    g = random_divisible(3, rng.randint(2, 5), rng)
    res = approx_decompose(g, seed=seed)
    used = [e for c in res.cliques for e in clique_edges(c)]
    assert len(used) == len(set(used))
    assert set(used) | set(res.leftover.edges) == set(g.edges)
    assert not set(used) & set(res.leftover.edges)
    assert enumerate_r_cliques(res.leftover) == []
    assert res.leftover_ratio == res.leftover.num_edges() / g.n ** 2


def test_scored_packing():
    g = MultipartiteGraph.complete(3, 4)
    res = approx_decompose(g, seed=1, score=lambda c, h: -sum(c))
    assert enumerate_r_cliques(res.leftover) == []
