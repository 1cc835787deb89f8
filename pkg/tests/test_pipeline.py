import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from clique_mosaic.core import MultipartiteGraph
from clique_mosaic.pipeline import (NotDivisible, PipelineConfig, PipelineResult,
                                    decompose_by_absorption)

from conftest import oracle_cert, oracle_decomposable, random_divisible


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(rho=1.5)
    with pytest.raises(ValueError):
        PipelineConfig(k=1)
    with pytest.raises(ValueError):
        PipelineConfig(reservation="sometimes")


def test_rejects_indivisible_input():
    with pytest.raises(NotDivisible):
        decompose_by_absorption(MultipartiteGraph(3, 2, [(0, 2)]))


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_complete_tripartite(n):
    g = MultipartiteGraph.complete(3, n)
    res = decompose_by_absorption(g)
    assert res.route in ("pipeline", "fallback")
    assert oracle_cert(g.edges, res.decomposition.cliques, g.colour(), 3)
    json.dumps(res.to_dict())


def test_no_fallback_reports_failure():
    g = MultipartiteGraph.complete(3, 2)
    res = decompose_by_absorption(g, PipelineConfig(fallback="none"))
    assert res.route == "failed" and res.decomposition is None
    assert res.failure is not None and res.failure.stage


def test_infeasible_route():
    g = MultipartiteGraph(3, 2, [(0, 2), (2, 4), (4, 1), (1, 3), (3, 5), (5, 0)])
    res = decompose_by_absorption(g)
    assert res.route == "infeasible" and res.decomposition is None


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_routes_agree_with_oracle(seed):
    rng = random.Random(seed)
    g = random_divisible(3, rng.randint(1, 3), rng)
    res = decompose_by_absorption(g, seed=seed)
    assert isinstance(res, PipelineResult)
    want = oracle_decomposable(g.edges, g.colour(), 3)
    if res.decomposition is not None:
        assert oracle_cert(g.edges, res.decomposition.cliques, g.colour(), 3)
    assert (res.route in ("pipeline", "fallback")) == want
