import random
from itertools import combinations, product

import pytest
from hypothesis import given, settings, strategies as st

from clique_mosaic.balancing import (CapacityExceeded, ExcessMultigraph, RoutingStuck, apply_balancing,
                                     aux_graph, build_balancing_graph, build_D_gadgets,
                                     build_theta_KN, cross_balance_defects, decompose_irreducible,
                                     degree_into, excess_multigraph, irreducible_multiplicity_bound,
                                     is_irreducible, route_pairs, skeleton_edges, slot_counts,
                                     theta_audit, theta_indices_for, theta_pair_count)
from clique_mosaic.core import edges_divisible, norm_edge
from clique_mosaic.embedding import FreeHost

from conftest import balancing_instance, oracle_cert, oracle_cross_balanced


def skel_divisible(vec, r):
    deg = {}
    for (a, b), m in vec.items():
        deg.setdefault(a, [0] * r)[b[1]] += m
        deg.setdefault(b, [0] * r)[a[1]] += m
    return all(len({row[j] for j in range(r) if j != w[1]}) == 1 for w, row in deg.items())


def brute_irreducible(vec, r):
    """No proper nonempty divisible sub-vector, by full enumeration."""
    es = sorted(e for e, m in vec.items() if m)
    total = sum(vec[e] for e in es)
    for xs in product(*[range(vec[e] + 1) for e in es]):
        s = sum(xs)
        if 0 < s < total and skel_divisible(dict(zip(es, xs)), r):
            return False
    return True


def test_skeleton_size():
    # K_r(k): kr vertices, pairs in different classes
    for r, k in [(3, 2), (4, 2), (3, 3)]:
        assert len(skeleton_edges(r, k)) == (r * k) * (r * k - k) // 2


def random_skeleton_multigraph(rng, r=3, k=2, parts=3):
    """Sum of random skeleton triangles (transversal in class), always divisible."""
    mult = {}
    for _ in range(parts):
        ws = [(rng.randrange(k), j) for j in range(r)]
        for a, b in combinations(ws, 2):
            e = (a, b) if a < b else (b, a)
            mult[e] = mult.get(e, 0) + 1
    return ExcessMultigraph(r, k, mult)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_irreducible_pieces_match_brute_force(seed):
    em = random_skeleton_multigraph(random.Random(seed))
    pieces = decompose_irreducible(em)
    total = {}
    for p in pieces:
        assert brute_irreducible(p.mult, 3)
        assert is_irreducible(p)
        for e, m in p.mult.items():
            total[e] = total.get(e, 0) + m
    assert total == {e: m for e, m in em.mult.items() if m}


def test_multiplicity_bound_r3_k2():
    # brute force: an irreducible divisible multigraph on K_3(2) with total <= 6
    # never repeats an edge
    es = skeleton_edges(3, 2)
    found_double = False

    def rec(i, vec, rem):
        nonlocal found_double
        if i == len(es):
            if vec and max(vec.values()) >= 2 and skel_divisible(vec, 3) and brute_irreducible(vec, 3):
                found_double = True
            return
        for m in range(0, min(2, rem) + 1):
            if m:
                vec[es[i]] = m
            rec(i + 1, vec, rem - m)
            vec.pop(es[i], None)

    rec(0, {}, 6)
    assert not found_double
    assert irreducible_multiplicity_bound(3, 2, 6) == 1


def test_excess_multigraph_counts():
    colour = {0: 0, 1: 1, 2: 2, 3: 0, 4: 1, 5: 2}
    cell = {0: 0, 1: 0, 2: 0, 3: 1, 4: 1, 5: 1}
    edges = [(0, 4), (0, 5), (4, 5), (1, 3)]
    counts = slot_counts(edges, colour, cell)
    assert counts[((0, 0), (1, 1))] == 1 and counts[((0, 1), (1, 0))] == 1
    em = excess_multigraph(edges, colour, cell, 3, 2)
    # cross pair (0,1): slots 01,02,10,12,20,21 hold 1,1,1,0,0,0 -> excess equals the count
    assert em.mult[((0, 0), (1, 1))] == 1 and em.mult[((0, 0), (1, 2))] == 1
    assert em.mult[((0, 1), (1, 0))] == 1
    # inside cell 1 one slot (1,1)-(1,2) holds an edge, the other two hold none
    assert em.mult[((1, 1), (1, 2))] == 1


@pytest.mark.parametrize("r,k,N", [(3, 2, 1), (3, 2, 2), (4, 2, 1)])
def test_theta_KN_audit(r, k, N):
    th = build_theta_KN(k, r, N)
    aud = theta_audit(th)
    assert aud["degeneracy_ok"] and aud["order_bound"]
    assert edges_divisible(th.template.edges, th.colour, r)


def test_theta_pair_counts_on_placed_gadget():
    rng = random.Random(0)
    r, k = 3, 2
    th = build_theta_KN(k, r, 1)
    host = FreeHost(r, k)
    phi, es = host.place(th.template)
    for _ in range(10):
        I = {e: 1 for e in skeleton_edges(r, k) if rng.random() < 0.3}
        idx = theta_indices_for(th, I)
        img = {norm_edge(phi[a], phi[b]) for i in idx for a, b in th.pieces[i][1]}
        counts = {}
        for a, b in img:
            key = tuple(sorted([(host.cell[a], host.colour[a]), (host.cell[b], host.colour[b])]))
            counts[key] = counts.get(key, 0) + 1
        for a, b in skeleton_edges(r, k):
            assert counts.get((a, b), 0) == theta_pair_count(I, a, b)
    with pytest.raises(CapacityExceeded):
        theta_indices_for(th, {skeleton_edges(r, k)[0]: 2})


@pytest.mark.parametrize("j1,j2", [(0, 1), (0, 2), (2, 1)])
def test_transfer_gadget_moves_one_unit(j1, j2):
    r = 3
    host = FreeHost(r, 2)
    host.add_base(0, 0, j1)
    host.add_base(1, 0, j1)
    th = build_D_gadgets(0, 1, j1, j2, r)
    assert theta_audit(th)["degeneracy_ok"]
    phi, es = host.place(th.template)
    assert edges_divisible(es, host.colour, r)
    T = {norm_edge(phi[a], phi[b]) for i in th.meta["transfer"] for a, b in th.pieces[i][1]}
    bad = {v for v, *_ in cross_balance_defects(T, host.colour, host.cell, r, 2)}
    assert bad == {0, 1}
    deg = degree_into(T, host.colour, host.cell)
    js = [j for j in range(r) if j != j1]
    gap = lambda v: deg[v].get((1, js[0]), 0) - deg[v].get((1, js[1]), 0)
    assert gap(0) == -gap(1) != 0


def test_aux_graph_and_routing():
    rng = random.Random(3)
    verts = list(range(10))
    adj = aux_graph(verts, 0.9, rng)
    for u in verts:
        assert u not in adj[u]
    paths = route_pairs(adj, [(0, 1), (0, 1), (2, 3)], rng)
    used = set()
    for u, t, w in paths:
        assert t in adj[u] and t in adj[w]
        for e in (norm_edge(u, t), norm_edge(t, w)):
            assert e not in used
            used.add(e)
    with pytest.raises(RoutingStuck):
        route_pairs({0: set(), 1: set()}, [(0, 1)], rng)


def check_balance_run(seed):
    host, H = balancing_instance(seed)
    B = build_balancing_graph(host, demand=H, seed=seed)
    assert B.verify()
    res = apply_balancing(B, H, seed=seed)
    Bedges = B.edges()
    assert res.B_prime <= Bedges and not res.B_prime & H
    assert res.H_prime == H | res.B_prime
    assert oracle_cross_balanced(res.H_prime, host.colour, host.cell, 3, 2)
    assert oracle_cert(Bedges - res.B_prime, res.certificate, host.colour, 3)
    return res


@pytest.mark.parametrize("seed", [1, 3])
def test_balancing_small_instances(seed):
    check_balance_run(seed)
