"""Iterative absorption as an instrumented, desk-scale simulator.

The stages follow the cover step's dataflow: reserve R inside G[P], take
G_3 = G[P] - R - B, reduce it to a small leftover G_4 (certificate F_1),
balance G_5[P] = G_4 + R (F_2), then cover G_6[P] with cliques that each
spend a (K_{r-1})-matching inside a later cell (F_3).  Cells are processed
recursively; whatever is left inside the final cells is absorbed.

At the sizes a desk can handle the guarantees behind each stage do not
apply, so every stage verifies its own output and reports a `StageFailed`
when it cannot deliver.  The optional exact fallback keeps the entry point
total, and nothing is ever returned without passing the verifier.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

from .balancing import cross_balance_defects, decompose_irreducible, excess_multigraph, build_theta_KN
from .core import (BudgetExhausted, Clique, CliqueDecomposition, Edge, Infeasible, MultipartiteGraph,
                   edges_divisible, exact_decompose, norm_edge, solve_clique_partition,
                   verify_clique_partition, verify_decomposition)
from .cover import CoverFailed, cover_cross_edges
from .embedding import Stuck, embed_all
from .flows import ReduceResult, reduce_degree
from .partitions import (Failed, KPartition, PartitionSequence, build_partition_sequence,
                         k_partition_violations, reserve_random_subgraphs, restrict)


class NotDivisible(ValueError):
    pass


class StageFailed(RuntimeError):
    def __init__(self, stage: str, diagnostics: dict | None = None, path: tuple = ()):
        super().__init__(f"{stage} failed at cell path {list(path)}")
        self.stage = stage
        self.diagnostics = diagnostics or {}
        self.path = tuple(path)

    def to_dict(self) -> dict:
        return {"stage": self.stage, "path": list(self.path), "diagnostics": _jsonable(self.diagnostics)}


@dataclass
class PipelineConfig:
    alpha: float = 0.5
    delta: float = 0.3
    eta: float = 0.1
    rho: float = 0.5
    k: int = 2
    eps: float = 0.1
    gamma: float = 0.4
    m_prime: int = 3
    seed: int = 0
    stage_budget: int = 20_000
    exact_budget: int = 2_000_000
    reservation: str = "random"           # random | none | full
    reserve_conditions: tuple = ("i", "ii", "iii")
    fallback: str = "exact"               # exact | none

    def __post_init__(self):
        for name in ("alpha", "delta", "eta", "rho", "eps", "gamma"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if self.reservation not in ("random", "none", "full"):
            raise ValueError(f"unknown reservation mode {self.reservation!r}")
        if self.fallback not in ("exact", "none"):
            raise ValueError(f"unknown fallback {self.fallback!r}")


@dataclass
class StageReport:
    stage: str
    path: tuple
    leftover_edges: int = 0
    leftover_max_degree: int = 0
    divisibility_defects: int = 0
    retries: int = 0
    certificates: int = 0
    ok: bool = True
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["path"] = list(self.path)
        d["detail"] = _jsonable(self.detail)
        return d


@dataclass
class PipelineResult:
    decomposition: CliqueDecomposition | None
    route: str                       # pipeline | fallback | infeasible | budget | failed
    reports: list[StageReport]
    failure: StageFailed | None = None
    exact: object = None
    seconds: float = 0.0

    def to_dict(self) -> dict:
        out = {"route": self.route, "reports": [r.to_dict() for r in self.reports],
               "failure": self.failure.to_dict() if self.failure else None,
               "seconds": round(self.seconds, 4)}
        if self.decomposition is not None:
            out["decomposition"] = self.decomposition.to_dict()
        if isinstance(self.exact, (Infeasible, BudgetExhausted)):
            out["exact"] = _jsonable(asdict(self.exact))
        return out


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (int, float, str, bool)) or x is None:
        return x
    return repr(x)


def _defects(edges, colour, r: int) -> int:
    deg: dict[int, list[int]] = {}
    for u, v in edges:
        deg.setdefault(u, [0] * r)[colour[v]] += 1
        deg.setdefault(v, [0] * r)[colour[u]] += 1
    bad = 0
    for v, row in deg.items():
        if len({row[j] for j in range(r) if j != colour[v]}) > 1:
            bad += 1
    return bad


def _max_degree(edges) -> int:
    deg: dict[int, int] = {}
    for u, v in edges:
        deg[u] = deg.get(u, 0) + 1
        deg[v] = deg.get(v, 0) + 1
    return max(deg.values(), default=0)


def _split(edges, part: KPartition):
    idx = part.cell_index()
    cross, inner = set(), set()
    for u, v in edges:
        if u in idx and v in idx:
            (cross if idx[u] != idx[v] else inner).add((u, v))
    return cross, inner


def _reduce(g: MultipartiteGraph, edges: set[Edge], cfg: PipelineConfig, seed: int):
    """F_1 and the leftover G_4: exact search first, degree reduction second."""
    if not edges:
        return [], set(), "empty"
    colour = g.colour()
    res = solve_clique_partition(edges, colour, g.r, cfg.stage_budget)
    if isinstance(res, list):
        return res, set(), "exact"
    try:
        red = reduce_degree(MultipartiteGraph(g.r, g.n, edges), eta=cfg.eta, gamma=cfg.gamma, seed=seed,
                            skip_unmatched=True)
    except Exception as exc:   # the degree reducer's own preconditions can fail at this size
        return [], set(edges), f"reduce-error:{type(exc).__name__}"
    if isinstance(red, ReduceResult):
        return red.cover, set(red.remainder.edges), "reduce"
    return [], set(edges), "none"


def _probe_balancing(g: MultipartiteGraph, part: KPartition, g5_cross: set[Edge], cfg: PipelineConfig, seed: int):
    """Try to embed the edge balancers a targeted balancing graph would need."""
    colour = g.colour()
    cell = part.cell_index()
    k = len(part.cells)
    try:
        pieces = decompose_irreducible(excess_multigraph(g5_cross, colour, cell, g.r, k))
    except ValueError as exc:
        return {"probe": "excess multigraph not divisible", "error": str(exc)}
    kn = build_theta_KN(k, g.r, 1)
    host = MultipartiteGraph(g.r, g.n, g.edges)
    emb = embed_all(host, part, [kn.template] * max(1, len(pieces)), cap=cfg.gamma, seed=seed, retries=3)
    if isinstance(emb, Stuck):
        return {"probe": "edge balancer not embeddable", "pieces": len(pieces),
                "template_order": len(kn.template.labels), "stuck_vertex": emb.vertex}
    return {"probe": "edge balancers embed; transfer gadgets and their absorbers do not fit",
            "pieces": len(pieces)}


def cover_partition_step(g: MultipartiteGraph, part: KPartition, reserved: set[Edge],
                         cfg: PipelineConfig, path: tuple = (), seed: int = 0,
                         reports: list | None = None):
    """One cover step on the vertex set of `part`.

    Returns (H, certificate): H is the set of cell-interior edges consumed and
    the certificate decomposes G[P] + H exactly.
    """
    reports = reports if reports is not None else []
    r = g.r
    colour = g.colour()
    W = sorted(v for c in part.cells for v in c)
    bad = k_partition_violations(g, part, W)
    if bad:
        raise StageFailed("hypotheses", {"partition": bad[:5]}, path)
    edges = {e for e in g.edges if e[0] in set(W) and e[1] in set(W)}
    cross, inner = _split(edges, part)
    R = set(reserved) & cross
    if set(reserved) - cross:
        raise StageFailed("hypotheses", {"reserved_outside_cross": len(set(reserved) - cross)}, path)
    if not edges_divisible(edges, colour, r):
        raise StageFailed("hypotheses", {"not_divisible": _defects(edges, colour, r)}, path)
    if not cross:
        reports.append(StageReport("cover-step", path, leftover_edges=len(inner), detail={"trivial": True}))
        return set(), []

    g3 = cross - R
    f1, g4, how = _reduce(g, g3, cfg, seed)
    reports.append(StageReport("degree-reduction", path, leftover_edges=len(g4),
                               leftover_max_degree=_max_degree(g4), certificates=len(f1),
                               detail={"method": how, "G3_edges": len(g3)}))
    g5_cross = g4 | R
    defects = cross_balance_defects(g5_cross, colour, part.cell_index(), r, len(part.cells))
    if defects:
        probe = _probe_balancing(g, part, g5_cross, cfg, seed)
        reports.append(StageReport("balancing", path, ok=False,
                                   divisibility_defects=len(defects),
                                   detail={"defects": defects[:5], **probe}))
        raise StageFailed("balancing", {"defects": len(defects), **probe}, path)
    reports.append(StageReport("balancing", path, detail={"B": 0, "note": "G5[P] already balanced"}))

    g6 = MultipartiteGraph(r, g.n, inner | g5_cross)
    cov = cover_cross_edges(g6, part, cfg.rho, seed=seed, budget=cfg.stage_budget)
    if isinstance(cov, CoverFailed):
        reports.append(StageReport("cover", path, ok=False, detail={"reason": cov.reason}))
        raise StageFailed("cover", {"reason": cov.reason, "detail": cov.detail}, path)
    H = set(cov.g0)
    cert = list(f1) + list(cov.cliques)
    if not verify_clique_partition(cross | H, cert, colour, r):
        raise StageFailed("certificate", {"edges": len(cross | H)}, path)
    bound = 4 * r * cfg.rho * g.n
    if _max_degree(H) > bound:
        raise StageFailed("cover", {"max_degree_H": _max_degree(H), "bound": bound}, path)
    reports.append(StageReport("cover", path, leftover_edges=len(inner - H),
                               leftover_max_degree=_max_degree(H), certificates=len(cov.cliques),
                               retries=cov.telemetry.get("attempts", 1) - 1))
    return H, cert


def _reservations(g: MultipartiteGraph, seq: PartitionSequence, cfg: PipelineConfig, reports) -> list[set[Edge]]:
    if cfg.reservation == "none" or seq.length == 0:
        return [set() for _ in range(seq.length)]
    if cfg.reservation == "full":
        out = []
        prev: set = set()
        for part in seq.levels:
            cr, _ = _split(g.edges, part)
            out.append(cr - prev)
            prev = cr
        return out
    res = reserve_random_subgraphs(g, seq, cfg.rho, cfg.alpha, seed=cfg.seed,
                                   conditions=cfg.reserve_conditions)
    if isinstance(res, Failed):
        reports.append(StageReport("reserve", (), ok=False, detail=res.detail))
        raise StageFailed("reserve", {"reason": res.reason, **res.detail})
    reports.append(StageReport("reserve", (), detail={"edges": [len(x) for x in res.R], **res.telemetry}))
    return [set(x) for x in res.R]


def iterate(g: MultipartiteGraph, seq: PartitionSequence, reserved: list[set[Edge]], cfg: PipelineConfig,
            reports: list | None = None):
    """Run the cover step level by level.  Returns (H, certificate) with H
    inside the final cells and the certificate decomposing G - H."""
    reports = reports if reports is not None else []
    remaining = set(g.edges)
    cert: list[Clique] = []

    def rec(level: int, W: list[int], path: tuple):
        part = restrict(seq.levels[level], W)
        Wset = set(W)
        sub = MultipartiteGraph(g.r, g.n, [e for e in remaining if e[0] in Wset and e[1] in Wset])
        R = {e for e in reserved[level] if e in remaining and e[0] in Wset and e[1] in Wset}
        H, c = cover_partition_step(sub, part, R, cfg, path, seed=cfg.seed + 7919 * level + len(path),
                                    reports=reports)
        cross, _ = _split(sub.edges, part)
        remaining.difference_update(cross)
        remaining.difference_update(H)
        cert.extend(c)
        if level + 1 < seq.length:
            for ci, U in enumerate(part.cells):
                rec(level + 1, sorted(U), path + (ci,))

    if seq.length:
        rec(0, list(range(g.num_vertices)), ())
    finals = seq.levels[-1].cells if seq.length else [list(range(g.num_vertices))]
    idx = {v: i for i, c in enumerate(finals) for v in c}
    stray = [e for e in remaining if idx[e[0]] != idx[e[1]]]
    assert not stray, "leftover edge outside the final cells"
    assert verify_clique_partition(set(g.edges) - remaining, cert, g.colour(), g.r)
    return remaining, cert


def decompose_by_absorption(g: MultipartiteGraph, cfg: PipelineConfig | None = None, seed: int | None = None):
    """Partition sequence, cover steps, then absorb what is left in each final
    cell.  Absorbers are materialized on demand: a final-cell remainder that
    decomposes on its own uses the empty absorber; anything else is a
    StageFailed.  With fallback='exact' a failed run is handed to the exact
    solver.  Every returned decomposition has passed the verifier."""
    cfg = cfg or PipelineConfig()
    if seed is not None:
        cfg = PipelineConfig(**{**asdict(cfg), "seed": seed})
    t0 = time.perf_counter()
    colour = g.colour()
    if not edges_divisible(g.edges, colour, g.r):
        raise NotDivisible("input graph is not K_r-divisible")
    reports: list[StageReport] = []
    failure = None
    try:
        seq = build_partition_sequence(g, cfg.k, cfg.alpha, cfg.delta, cfg.m_prime, seed=cfg.seed)
        if isinstance(seq, Failed):
            reports.append(StageReport("partition", (), ok=False, detail=seq.detail))
            raise StageFailed("partition", {"reason": seq.reason})
        reports.append(StageReport("partition", (), detail={"levels": seq.length, "m": seq.m}))
        reserved = _reservations(g, seq, cfg, reports)
        H, cert = iterate(g, seq, reserved, cfg, reports)
        finals = seq.levels[-1].cells if seq.length else [list(range(g.num_vertices))]
        for ci, U in enumerate(finals):
            Us = set(U)
            HU = [e for e in H if e[0] in Us]
            assert edges_divisible(HU, colour, g.r), "final-cell remainder is not divisible"
            res = solve_clique_partition(HU, colour, g.r, cfg.stage_budget)
            if not isinstance(res, list):
                reports.append(StageReport("absorb", (ci,), ok=False, leftover_edges=len(HU),
                                           detail={"result": type(res).__name__}))
                raise StageFailed("absorb", {"cell": ci, "edges": len(HU), "result": type(res).__name__}, (ci,))
            cert.extend(res)
        reports.append(StageReport("absorb", (), certificates=len(cert)))
        d = CliqueDecomposition(sorted(cert))
        if not verify_decomposition(g, d):
            raise StageFailed("certificate", {"cliques": len(cert)})
        return PipelineResult(d, "pipeline", reports, None, None, time.perf_counter() - t0)
    except StageFailed as exc:
        failure = exc
    if cfg.fallback == "none":
        return PipelineResult(None, "failed", reports, failure, None, time.perf_counter() - t0)
    res = exact_decompose(g, cfg.exact_budget)
    if isinstance(res, CliqueDecomposition):
        if not verify_decomposition(g, res):
            raise AssertionError("exact solver produced an invalid decomposition")
        route = "fallback"
        return PipelineResult(res, route, reports, failure, None, time.perf_counter() - t0)
    route = "infeasible" if isinstance(res, Infeasible) else "budget"
    return PipelineResult(None, route, reports, failure, res, time.perf_counter() - t0)
