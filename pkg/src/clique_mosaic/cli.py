"""Command-line front end.

Exit codes: 0 success, 1 infeasible or failed (with a machine-readable
reason), 2 usage error.  Graphs are JSON {"r", "n", "edges"}; decompositions
are JSON {"cliques"}; MOLS use the comma grid text format.  Every report
carries a run manifest; primary outputs (--out) hold no timings, so a rerun
with the same input, seed and flags reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import random
import sys
import time
from dataclasses import asdict, dataclass, field

from . import __version__
from .core import (BudgetExhausted, CliqueDecomposition, ColouredGraph, Infeasible, MultipartiteGraph,
                   clique_edges, divisibility_defect, exact_decompose, hat_delta, is_kr_divisible,
                   max_imbalance, verify_decomposition)


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    input_hashes: dict = field(default_factory=dict)
    outcome: str = ""
    timings: dict = field(default_factory=dict)
    version: str = __version__
    threads: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


def threads() -> int:
    raw = os.environ.get("CLIQUE_MOSAIC_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"CLIQUE_MOSAIC_THREADS must be an integer, got {raw!r}")


def _read(path: str) -> tuple[str, str]:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}")
    return text, hashlib.sha256(text.encode()).hexdigest()


def _load_graph(path: str, manifest: RunManifest) -> MultipartiteGraph:
    text, h = _read(path)
    manifest.input_hashes[path] = h
    try:
        return MultipartiteGraph.loads(text)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{path} is not a graph file: {exc}")


def _dump(obj, path: str | None):
    text = json.dumps(obj, sort_keys=True, indent=1) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (int, float, str, bool)) or x is None:
        return x
    return str(x)


def _exact_outcome(res) -> tuple[int, dict]:
    if isinstance(res, CliqueDecomposition):
        return 0, {"status": "decomposed", **res.to_dict()}
    if isinstance(res, Infeasible):
        return 1, {"status": "infeasible", "reason": res.reason, "certificate": _jsonable(res.detail)}
    return 1, {"status": "budget-exhausted", "steps": res.steps, "budget": res.budget}


# ---------------------------------------------------------------- subcommands

def cmd_check(a, m: RunManifest):
    g = _load_graph(a.input, m)
    ok = is_kr_divisible(g)
    out = {"r": g.r, "n": g.n, "edges": g.num_edges(), "hat_delta": hat_delta(g),
           "hat_delta_over_n": hat_delta(g) / g.n if g.n else 0.0,
           "divisible": ok, "max_imbalance": max_imbalance(g)}
    if not ok:
        out["defect"] = _jsonable(divisibility_defect(g))
    return (0 if ok else 1), out


def cmd_verify(a, m: RunManifest):
    g = _load_graph(a.input, m)
    text, h = _read(a.decomposition)
    m.input_hashes[a.decomposition] = h
    try:
        d = CliqueDecomposition.from_dict(json.loads(text))
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{a.decomposition} is not a decomposition file: {exc}")
    ok = verify_decomposition(g, d)
    return (0 if ok else 1), {"valid": ok, "cliques": len(d)}


def cmd_decompose(a, m: RunManifest):
    from .pipeline import NotDivisible, PipelineConfig, decompose_by_absorption
    g = _load_graph(a.input, m)
    if a.mode == "exact":
        return _exact_outcome(exact_decompose(g, a.budget))
    cfg = PipelineConfig(k=a.k, rho=a.rho, gamma=a.gamma, seed=a.seed, exact_budget=a.budget,
                         fallback="exact" if a.mode == "auto" else "none")
    m.config["pipeline"] = asdict(cfg)
    try:
        res = decompose_by_absorption(g, cfg)
    except NotDivisible:
        return 1, {"status": "infeasible", "reason": "divisibility",
                   "certificate": _jsonable(divisibility_defect(g))}
    report = res.to_dict()
    report.pop("seconds", None)
    if res.decomposition is not None:
        return 0, {"status": "decomposed", "route": res.route, **res.decomposition.to_dict(),
                   "stages": report["reports"]}
    out = {"status": res.route, "failure": report["failure"], "stages": report["reports"]}
    if "exact" in report:
        out["certificate"] = report["exact"]
    return 1, out


def cmd_fractional(a, m: RunManifest):
    from .fractional import (DimensionTooLarge, FractionalDecomposition, fractional_decompose,
                             verify_certificate, verify_fractional)
    g = _load_graph(a.input, m)
    try:
        res = fractional_decompose(g, cap=a.cap, method="exact")
    except DimensionTooLarge as exc:
        return 1, {"status": "too-large", "reason": str(exc)}
    if isinstance(res, FractionalDecomposition):
        assert verify_fractional(g, res)
        return 0, {"status": "feasible", **res.to_dict()}
    assert verify_certificate(g, res)
    return 1, {"status": "infeasible", "certificate": res.to_dict()}


def cmd_complete_latin(a, m: RunManifest):
    from .latin import InvalidInstance, MolsInstance, complete_mols
    text, h = _read(a.input)
    m.input_hashes[a.input] = h
    try:
        inst = MolsInstance.loads(text)
    except (InvalidInstance, ValueError) as exc:
        return 1, {"status": "invalid", "reason": str(exc)}
    if a.r is not None and a.r != inst.r:
        raise UsageError(f"--r {a.r} but the grid has {len(inst.layers)} layers (r={inst.r})")
    mode = "exact" if a.mode in ("exact", "auto") else a.mode
    res = complete_mols(inst, strategy=mode, budget=a.budget, seed=a.seed)
    if isinstance(res, MolsInstance):
        return 0, {"status": "completed", "grid": res.dumps()}
    code, out = _exact_outcome(res)
    return code, out


def cmd_gen_extremal(a, m: RunManifest):
    from .extremal import ExtremalParams, build_extremal, leftover_lower_bound, q0
    r = a.r or 3
    q = q0(r, a.m) if a.q is None else a.q
    p = ExtremalParams(r, a.m, q)
    g = build_extremal(p, seed=a.seed if a.shuffle else None)
    return 0, {**g.to_dict(), "params": {"r": r, "m": a.m, "q": q,
                                         "leftover_lower_bound": str(leftover_lower_bound(p))}}


def cmd_gadget(a, m: RunManifest):
    from .gadgets import absorber_order, build_absorber, build_M_h
    if a.kind == "mh":
        mh = build_M_h(a.r or 3, a.h)
        return 0, {"kind": "mh", "graph": mh.graph.to_dict(), "centres": list(mh.centres)}
    g = _load_graph(a.input, m)
    H = ColouredGraph.from_multipartite(g)
    if not H.is_divisible():
        return 1, {"status": "infeasible", "reason": "input is not K_r-divisible"}
    ab = build_absorber(H, s=a.s, fit_cube=not a.min_s)
    ok = ab.verify()
    return (0 if ok else 1), {"kind": "absorber", "s": ab.s, "order": len(ab.graph),
                              "order_formula": absorber_order(H, ab.s), "verified": ok,
                              "graph": ab.graph.to_dict(),
                              "cert_alone": [list(c) for c in ab.cert_alone],
                              "cert_with_target": [list(c) for c in ab.cert_with_target]}


def cmd_fix_divisibility(a, m: RunManifest):
    from .flows import FlowInfeasible, HypothesisViolated, fix_divisibility
    g = _load_graph(a.input, m)
    try:
        res = fix_divisibility(g, a.gamma, check_hypothesis=not a.no_check)
    except HypothesisViolated as exc:
        return 1, {"status": "hypothesis-violated", "reason": str(exc), "detail": _jsonable(exc.detail)}
    except FlowInfeasible as exc:
        return 1, {"status": "flow-infeasible", "reason": str(exc), "cut": _jsonable(exc.cut)}
    except AssertionError as exc:   # degree bound missed after rounding at small n
        return 1, {"status": "bound-violated", "reason": str(exc)}
    return 0, {"status": "fixed", "H": res.H.to_dict(), "G_minus_H": res.g_prime.to_dict(),
               "max_degree_H": res.H.max_degree()}


def _scan_point(args):
    r, n, removals, seed = args
    from .fractional import DimensionTooLarge, fractional_decompose
    rng = random.Random(seed)
    g = MultipartiteGraph.complete(r, n)
    used: set = set()
    for _ in range(removals):
        c = [j * n + rng.randrange(n) for j in range(r)]
        es = set(clique_edges(c))
        if not es & used:
            used |= es
    h = g.without_edges(used)
    try:
        res = fractional_decompose(h, cap=20_000, method="float")
    except DimensionTooLarge:
        return None
    return hat_delta(h) / n, res is not None


def cmd_scan(a, m: RunManifest):
    """Empirical fractional feasibility against hat_delta/n (exploratory)."""
    r = a.r or 3
    ns = [a.n] if a.n else list(range(3, 13, 3))
    rng = random.Random(a.seed)
    jobs = []
    for n in ns:
        for _ in range(a.samples):
            jobs.append((r, n, rng.randrange(0, n * n // 2 + 1), rng.randrange(1 << 30)))
    t = threads()
    if t > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=t) as ex:
            points = list(ex.map(_scan_point, jobs))
    else:
        points = [_scan_point(j) for j in jobs]
    bins: dict[float, list[int]] = {}
    for p in points:
        if p is None:
            continue
        x, ok = p
        b = round(int(x * a.bins) / a.bins, 4)
        bins.setdefault(b, [0, 0])
        bins[b][0] += int(ok)
        bins[b][1] += 1
    rows = [{"hat_delta_over_n": b, "feasible": f, "total": tot, "rate": f / tot}
            for b, (f, tot) in sorted(bins.items())]
    chart = "\n".join(f"{row['hat_delta_over_n']:5.2f} | {'#' * round(40 * row['rate']):<40} "
                      f"{row['feasible']}/{row['total']}" for row in rows)
    if a.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.plot([row["hat_delta_over_n"] for row in rows], [row["rate"] for row in rows], "o-")
        ax.set_xlabel("hat_delta / n")
        ax.set_ylabel("fractionally decomposable")
        fig.tight_layout()
        fig.savefig(a.plot)
    return 0, {"r": r, "ns": ns, "samples": a.samples, "rows": rows, "chart": chart,
               "note": "exploratory; float LP; no acceptance bound"}


# ---------------------------------------------------------------- argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="clique-mosaic", description="K_r-decompositions of balanced r-partite graphs")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, needs_input=True):
        if needs_input:
            sp.add_argument("input", nargs="?", help="input file")
            sp.add_argument("--input", dest="input_flag")
        sp.add_argument("--out", default=None)
        sp.add_argument("--report", default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--budget", type=int, default=2_000_000)
        return sp

    common(sub.add_parser("check", help="divisibility and partite minimum degree"))
    sp = common(sub.add_parser("verify", help="verify a decomposition"))
    sp.add_argument("decomposition", nargs="?")
    sp.add_argument("--decomposition", dest="decomposition_flag")
    sp = common(sub.add_parser("decompose", help="exact, pipeline or auto decomposition"))
    sp.add_argument("--mode", choices=["exact", "pipeline", "auto"], default="auto")
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--rho", type=float, default=0.5)
    sp.add_argument("--gamma", type=float, default=0.4)
    sp = common(sub.add_parser("fractional", help="exact fractional decomposition or Farkas certificate"))
    sp.add_argument("--cap", type=int, default=4000)
    sp = common(sub.add_parser("complete-latin", help="complete partial MOLS"))
    sp.add_argument("--r", type=int, default=None)
    sp.add_argument("--mode", choices=["exact", "pipeline", "auto"], default="exact")
    sp = common(sub.add_parser("gen-extremal", help="write the dense undecomposable graph G_q"), False)
    sp.add_argument("--r", type=int, default=3)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--q", type=int, default=None)
    sp.add_argument("--shuffle", action="store_true")
    sp = common(sub.add_parser("gadget", help="build an absorber (or M_h)"))
    sp.add_argument("--kind", choices=["absorber", "mh"], default="absorber")
    sp.add_argument("--r", type=int, default=None)
    sp.add_argument("--h", type=int, default=1)
    sp.add_argument("--s", type=int, default=None)
    sp.add_argument("--min-s", action="store_true", help="smallest constructible s instead of |A| <= s^3")
    sp = common(sub.add_parser("fix-divisibility", help="remove a sparse H so G - H is divisible"))
    sp.add_argument("--gamma", type=float, default=0.4)
    sp.add_argument("--no-check", action="store_true")
    sp = common(sub.add_parser("scan", help="fractional feasibility rate against hat_delta/n"), False)
    sp.add_argument("--r", type=int, default=3)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--samples", type=int, default=20)
    sp.add_argument("--bins", type=int, default=10)
    sp.add_argument("--plot", default=None)
    return p


COMMANDS = {
    "check": cmd_check, "verify": cmd_verify, "decompose": cmd_decompose, "fractional": cmd_fractional,
    "complete-latin": cmd_complete_latin, "gen-extremal": cmd_gen_extremal, "gadget": cmd_gadget,
    "fix-divisibility": cmd_fix_divisibility, "scan": cmd_scan,
}


def run(argv: list[str] | None = None) -> int:
    try:
        a = build_parser().parse_args(argv)
        if a.command is None:
            raise UsageError("missing subcommand")
        if hasattr(a, "input_flag"):
            a.input = a.input_flag or a.input
            needs = not (a.command == "gadget" and a.kind == "mh")
            if needs and not a.input:
                raise UsageError(f"{a.command}: an input file is required")
        if a.command == "verify":
            a.decomposition = a.decomposition_flag or a.decomposition
            if not a.decomposition:
                raise UsageError("verify: a decomposition file is required")
        config = {k: v for k, v in vars(a).items() if k not in ("input_flag", "decomposition_flag")}
        manifest = RunManifest(a.command, config, a.seed, threads=threads())
        t0 = time.perf_counter()
        code, out = COMMANDS[a.command](a, manifest)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 2
    manifest.outcome = out.get("status", "ok" if code == 0 else "failed")
    manifest.timings = {"seconds": round(time.perf_counter() - t0, 4)}
    if a.command == "complete-latin" and code == 0:
        grid = out["grid"]
        if a.out:
            with open(a.out, "w") as fh:
                fh.write(grid)
        else:
            sys.stdout.write(grid)
    elif a.command == "scan" and not a.out:
        sys.stdout.write(out["chart"] + "\n")
    else:
        _dump(out, a.out)
    if a.report:
        _dump({"manifest": manifest.to_dict(), "result": out}, a.report)
    if code != 0 and not a.report:
        sys.stderr.write(json.dumps({"outcome": manifest.outcome,
                                     "reason": out.get("reason", out.get("failure"))}, default=str) + "\n")
    return code


def main() -> None:
    sys.exit(run())
