"""Topology-aware partitioning of two computational graphs into equivalent
subgraph pairs.

Equivalent tensors found on both graphs' dominator paths act as cut points;
cutting there and recursing yields the finest partition whose segment
boundaries are equivalent tensor pairs. Matched pairs that cross (one path
orders them one way, the other the opposite way) cannot all be cuts; the
largest monotone subset is kept and the rest reported as dropped.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from . import tensor_equiv
from .graph import SINK, SOURCE, CompGraph, compute_idoms
from .trace_model import elementwise_rel_diff

OUTPUT_REL_DIFF_LIMIT = 0.01  # model outputs this close count as "the same result"


class MatchPreconditionError(Exception):
    """The graphs do not share equivalent source inputs / sink outputs."""


@dataclass(frozen=True)
class TensorPair:
    tensor_a: str
    tensor_b: str
    score: float
    confirmed_runs: tuple[int, ...]


@dataclass(frozen=True)
class TensorPairSet:
    """Injective pairing of equivalent tensors between two graphs."""

    pairs: tuple[TensorPair, ...]

    def partner_of_a(self, tensor_id: str) -> Optional[str]:
        for p in self.pairs:
            if p.tensor_a == tensor_id:
                return p.tensor_b
        return None

    def by_a(self) -> dict[str, str]:
        return {p.tensor_a: p.tensor_b for p in self.pairs}

    def by_b(self) -> dict[str, str]:
        return {p.tensor_b: p.tensor_a for p in self.pairs}

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class MatchStats:
    candidate_pairs: int  # edge pairs surviving the cheap prefilter
    full_checks: int  # invariant-set comparisons actually performed
    wall_time_s: float


@dataclass(frozen=True)
class SubgraphPair:
    nodes_a: tuple[str, ...]
    nodes_b: tuple[str, ...]
    boundary_left: tuple[tuple[str, str], ...]
    boundary_right: tuple[tuple[str, str], ...]
    depth: int
    coarse: bool = False

    def size(self) -> int:
        return max(len(self.nodes_a), len(self.nodes_b))


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[SubgraphPair, ...]
    dropped_cut_pairs: tuple[tuple[str, str], ...]
    wall_time_s: float


# ---------------------------------------------------------------------------
# Tensor matching across graphs


def _topo_ranks(g: CompGraph) -> dict[str, int]:
    indeg = {n: 0 for n in g.nodes}
    for n in g.nodes:
        for m in g.successors(n):
            indeg[m] += 1
    ready = sorted(n for n, d in indeg.items() if d == 0)
    rank: dict[str, int] = {}
    while ready:
        n = ready.pop(0)
        rank[n] = len(rank)
        added = []
        for m in g.successors(n):
            indeg[m] -= 1
            if indeg[m] == 0:
                added.append(m)
        ready = sorted(ready + added)
    return rank


def match_tensors(
    gA: CompGraph, gB: CompGraph, epsilon: float = tensor_equiv.DEFAULT_EPSILON
) -> tuple[TensorPairSet, MatchStats]:
    """Pairwise tensor matching across all edges of the two graphs.

    A candidate pair must be equivalent on every recorded input run; surviving
    many-to-many ambiguities are resolved by closest topological rank of the
    producing operators, then lexicographic tensor id, keeping the final
    pairing injective in both directions.
    """
    import numpy as np

    t0 = time.perf_counter()
    trace_a, trace_b = gA.trace, gB.trace
    runs = max(min(trace_a.run_count, trace_b.run_count), 1)

    ids_a = sorted(gA.edges)
    ids_b = sorted(gB.edges)

    def norms(trace, ids, run):
        return np.array(
            [math.sqrt(sum(v * v for v in trace.snapshot(t, run).values)) for t in ids]
        )

    counts_a = np.array([trace_a.snapshot(t).element_count() for t in ids_a])
    counts_b = np.array([trace_b.snapshot(t).element_count() for t in ids_b])
    mask = counts_a[:, None] == counts_b[None, :]
    for run in range(runs):
        na = norms(trace_a, ids_a, run)
        nb = norms(trace_b, ids_b, run)
        lo = np.minimum(na[:, None], nb[None, :])
        diff = np.abs(na[:, None] - nb[None, :])
        mask &= diff <= epsilon * np.maximum(lo, 1e-30)
    candidate_count = int(mask.sum())

    inv_cache_a: dict[tuple[str, int], tensor_equiv.InvariantSet] = {}
    inv_cache_b: dict[tuple[str, int], tensor_equiv.InvariantSet] = {}

    def inv_of(trace, cache, tid, run):
        key = (tid, run)
        if key not in cache:
            cache[key] = tensor_equiv.invariant_set(trace.snapshot(tid, run))
        return cache[key]

    full_checks = 0
    candidates: list[tuple[str, str, float]] = []
    ai_idx, bi_idx = np.nonzero(mask)
    for ai, bi in zip(ai_idx.tolist(), bi_idx.tolist()):
        ta, tb = ids_a[ai], ids_b[bi]
        worst = 0.0
        ok = True
        for run in range(runs):
            snap_a, snap_b = trace_a.snapshot(ta, run), trace_b.snapshot(tb, run)
            full_checks += 1
            eq, score = tensor_equiv.tensors_equivalent(
                snap_a,
                snap_b,
                epsilon,
                set_a=inv_of(trace_a, inv_cache_a, ta, run) if len(snap_a.shape) > 1 else None,
                set_b=inv_of(trace_b, inv_cache_b, tb, run) if len(snap_b.shape) > 1 else None,
            )
            if not eq:
                ok = False
                break
            worst = max(worst, score)
        if ok:
            candidates.append((ta, tb, worst))

    rank_a = _topo_ranks(gA)
    rank_b = _topo_ranks(gB)
    ordered = sorted(
        candidates,
        key=lambda c: (
            abs(rank_a[gA.edges[c[0]].producer] - rank_b[gB.edges[c[1]].producer]),
            c[0],
            c[1],
        ),
    )
    used_a: set[str] = set()
    used_b: set[str] = set()
    pairs: list[TensorPair] = []
    for ta, tb, score in ordered:
        if ta in used_a or tb in used_b:
            continue
        used_a.add(ta)
        used_b.add(tb)
        pairs.append(
            TensorPair(tensor_a=ta, tensor_b=tb, score=score, confirmed_runs=tuple(range(runs)))
        )
    pairs.sort(key=lambda p: (p.tensor_a, p.tensor_b))
    stats = MatchStats(
        candidate_pairs=candidate_count,
        full_checks=full_checks,
        wall_time_s=time.perf_counter() - t0,
    )
    return TensorPairSet(pairs=tuple(pairs)), stats


# ---------------------------------------------------------------------------
# Recursive subgraph matching


def _outputs_fully_paired(
    outs_a: Sequence[str], outs_b: Sequence[str], by_a: Mapping[str, str]
) -> Optional[list[tuple[str, str]]]:
    """All outputs of one node pair with exactly the outputs of the other."""
    if not outs_a or not outs_b or len(outs_a) != len(outs_b):
        return None
    paired = []
    for ta in outs_a:
        tb = by_a.get(ta)
        if tb is None or tb not in outs_b:
            return None
        paired.append((ta, tb))
    return paired


def _lis_monotone(pairs: list[tuple[int, int, str, str]]) -> tuple[list, list]:
    """Keep the largest subset monotone in both path positions.

    ``pairs`` are (pos_a, pos_b, node_a, node_b) sorted by pos_a. Among maximum
    monotone subsets the lexicographically smallest (by position tuples) wins,
    so the result is deterministic. Returns (kept, dropped).
    """
    n = len(pairs)
    if n == 0:
        return [], []
    length = [1] * n
    for k in range(n - 1, -1, -1):
        best = 0
        for m in range(k + 1, n):
            if pairs[m][0] > pairs[k][0] and pairs[m][1] > pairs[k][1]:
                best = max(best, length[m])
        length[k] = 1 + best
    target = max(length)
    kept: list = []
    prev = (-1, -1)
    remaining = target
    idx = 0
    while remaining > 0:
        for k in range(idx, n):
            if (
                length[k] == remaining
                and pairs[k][0] > prev[0]
                and pairs[k][1] > prev[1]
            ):
                kept.append(pairs[k])
                prev = (pairs[k][0], pairs[k][1])
                idx = k + 1
                break
        remaining -= 1
    kept_set = {(p[2], p[3]) for p in kept}
    dropped = [p for p in pairs if (p[2], p[3]) not in kept_set]
    return kept, dropped


class _Region:
    """A closed subgraph between two cut nodes, viewed as its own DAG."""

    def __init__(self, g: CompGraph, nodes: frozenset[str], source: str, sink: str):
        self.g = g
        self.nodes = nodes
        self.source = source
        self.sink = sink

    def successors(self, n: str) -> list[str]:
        if n == self.sink:
            return []
        return [m for m in self.g.successors(n) if m in self.nodes]

    def predecessors(self, n: str) -> list[str]:
        if n == self.source:
            return []
        return [m for m in self.g.predecessors(n) if m in self.nodes]


def _whole_graph_region(g: CompGraph) -> _Region:
    return _Region(g, frozenset(g.nodes), SOURCE, SINK)


def _sink_boundary_pairs(gA: CompGraph, gB: CompGraph, eq: TensorPairSet) -> list[tuple[str, str]]:
    """Pair the model outputs; equivalent pairs or element-wise near-identical."""
    outs_a = list(gA.in_tensors.get(SINK, ()))
    outs_b = list(gB.in_tensors.get(SINK, ()))
    if len(outs_a) != len(outs_b):
        raise MatchPreconditionError(
            f"model output counts differ: {len(outs_a)} vs {len(outs_b)}"
        )
    by_a = eq.by_a()
    pairs: list[tuple[str, str]] = []
    unused = set(outs_b)
    for ta in outs_a:
        tb = by_a.get(ta)
        if tb in unused:
            pairs.append((ta, tb))
            unused.discard(tb)
            continue
        snap_a = gA.trace.snapshot(ta)
        best = None
        for cand in sorted(unused):
            snap_b = gB.trace.snapshot(cand)
            if snap_a.shape != snap_b.shape:
                continue
            diff = elementwise_rel_diff(snap_a, snap_b)
            if diff <= OUTPUT_REL_DIFF_LIMIT and (best is None or diff < best[1]):
                best = (cand, diff)
        if best is None:
            raise MatchPreconditionError(f"model output {ta!r} has no equivalent counterpart")
        pairs.append((ta, best[0]))
        unused.discard(best[0])
    return pairs


def recursive_match(gA: CompGraph, gB: CompGraph, eq: TensorPairSet) -> MatchResult:
    """Partition both graphs into equivalent subgraph pairs (divide and conquer).

    Precondition: the graphs share equivalent source inputs and sink outputs.
    Emits disjoint pairs covering both graphs; a pair with no interior cut at
    the top level is flagged coarse.
    """
    t0 = time.perf_counter()
    by_a = eq.by_a()

    source_pairs = _outputs_fully_paired(
        gA.out_tensors.get(SOURCE, ()), gB.out_tensors.get(SOURCE, ()), by_a
    )
    if source_pairs is None:
        raise MatchPreconditionError("model inputs of the two graphs are not paired")
    sink_pairs = _sink_boundary_pairs(gA, gB, eq)

    pairs: list[SubgraphPair] = []
    dropped: list[tuple[str, str]] = []

    def recurse(
        region_a: _Region,
        region_b: _Region,
        left_boundary: list[tuple[str, str]],
        right_boundary: list[tuple[str, str]],
        depth: int,
    ) -> None:
        dom_a = compute_idoms(
            region_a.source, region_a.sink, region_a.successors, region_a.predecessors
        )
        dom_b = compute_idoms(
            region_b.source, region_b.sink, region_b.successors, region_b.predecessors
        )
        path_a, path_b = dom_a.dom_path, dom_b.dom_path
        pos_b = {n: i for i, n in enumerate(path_b)}

        # Interior cut candidates: path-node pairs whose full output sets pair.
        producer_b_of = {t: gB.edges[t].producer for t in by_a.values()}
        candidates: list[tuple[int, int, str, str, list[tuple[str, str]]]] = []
        for i, node_a in enumerate(path_a[1:-1], start=1):
            outs_a = gA.out_tensors.get(node_a, ())
            partner_producers = {producer_b_of.get(by_a.get(t)) for t in outs_a}
            if len(partner_producers) != 1:
                continue
            (node_b,) = partner_producers
            if node_b is None or pos_b.get(node_b) in (None, 0, len(path_b) - 1):
                continue
            paired = _outputs_fully_paired(outs_a, gB.out_tensors.get(node_b, ()), by_a)
            if paired is not None:
                candidates.append((i, pos_b[node_b], node_a, node_b, paired))

        kept, dropped_here = _lis_monotone([c[:4] for c in candidates])
        boundary_of = {(c[2], c[3]): c[4] for c in candidates}
        dropped.extend((d[2], d[3]) for d in dropped_here)

        if not kept:
            nodes_a = _emit_nodes(region_a)
            nodes_b = _emit_nodes(region_b)
            if nodes_a or nodes_b:
                pairs.append(
                    SubgraphPair(
                        nodes_a=nodes_a,
                        nodes_b=nodes_b,
                        boundary_left=tuple(left_boundary),
                        boundary_right=tuple(right_boundary),
                        depth=depth,
                        coarse=depth == 0 and max(len(nodes_a), len(nodes_b)) > 1,
                    )
                )
            return

        cut_nodes = (
            [(region_a.source, region_b.source)]
            + [(c[2], c[3]) for c in kept]
            + [(region_a.sink, region_b.sink)]
        )
        cut_boundaries = (
            [left_boundary]
            + [boundary_of[(c[2], c[3])] for c in kept]
            + [right_boundary]
        )

        seg_a = _segments(region_a, [c[0] for c in cut_nodes], dom_a)
        seg_b = _segments(region_b, [c[1] for c in cut_nodes], dom_b)
        for k in range(len(cut_nodes) - 1):
            sub_a = _Region(gA, seg_a[k], cut_nodes[k][0], cut_nodes[k + 1][0])
            sub_b = _Region(gB, seg_b[k], cut_nodes[k][1], cut_nodes[k + 1][1])
            recurse(sub_a, sub_b, cut_boundaries[k], cut_boundaries[k + 1], depth + 1)

    recurse(
        _whole_graph_region(gA),
        _whole_graph_region(gB),
        source_pairs,
        sink_pairs,
        0,
    )
    return MatchResult(
        pairs=tuple(pairs),
        dropped_cut_pairs=tuple(dropped),
        wall_time_s=time.perf_counter() - t0,
    )


def _emit_nodes(region: _Region) -> tuple[str, ...]:
    drop = {region.source, SOURCE, SINK}
    return tuple(sorted(n for n in region.nodes if n not in drop))


def _segments(region: _Region, cuts: list[str], dom) -> list[frozenset[str]]:
    """Split a region at cut nodes: each node joins the segment of its lowest
    cut dominator; a cut node itself closes the preceding segment."""
    cut_pos = {c: k for k, c in enumerate(cuts)}
    memo: dict[str, int] = {}

    def lowest_cut(node: str) -> int:
        chain = []
        n: Optional[str] = node
        while n is not None and n not in memo:
            if n in cut_pos:
                memo[n] = cut_pos[n]
                break
            chain.append(n)
            n = dom.idom.get(n)
        base = memo[n] if n is not None and n in memo else 0
        for c in chain:
            memo[c] = base
        return memo[node]

    segments: list[set[str]] = [set() for _ in range(len(cuts) - 1)]
    for node in region.nodes:
        if node in cut_pos:
            k = cut_pos[node]
            if k > 0:
                segments[k - 1].add(node)  # right boundary of the previous segment
            if k < len(cuts) - 1:
                segments[k].add(node)  # local source of the next region
        else:
            segments[lowest_cut(node)].add(node)
    return [frozenset(s) for s in segments]


# ---------------------------------------------------------------------------
# Reporting


@dataclass(frozen=True)
class SegmentReport:
    pair_count: int
    avg_size: float
    max_size: int
    coarse_count: int
    dropped_cut_pairs: int
    wall_time_s: float

    def summary(self) -> str:
        return (
            f"{self.pair_count} subgraph pairs "
            f"(avg size {self.avg_size:.1f}, max {self.max_size}) in {self.wall_time_s:.3f}s"
        )


def segment_cost_report(result: MatchResult) -> SegmentReport:
    sizes = [p.size() for p in result.pairs]
    return SegmentReport(
        pair_count=len(result.pairs),
        avg_size=sum(sizes) / len(sizes) if sizes else 0.0,
        max_size=max(sizes) if sizes else 0,
        coarse_count=sum(1 for p in result.pairs if p.coarse),
        dropped_cut_pairs=len(result.dropped_cut_pairs),
        wall_time_s=result.wall_time_s,
    )
