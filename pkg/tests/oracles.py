"""Independent reference implementations used to check the real code paths.

These deliberately use different algorithms from the package: a two-sided
cyclic Jacobi eigensolver on the Gram matrix for singular values, plain
remove-and-retest reachability for dominance, a fine-step Riemann sum for
integration, and exhaustive enumeration for the finest subgraph partition.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from diffwatt.graph import SINK, SOURCE


def gram_eigen_singular_values(mat: np.ndarray, sweeps: int = 100) -> np.ndarray:
    """Singular values as square roots of Gram-matrix eigenvalues.

    The eigenvalues come from a classical two-sided cyclic Jacobi iteration on
    the symmetric Gram matrix (the smaller side), nothing shared with the
    one-sided routine under test.
    """
    a = np.asarray(mat, dtype=np.float64)
    m, n = a.shape
    g = a @ a.T if m <= n else a.T @ a
    g = np.array(g, copy=True)
    k = g.shape[0]
    for _ in range(sweeps):
        off = 0.0
        for p in range(k - 1):
            for q in range(p + 1, k):
                off = max(off, abs(g[p, q]))
                if abs(g[p, q]) <= 1e-18 * max(abs(g[p, p]), abs(g[q, q]), 1e-300):
                    continue
                theta = 0.5 * math.atan2(2.0 * g[p, q], g[q, q] - g[p, p])
                c, s = math.cos(theta), math.sin(theta)
                rot = np.eye(k)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                g = rot.T @ g @ rot
        if off < 1e-16 * max(1.0, float(np.max(np.abs(np.diag(g))))):
            break
    eig = np.clip(np.diag(g), 0.0, None)
    return np.sort(np.sqrt(eig))[::-1]


def brute_force_dominators(g) -> dict[str, set[str]]:
    """dom(v) by definition: u dominates v iff removing u from the graph
    leaves v unreachable from SOURCE."""

    def reachable_without(blocked):
        seen = set()
        if SOURCE == blocked:
            return seen
        frontier = [SOURCE]
        seen.add(SOURCE)
        while frontier:
            node = frontier.pop()
            for m in g.successors(node):
                if m != blocked and m not in seen:
                    seen.add(m)
                    frontier.append(m)
        return seen

    dom: dict[str, set[str]] = {}
    for v in g.nodes:
        dom[v] = {v}
        for u in g.nodes:
            if u == v:
                continue
            if v not in reachable_without(u):
                dom[v].add(u)
    return dom


def brute_force_idom(g) -> dict[str, str]:
    dom = brute_force_dominators(g)
    idom = {}
    for v in g.nodes:
        if v == SOURCE:
            continue
        strict = dom[v] - {v}
        # The immediate dominator is the strict dominator dominated by all others.
        for cand in strict:
            if all(other in dom[cand] for other in strict):
                idom[v] = cand
                break
    return idom


def riemann_joules(segments, lo: int, hi: int, step_us: int = 1) -> float:
    """Fine-step integration of a piecewise-constant signal."""

    def value(t):
        for s, e, w in segments:
            if s <= t < e:
                return w
        return segments[-1][2]

    total = 0.0
    t = lo
    while t < hi:
        dt = min(step_us, hi - t)
        total += value(t) * dt
        t += dt
    return total / 1e6


def finest_partition_oracle(g_a, g_b, eq_by_a: dict[str, str]):
    """Enumerate boundary-consistent partitions and return the finest one.

    Independent route: dominator paths from brute-force dominance, candidate
    cuts from the full-output pairing rule, every monotone subset enumerated,
    the largest kept (lexicographically smallest on ties), segments from
    brute-force dominated-by sets.
    """

    def dom_path(g):
        dom = brute_force_dominators(g)
        path = sorted(dom[SINK], key=lambda n: len(dom[n]))
        return path, dom

    path_a, dom_a = dom_path(g_a)
    path_b, dom_b = dom_path(g_b)
    pos_b = {n: i for i, n in enumerate(path_b)}
    producer_b = {t: g_b.edges[t].producer for t in g_b.edges}

    candidates = []
    for i, node_a in enumerate(path_a):
        if node_a in (SOURCE, SINK):
            continue
        outs_a = g_a.out_tensors.get(node_a, ())
        partners = [eq_by_a.get(t) for t in outs_a]
        if any(p is None for p in partners):
            continue
        producers = {producer_b[p] for p in partners}
        if len(producers) != 1:
            continue
        (node_b,) = producers
        if node_b not in pos_b or node_b in (SOURCE, SINK):
            continue
        if sorted(partners) != sorted(g_b.out_tensors.get(node_b, ())):
            continue
        candidates.append((i, pos_b[node_b], node_a, node_b))

    best: list = []
    for r in range(len(candidates), -1, -1):
        options = []
        for combo in itertools.combinations(candidates, r):
            ais = [c[0] for c in combo]
            bjs = [c[1] for c in combo]
            if sorted(ais) == ais and sorted(bjs) == bjs and len(set(bjs)) == len(bjs):
                options.append(combo)
        if options:
            best = list(min(options, key=lambda cs: [(c[0], c[1]) for c in cs]))
            break

    def segments(g, dom, cuts):
        dominated = {c: {v for v in g.nodes if c in dom[v]} for c in cuts}
        segs = []
        for left, right in zip(cuts, cuts[1:]):
            nodes = (dominated[left] - dominated[right]) - {left} | {right}
            nodes -= {SOURCE, SINK}
            segs.append(frozenset(nodes))
        return segs

    cuts_a = [SOURCE] + [c[2] for c in best] + [SINK]
    cuts_b = [SOURCE] + [c[3] for c in best] + [SINK]
    segs = [
        (sa, sb)
        for sa, sb in zip(segments(g_a, dom_a, cuts_a), segments(g_b, dom_b, cuts_b))
        if sa or sb
    ]
    return segs
