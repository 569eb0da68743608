"""Computational graph construction and dominator structure.

Operators are nodes and tensors are edges. A virtual SOURCE produces the
model inputs and a virtual SINK consumes the terminal outputs, so every
graph has a unique entry and exit regardless of how many model inputs or
outputs the workload has.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

from .trace_model import Trace

SOURCE = "__source__"
SINK = "__sink__"


class GraphBuildError(Exception):
    pass


@dataclass(frozen=True)
class TensorEdge:
    tensor_id: str
    producer: str
    consumers: tuple[str, ...]


@dataclass(frozen=True)
class CompGraph:
    """DAG over operator ids plus the virtual SOURCE/SINK nodes."""

    nodes: tuple[str, ...]  # SOURCE first, SINK last, operators in trace order
    edges: Mapping[str, TensorEdge]  # tensor_id -> edge
    out_tensors: Mapping[str, tuple[str, ...]]  # node -> output tensor ids
    in_tensors: Mapping[str, tuple[str, ...]]  # node -> input tensor ids
    trace: Trace

    def successors(self, node: str) -> list[str]:
        seen: list[str] = []
        for tid in self.out_tensors.get(node, ()):
            for c in self.edges[tid].consumers:
                if c not in seen:
                    seen.append(c)
        return seen

    def predecessors(self, node: str) -> list[str]:
        seen: list[str] = []
        for tid in self.in_tensors.get(node, ()):
            p = self.edges[tid].producer
            if p not in seen:
                seen.append(p)
        return seen

    def operator_nodes(self) -> tuple[str, ...]:
        return tuple(n for n in self.nodes if n not in (SOURCE, SINK))

    def out(self, node: str) -> tuple[str, ...]:
        """Output tensor set of a node (the edge labels leaving it)."""
        return self.out_tensors.get(node, ())


def build_graph(trace: Trace) -> CompGraph:
    """Build the operator/tensor DAG from a validated trace."""
    produced: dict[str, str] = {}
    consumed: dict[str, list[str]] = {}
    for op in trace.operators:
        for tid in op.output_tensor_ids:
            produced[tid] = op.op_id
        for tid in op.input_tensor_ids:
            consumed.setdefault(tid, []).append(op.op_id)

    for tid in trace.tensors:
        if tid not in produced and tid not in consumed:
            raise GraphBuildError(
                f"orphan tensor {tid!r}: neither produced by an operator nor a model input"
            )

    edges: dict[str, TensorEdge] = {}
    out_tensors: dict[str, list[str]] = {SOURCE: [], SINK: []}
    in_tensors: dict[str, list[str]] = {SOURCE: [], SINK: []}
    for op in trace.operators:
        out_tensors[op.op_id] = list(op.output_tensor_ids)
        in_tensors[op.op_id] = list(op.input_tensor_ids)

    for tid in trace.tensors:
        prod = produced.get(tid, SOURCE)
        cons = tuple(consumed.get(tid, [SINK]))
        edges[tid] = TensorEdge(tensor_id=tid, producer=prod, consumers=cons)
        if prod == SOURCE:
            out_tensors[SOURCE].append(tid)
        if SINK in cons:
            in_tensors[SINK].append(tid)

    nodes = (SOURCE,) + tuple(op.op_id for op in trace.operators) + (SINK,)
    g = CompGraph(
        nodes=nodes,
        edges=edges,
        out_tensors={n: tuple(sorted(ts)) for n, ts in out_tensors.items()},
        in_tensors={n: tuple(sorted(ts)) for n, ts in in_tensors.items()},
        trace=trace,
    )
    _check_connectivity(g)
    return g


def _check_connectivity(g: CompGraph) -> None:
    reach_fwd = _reachable(g, SOURCE, forward=True)
    reach_bwd = _reachable(g, SINK, forward=False)
    for n in g.operator_nodes():
        if n not in reach_fwd:
            raise GraphBuildError(f"operator {n!r} unreachable from the model inputs")
        if n not in reach_bwd:
            raise GraphBuildError(f"operator {n!r} does not reach any model output")
    if _has_cycle(g):
        raise GraphBuildError("cycle detected in the computational graph")


def _reachable(g: CompGraph, start: str, forward: bool) -> set[str]:
    step = g.successors if forward else g.predecessors
    seen = {start}
    frontier = [start]
    while frontier:
        n = frontier.pop()
        for m in step(n):
            if m not in seen:
                seen.add(m)
                frontier.append(m)
    return seen


def _has_cycle(g: CompGraph) -> bool:
    state: dict[str, int] = {}
    for root in g.nodes:
        if state.get(root, 0):
            continue
        stack = [(root, iter(g.successors(root)))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for m in it:
                s = state.get(m, 0)
                if s == 1:
                    return True
                if s == 0:
                    state[m] = 1
                    stack.append((m, iter(g.successors(m))))
                    advanced = True
                    break
            if not advanced:
                state[node] = 2
                stack.pop()
    return False


# ---------------------------------------------------------------------------
# Dominators


@dataclass(frozen=True)
class DominatorInfo:
    idom: Mapping[str, Optional[str]]  # node -> immediate dominator (SOURCE -> None)
    dom_path: tuple[str, ...]  # SOURCE ... SINK, each element dominates the next

    def dominates(self, a: str, b: str) -> bool:
        """True iff ``a`` dominates ``b`` (reflexive)."""
        node: Optional[str] = b
        while node is not None:
            if node == a:
                return True
            node = self.idom.get(node)
        return False

    def dominated_by(self, a: str) -> set[str]:
        """All nodes dominated by ``a`` (the idom subtree of ``a``, inclusive)."""
        children: dict[str, list[str]] = {}
        for node, parent in self.idom.items():
            if parent is not None:
                children.setdefault(parent, []).append(node)
        out = {a}
        frontier = [a]
        while frontier:
            n = frontier.pop()
            for c in children.get(n, ()):
                out.add(c)
                frontier.append(c)
        return out


def reverse_postorder(source: str, successors) -> list[str]:
    order: list[str] = []
    seen = {source}
    stack = [(source, iter(successors(source)))]
    while stack:
        node, it = stack[-1]
        advanced = False
        for m in it:
            if m not in seen:
                seen.add(m)
                stack.append((m, iter(successors(m))))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return list(reversed(order))


def compute_idoms(source: str, sink: str, successors, predecessors) -> DominatorInfo:
    """Iterative dataflow over reverse postorder (Cooper/Harvey/Kennedy scheme).

    Works on any DAG view given successor/predecessor functions, so the same
    routine serves both whole graphs and the regions the matcher recurses into.
    """
    rpo = reverse_postorder(source, successors)
    index = {n: i for i, n in enumerate(rpo)}
    idom: dict[str, Optional[str]] = {source: None}

    def intersect(u: str, v: str) -> str:
        while u != v:
            while index[u] > index[v]:
                u = idom[u]  # type: ignore[assignment]
            while index[v] > index[u]:
                v = idom[v]  # type: ignore[assignment]
        return u

    changed = True
    while changed:
        changed = False
        for n in rpo:
            if n == source:
                continue
            preds = [p for p in predecessors(n) if p in idom]
            if not preds:
                continue
            new = preds[0]
            for p in preds[1:]:
                new = intersect(new, p)
            if idom.get(n) != new:
                idom[n] = new
                changed = True

    path = [sink]
    node = idom.get(sink)
    while node is not None:
        path.append(node)
        node = idom.get(node)
    path.reverse()
    return DominatorInfo(idom=idom, dom_path=tuple(path))


def dominators(g: CompGraph) -> DominatorInfo:
    return compute_idoms(SOURCE, SINK, g.successors, g.predecessors)


# ---------------------------------------------------------------------------
# Export


def to_dot(g: CompGraph, name: str = "compgraph") -> str:
    """Render the DAG in Graphviz text form for inspection."""
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    for n in g.nodes:
        if n in (SOURCE, SINK):
            lines.append(f'  "{n}" [shape=point];')
        else:
            label = g.trace.operator(n).op_name
            lines.append(f'  "{n}" [label="{n}\\n{label}" shape=box];')
    for tid in sorted(g.edges):
        e = g.edges[tid]
        for c in e.consumers:
            lines.append(f'  "{e.producer}" -> "{c}" [label="{tid}"];')
    lines.append("}")
    return "\n".join(lines)
