"""Root-cause diagnosis: deviation points in kernel launch backtraces, key
control variables from basic-block traces, and backward dataflow to the
ultimate configuration or argument source.

Whole-trace diffing drowns in irrelevant framework noise; everything here
works only from the call paths that launched GPU kernels inside a wasteful
segment pair, plus the recorded block traces of the function where those
paths diverge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional, Sequence

from . import energy
from .trace_model import DefUseEdge, KernelEvent, ProgramModel, Trace

IDENTICAL = "identical"
IDENTICAL_DEPTH_MISMATCH = "identical (depth mismatch)"


class DiagnoseError(Exception):
    pass


class DisjointCallPathsError(DiagnoseError):
    """Backtraces share no common frame; the kernels come from unrelated APIs."""


class NoDivergenceError(DiagnoseError):
    """Block traces are identical; the deviation must be deeper."""


class IncompleteModelError(DiagnoseError):
    """The program model lacks a control record where one is needed."""


@dataclass(frozen=True)
class DeviationPoint:
    index: int  # first differing frame
    func: str  # last common function before the deviation
    frame_a: str
    frame_b: str


def find_deviation(path_a: Sequence[str], path_b: Sequence[str]):
    """First index where two kernel backtraces differ.

    Returns a DeviationPoint, or "identical" when the paths agree (a proper
    prefix counts as identical but is flagged as a depth mismatch). Divergence
    at index 0 means the call paths share nothing and is raised as
    DisjointCallPathsError (routed to api-misuse handling by callers).
    """
    if not path_a or not path_b:
        raise DiagnoseError("backtraces must be non-empty")
    for i in range(min(len(path_a), len(path_b))):
        if path_a[i] != path_b[i]:
            if i == 0:
                raise DisjointCallPathsError(
                    f"disjoint call paths: {path_a[0]!r} vs {path_b[0]!r}"
                )
            return DeviationPoint(
                index=i, func=path_a[i - 1], frame_a=path_a[i], frame_b=path_b[i]
            )
    if len(path_a) != len(path_b):
        return IDENTICAL_DEPTH_MISMATCH
    return IDENTICAL


def find_key_var(
    func: str,
    model: ProgramModel,
    blocktrace_a: Sequence[str],
    blocktrace_b: Sequence[str],
) -> tuple[str, str]:
    """Key variable read by the control construct where block traces diverge.

    Returns (variable, control kind). The last block the two executions share
    must carry a control record (branch / switch / indirect).
    """
    if func not in model.functions:
        raise DiagnoseError(f"function {func!r} not in the program model")
    div = None
    for i in range(min(len(blocktrace_a), len(blocktrace_b))):
        if blocktrace_a[i] != blocktrace_b[i]:
            div = i
            break
    if div is None:
        if len(blocktrace_a) == len(blocktrace_b):
            raise NoDivergenceError(f"no divergence in {func!r}")
        div = min(len(blocktrace_a), len(blocktrace_b))
    if div == 0:
        raise DiagnoseError(f"block traces for {func!r} diverge at entry")
    last_common = blocktrace_a[div - 1]
    if last_common not in model.block_control:
        raise IncompleteModelError(
            f"block {last_common!r} has no control record in the program model"
        )
    kind, var = model.block_control[last_common]
    return var, kind


@dataclass(frozen=True)
class DataflowChain:
    edges: tuple[DefUseEdge, ...]  # walked backward from the key variable
    source: str  # config:<name> or arg:<name>

    def variables(self) -> tuple[str, ...]:
        return tuple(e.var for e in self.edges)


def backward_dataflow(key: str, model: ProgramModel) -> tuple[DataflowChain, ...]:
    """Walk def_use edges backward from ``key`` to every reachable source.

    At fan-in all sources are reported, shortest chain first (ties broken by
    source name for determinism).
    """
    defining = {e.var: [] for e in model.def_use}
    for e in model.def_use:
        defining[e.var].append(e)
    if key not in defining:
        raise DiagnoseError(f"dangling variable {key!r}: no def_use edge defines it")

    chains: list[DataflowChain] = []

    def walk(var: str, prefix: list[DefUseEdge]) -> None:
        for edge in defining.get(var, ()):
            path = prefix + [edge]
            if edge.source in {e.var for e in path[:-1]} or edge.source == key:
                raise DiagnoseError(f"cycle in def_use at {edge.source!r}")
            if edge.source in defining:
                walk(edge.source, path)
            else:
                chains.append(DataflowChain(edges=tuple(path), source=edge.source))

    walk(key, [])
    chains.sort(key=lambda c: (len(c.edges), c.source))
    return tuple(chains)


# ---------------------------------------------------------------------------
# Segment-level diagnosis


@dataclass(frozen=True)
class Diagnosis:
    """Full root-cause chain for a misconfiguration-style divergence."""

    deviation: DeviationPoint
    key_variable: str
    control_kind: str
    chains: tuple[DataflowChain, ...]
    source: str
    kernel_a: str
    kernel_b: str
    kind: str = "misconfiguration"


@dataclass(frozen=True)
class ParameterDelta:
    kernel_a: str
    kernel_b: str
    deltas: tuple[tuple[str, Any, Any], ...]  # (param, value_a, value_b)
    chains: tuple[DataflowChain, ...]
    sources: tuple[str, ...]
    kind: str = "parameter_delta"


@dataclass(frozen=True)
class ApiMisuseExplanation:
    kernels_a: tuple[str, ...]  # substitutable kernel-name multiset, side A
    kernels_b: tuple[str, ...]
    kind: str = "api_misuse"


@dataclass(frozen=True)
class RedundantExplanation:
    side: str  # which trace carries the extra kernels
    extra_kernels: tuple[tuple[str, str, float], ...]  # (kernel_id, name, joules)
    forced_gap_joules: float
    kind: str = "redundant"


@dataclass(frozen=True)
class DiagnosisReport:
    primary_kind: str  # misconfiguration | api_misuse | redundant | unknown
    diagnosis: Optional[Diagnosis]
    details: tuple[Any, ...]

    @property
    def source(self) -> Optional[str]:
        return self.diagnosis.source if self.diagnosis else None


def _segment_kernels(trace: Trace, op_ids: Sequence[str]) -> list[KernelEvent]:
    ops = sorted((trace.operator(o) for o in op_ids), key=lambda o: (o.start, o.op_id))
    kernels = [trace.kernels[kid] for op in ops for kid in op.kernel_ids]
    kernels.sort(key=lambda k: (k.start, k.kernel_id))
    return kernels


def _lcs_alignment(names_a: Sequence[str], names_b: Sequence[str]) -> list[tuple[int, int]]:
    """Longest common subsequence on kernel names; anchors as index pairs."""
    n, m = len(names_a), len(names_b)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if names_a[i] == names_b[j]:
                dp[i][j] = 1 + dp[i + 1][j + 1]
            else:
                dp[i][j] = max(dp[i + 1][j], dp[i][j + 1])
    anchors = []
    i = j = 0
    while i < n and j < m:
        if names_a[i] == names_b[j]:
            anchors.append((i, j))
            i += 1
            j += 1
        elif dp[i + 1][j] >= dp[i][j + 1]:
            i += 1
        else:
            j += 1
    return anchors


def _param_deltas(ka: KernelEvent, kb: KernelEvent) -> list[tuple[str, Any, Any]]:
    keys = sorted(set(ka.params) | set(kb.params))
    return [
        (k, ka.params.get(k), kb.params.get(k))
        for k in keys
        if ka.params.get(k) != kb.params.get(k)
    ]


def _common_prefix_len(a: Sequence[str], b: Sequence[str]) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def _pair_substitutions(
    unmatched_a: list[KernelEvent], unmatched_b: list[KernelEvent]
) -> tuple[list[tuple[KernelEvent, KernelEvent]], list[KernelEvent], list[KernelEvent]]:
    """Pair unmatched kernels across sides by launch context.

    Greedy on the longest common backtrace prefix (ties broken by position);
    kernels sharing no frame are never paired. Deterministic.
    """
    scored = []
    for i, ka in enumerate(unmatched_a):
        for j, kb in enumerate(unmatched_b):
            prefix = _common_prefix_len(ka.backtrace, kb.backtrace)
            if prefix >= 1:
                scored.append((-prefix, i, j))
    scored.sort()
    used_a: set[int] = set()
    used_b: set[int] = set()
    pairs: list[tuple[KernelEvent, KernelEvent]] = []
    for _, i, j in scored:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((unmatched_a[i], unmatched_b[j]))
    left_a = [k for i, k in enumerate(unmatched_a) if i not in used_a]
    left_b = [k for j, k in enumerate(unmatched_b) if j not in used_b]
    return pairs, left_a, left_b


def analyze_segment_pair(
    nodes_a: Sequence[str],
    nodes_b: Sequence[str],
    trace_a: Trace,
    trace_b: Trace,
) -> DiagnosisReport:
    """Align the two segments' kernel sequences and explain each mismatch.

    Kernels matched by name (longest common subsequence) need no explanation.
    The rest are paired by launch context and pushed through the deviation
    pipeline; pairs it cannot resolve become the substitutable kernel multisets
    of an api-misuse explanation, and kernels left over on one side only are
    reported as redundant extras with their energy.
    """
    kernels_a = _segment_kernels(trace_a, nodes_a)
    kernels_b = _segment_kernels(trace_b, nodes_b)
    if not kernels_a and not kernels_b:
        raise DiagnoseError("segment pair has no kernels")
    names_a = [k.kernel_name for k in kernels_a]
    names_b = [k.kernel_name for k in kernels_b]
    anchors = _lcs_alignment(names_a, names_b)
    matched_a = {i for i, _ in anchors}
    matched_b = {j for _, j in anchors}
    unmatched_a = [k for i, k in enumerate(kernels_a) if i not in matched_a]
    unmatched_b = [k for j, k in enumerate(kernels_b) if j not in matched_b]

    substitutions, left_a, left_b = _pair_substitutions(unmatched_a, unmatched_b)

    details: list[Any] = []
    diagnosis: Optional[Diagnosis] = None
    unexplained_a: list[KernelEvent] = list(left_a)
    unexplained_b: list[KernelEvent] = list(left_b)

    for ka, kb in substitutions:
        try:
            dev = find_deviation(ka.backtrace, kb.backtrace)
        except DisjointCallPathsError:
            unexplained_a.append(ka)
            unexplained_b.append(kb)
            continue
        if isinstance(dev, str):
            deltas = _param_deltas(ka, kb)
            if deltas:
                details.append(_trace_param_delta(ka, kb, deltas, trace_a, trace_b))
            else:
                unexplained_a.append(ka)
                unexplained_b.append(kb)
            continue
        resolved = _resolve_deviation(dev, ka, kb, trace_a, trace_b)
        if isinstance(resolved, Diagnosis):
            details.append(resolved)
            if diagnosis is None:
                diagnosis = resolved
        else:
            unexplained_a.append(ka)
            unexplained_b.append(kb)

    if unexplained_a and unexplained_b:
        details.append(
            ApiMisuseExplanation(
                kernels_a=tuple(sorted(k.kernel_name for k in unexplained_a)),
                kernels_b=tuple(sorted(k.kernel_name for k in unexplained_b)),
            )
        )
    elif unexplained_a or unexplained_b:
        side = "A" if unexplained_a else "B"
        extras = unexplained_a or unexplained_b
        trace = trace_a if unexplained_a else trace_b
        truth = energy.ground_truth_signal(trace)
        listed = tuple(
            (k.kernel_id, k.kernel_name, energy.integrate(truth, (k.start, k.end)))
            for k in extras
        )
        forced = forced_gap_joules(trace, _owner_ops(trace, extras))
        details.append(
            RedundantExplanation(side=side, extra_kernels=listed, forced_gap_joules=forced)
        )

    primary = _primary_kind(diagnosis, details)
    return DiagnosisReport(primary_kind=primary, diagnosis=diagnosis, details=tuple(details))


def _owner_ops(trace: Trace, kernels: Sequence[KernelEvent]) -> list[str]:
    owners: list[str] = []
    for k in kernels:
        op = trace.owner_op(k.kernel_id)
        if op.op_id not in owners:
            owners.append(op.op_id)
    return owners


def idle_baseline_watts(trace: Trace) -> float:
    cfg = trace.config.get("idle_watts")
    if isinstance(cfg, (int, float)):
        return float(cfg)
    return min((s.watts for s in trace.power), default=0.0)


def forced_gap_joules(trace: Trace, op_ids: Sequence[str]) -> float:
    """Energy above the idle baseline in intra-operator gaps (non-idle waits)."""
    truth = energy.ground_truth_signal(trace)
    idle = idle_baseline_watts(trace)
    total = 0.0
    for op_id in op_ids:
        op = trace.operator(op_id)
        busy = sorted((trace.kernels[k].start, trace.kernels[k].end) for k in op.kernel_ids)
        cursor = op.start
        for s, e in busy + [(op.end, op.end)]:
            if s > cursor:
                joules = energy.integrate(truth, (cursor, s))
                baseline = idle * (s - cursor) / energy.US_PER_S
                total += max(joules - baseline * 1.000001, 0.0)
            cursor = max(cursor, e)
    return total


def _resolve_deviation(
    dev: DeviationPoint, ka: KernelEvent, kb: KernelEvent, trace_a: Trace, trace_b: Trace
):
    bt_a = trace_a.blocktrace_for(dev.func)
    bt_b = trace_b.blocktrace_for(dev.func)
    if bt_a is None or bt_b is None or trace_a.progmodel is None:
        return None  # divergence observed but uninstrumented: cannot confirm a config cause
    try:
        key, kind = find_key_var(dev.func, trace_a.progmodel, bt_a.blocks, bt_b.blocks)
        chains = backward_dataflow(key, trace_a.progmodel)
    except DiagnoseError:
        return None
    return Diagnosis(
        deviation=dev,
        key_variable=key,
        control_kind=kind,
        chains=chains,
        source=chains[0].source,
        kernel_a=ka.kernel_id,
        kernel_b=kb.kernel_id,
    )


def _trace_param_delta(
    ka: KernelEvent, kb: KernelEvent, deltas, trace_a: Trace, trace_b: Trace
) -> ParameterDelta:
    chains: list[DataflowChain] = []
    model = trace_a.progmodel or trace_b.progmodel
    if model is not None:
        defined = {e.var for e in model.def_use}
        for name, _, _ in deltas:
            if name in defined:
                chains.extend(backward_dataflow(name, model))
    return ParameterDelta(
        kernel_a=ka.kernel_id,
        kernel_b=kb.kernel_id,
        deltas=tuple(deltas),
        chains=tuple(chains),
        sources=tuple(sorted({c.source for c in chains})),
    )


def _primary_kind(diagnosis: Optional[Diagnosis], details: Sequence[Any]) -> str:
    if diagnosis is not None:
        return "misconfiguration"
    if any(isinstance(d, ApiMisuseExplanation) for d in details):
        return "api_misuse"
    if any(isinstance(d, RedundantExplanation) for d in details):
        return "redundant"
    params = [d for d in details if isinstance(d, ParameterDelta)]
    if params:
        return "misconfiguration" if any(p.sources for p in params) else "unknown"
    return "unknown"


def diagnose_finding(finding, trace_a: Trace, trace_b: Trace) -> DiagnosisReport:
    """Diagnose a waste finding down to its root cause.

    ``finding`` must carry the segment pair (``pair.nodes_a`` / ``pair.nodes_b``)
    and have a waste verdict.
    """
    if getattr(finding, "verdict", "waste") != "waste":
        raise DiagnoseError("only waste findings are diagnosed")
    return analyze_segment_pair(finding.pair.nodes_a, finding.pair.nodes_b, trace_a, trace_b)
