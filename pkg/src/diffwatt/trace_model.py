"""Trace data model: record types, file loading/validation, serialization.

A trace file is line-delimited JSON, one record per line, each carrying a
``type`` discriminator. The header must be the first line. Timestamps are
integer microseconds; power is watts; tensor values are stored as decimal
text with 9 significant digits.

Record kinds::

    {"type":"header","schema_version":1,"system":...,"workload":...,"seed":...}
    {"type":"config","key":...,"value":...}
    {"type":"progmodel","functions":{...},"block_control":{...},"def_use":[...]}
    {"type":"tensor","tensor_id":...,"run":0,"shape":[...],"values":[...]}
    {"type":"op","op_id":...,"op_name":...,"input_tensor_ids":[...],
     "output_tensor_ids":[...],"kernel_ids":[...],"start":...,"end":...}
    {"type":"kernel","kernel_id":...,"kernel_name":...,"correlation_id":...,
     "start":...,"end":...,"backtrace":[...],"params":{...}?}
    {"type":"power","timestamp":...,"watts":...}
    {"type":"blocktrace","func":...,"run_index":...,"blocks":[...]}

Tensor records may repeat per ``run`` (recorded input batch); the run count
must be uniform across all tensors in a trace. Operator/kernel/power records
describe the run-0 execution timeline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

SCHEMA_VERSION = 1

CONFIG_SOURCE_PREFIX = "config:"
ARG_SOURCE_PREFIX = "arg:"


class TraceError(Exception):
    """Base class for trace loading/validation failures."""


class ParseError(TraceError):
    """Malformed record; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class TraceReferenceError(TraceError):
    """A record references an id that does not exist in the trace."""


class VersionError(TraceError):
    """Unsupported schema version."""


class PairingError(TraceError):
    """Two traces cannot be meaningfully compared."""


def _round9(x: float) -> float:
    """Round to 9 significant decimal digits (the on-disk precision)."""
    return float(f"{float(x):.9g}")


@dataclass(frozen=True)
class TensorSnapshot:
    """Recorded multi-dimensional value of a tensor edge for one input run."""

    tensor_id: str
    shape: tuple[int, ...]
    values: tuple[float, ...]

    def element_count(self) -> int:
        return math.prod(self.shape)

    def validate(self) -> None:
        if not self.shape:
            raise TraceError(f"tensor {self.tensor_id!r}: empty shape")
        if any((not isinstance(n, int)) or n < 1 for n in self.shape):
            raise TraceError(f"tensor {self.tensor_id!r}: dimensions must be >= 1")
        if len(self.values) != self.element_count():
            raise TraceError(
                f"tensor {self.tensor_id!r}: {len(self.values)} values for shape {list(self.shape)}"
            )
        if not all(math.isfinite(v) for v in self.values):
            raise TraceError(f"tensor {self.tensor_id!r}: non-finite values")


@dataclass(frozen=True)
class OperatorEvent:
    op_id: str
    op_name: str
    input_tensor_ids: tuple[str, ...]
    output_tensor_ids: tuple[str, ...]
    kernel_ids: tuple[str, ...]
    start: int
    end: int

    def validate(self) -> None:
        if self.end < self.start:
            raise TraceError(f"op {self.op_id!r}: end < start")


@dataclass(frozen=True)
class KernelEvent:
    kernel_id: str
    kernel_name: str
    correlation_id: int
    start: int
    end: int
    backtrace: tuple[str, ...]
    params: Mapping[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        if self.end <= self.start:
            raise TraceError(f"kernel {self.kernel_id!r}: end must be > start")
        if not self.backtrace:
            raise TraceError(f"kernel {self.kernel_id!r}: empty backtrace")

    def duration_us(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class PowerSample:
    timestamp: int
    watts: float

    def validate(self) -> None:
        if self.watts < 0:
            raise TraceError(f"power sample at {self.timestamp}: negative watts")


@dataclass(frozen=True)
class DefUseEdge:
    """``var`` is defined from ``source`` at ``site``; a backward-walk step."""

    var: str
    source: str
    site: str


def is_ultimate_source(name: str) -> bool:
    return name.startswith(CONFIG_SOURCE_PREFIX) or name.startswith(ARG_SOURCE_PREFIX)


@dataclass(frozen=True)
class ProgramModel:
    """Desk-scale stand-in for binary instrumentation of the host program.

    ``functions`` maps a function name to its basic-block ids. ``block_control``
    maps a block id to the control construct terminating it (branch / switch /
    indirect) and the variable that construct reads. ``def_use`` holds backward
    dataflow edges terminating at ``config:<name>`` / ``arg:<name>`` sources.
    """

    functions: Mapping[str, tuple[str, ...]]
    block_control: Mapping[str, tuple[str, str]]  # block -> (kind, variable)
    def_use: tuple[DefUseEdge, ...]

    _CONTROL_KINDS = ("branch", "switch", "indirect")

    def validate(self) -> None:
        blocks = {b for blist in self.functions.values() for b in blist}
        defined_vars = {e.var for e in self.def_use}
        mentioned = defined_vars | {e.source for e in self.def_use}
        for block, (kind, var) in self.block_control.items():
            if block not in blocks:
                raise TraceError(f"progmodel: control block {block!r} not in any function")
            if kind not in self._CONTROL_KINDS:
                raise TraceError(f"progmodel: unknown control kind {kind!r}")
            if var not in mentioned:
                raise TraceError(f"progmodel: control variable {var!r} missing from def_use")
        # Every undefined node must be a tagged ultimate source.
        for node in mentioned - defined_vars:
            if not is_ultimate_source(node):
                raise TraceError(f"progmodel: dangling def_use node {node!r}")
        self._check_acyclic()
        self._check_sources_reachable()

    def _check_acyclic(self) -> None:
        out: dict[str, list[str]] = {}
        for e in self.def_use:
            out.setdefault(e.var, []).append(e.source)
        state: dict[str, int] = {}

        def visit(node: str) -> None:
            state[node] = 1
            for nxt in out.get(node, ()):
                s = state.get(nxt, 0)
                if s == 1:
                    raise TraceError(f"progmodel: def_use cycle through {node!r}")
                if s == 0:
                    visit(nxt)
            state[node] = 2

        for v in list(out):
            if state.get(v, 0) == 0:
                visit(v)

    def _check_sources_reachable(self) -> None:
        reachable: set[str] = set()
        frontier = [var for _, var in self.block_control.values()]
        out: dict[str, list[str]] = {}
        for e in self.def_use:
            out.setdefault(e.var, []).append(e.source)
        while frontier:
            node = frontier.pop()
            if node in reachable:
                continue
            reachable.add(node)
            frontier.extend(out.get(node, ()))
        for e in self.def_use:
            if is_ultimate_source(e.source) and e.source not in reachable:
                raise TraceError(
                    f"progmodel: source {e.source!r} unreachable from any control variable"
                )

    def edges_defining(self, var: str) -> list[DefUseEdge]:
        return [e for e in self.def_use if e.var == var]


@dataclass(frozen=True)
class BlockTraceRecord:
    func: str
    run_index: int
    blocks: tuple[str, ...]


@dataclass(frozen=True)
class TraceHeader:
    schema_version: int
    system: str
    workload: str
    seed: int


@dataclass(frozen=True)
class Trace:
    """A fully cross-validated trace. Immutable; safe to share read-only."""

    header: TraceHeader
    tensors: Mapping[str, tuple[TensorSnapshot, ...]]  # tensor_id -> snapshot per run
    operators: tuple[OperatorEvent, ...]
    kernels: Mapping[str, KernelEvent]
    power: tuple[PowerSample, ...]
    blocktraces: tuple[BlockTraceRecord, ...]
    progmodel: Optional[ProgramModel]
    config: Mapping[str, Any]

    @property
    def run_count(self) -> int:
        if not self.tensors:
            return 0
        return len(next(iter(self.tensors.values())))

    def snapshot(self, tensor_id: str, run: int = 0) -> TensorSnapshot:
        return self.tensors[tensor_id][run]

    def operator(self, op_id: str) -> OperatorEvent:
        for op in self.operators:
            if op.op_id == op_id:
                return op
        raise KeyError(op_id)

    def owner_op(self, kernel_id: str) -> OperatorEvent:
        for op in self.operators:
            if kernel_id in op.kernel_ids:
                return op
        raise KeyError(kernel_id)

    def blocktrace_for(self, func: str, run_index: int = 0) -> Optional[BlockTraceRecord]:
        for bt in self.blocktraces:
            if bt.func == func and bt.run_index == run_index:
                return bt
        return None

    def produced_tensors(self) -> set[str]:
        return {t for op in self.operators for t in op.output_tensor_ids}

    def consumed_tensors(self) -> set[str]:
        return {t for op in self.operators for t in op.input_tensor_ids}

    def model_input_ids(self) -> list[str]:
        """Tensors consumed by operators but produced by none (graph sources)."""
        produced = self.produced_tensors()
        seen: list[str] = []
        for op in self.operators:
            for t in op.input_tensor_ids:
                if t not in produced and t not in seen:
                    seen.append(t)
        return seen

    def model_output_ids(self) -> list[str]:
        """Tensors produced by operators but consumed by none (graph sinks)."""
        consumed = self.consumed_tensors()
        out: list[str] = []
        for op in self.operators:
            for t in op.output_tensor_ids:
                if t not in consumed and t not in out:
                    out.append(t)
        return out

    def span_us(self) -> tuple[int, int]:
        """Time span covered by the trace (operators, kernels, power records)."""
        points = [s.timestamp for s in self.power]
        points += [op.start for op in self.operators] + [op.end for op in self.operators]
        points += [k.start for k in self.kernels.values()] + [k.end for k in self.kernels.values()]
        if not points:
            return (0, 0)
        return (min(points), max(points))


# ---------------------------------------------------------------------------
# Parsing


def _req(rec: dict, key: str, line_no: int) -> Any:
    if key not in rec:
        raise ParseError(line_no, f"missing field {key!r} in {rec.get('type')!r} record")
    return rec[key]


def _int_field(rec: dict, key: str, line_no: int) -> int:
    v = _req(rec, key, line_no)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(line_no, f"field {key!r} must be an integer")
    return v


def _str_list(rec: dict, key: str, line_no: int) -> tuple[str, ...]:
    v = _req(rec, key, line_no)
    if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
        raise ParseError(line_no, f"field {key!r} must be a list of strings")
    return tuple(v)


def load_trace(path: str) -> Trace:
    """Load and fully validate a trace file; rejects on the first violation."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    return parse_trace_lines(lines)


def parse_trace_lines(lines: Sequence[str]) -> Trace:
    header: Optional[TraceHeader] = None
    tensors: dict[str, dict[int, TensorSnapshot]] = {}
    operators: list[OperatorEvent] = []
    kernels: dict[str, KernelEvent] = {}
    power: list[PowerSample] = []
    blocktraces: list[BlockTraceRecord] = []
    progmodel: Optional[ProgramModel] = None
    config: dict[str, Any] = {}

    for line_no, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, f"invalid JSON: {exc.msg}") from exc
        if not isinstance(rec, dict) or "type" not in rec:
            raise ParseError(line_no, "record must be an object with a 'type' field")
        kind = rec["type"]

        if header is None:
            if kind != "header":
                raise ParseError(line_no, "first record must be the header")
            version = _int_field(rec, "schema_version", line_no)
            if version != SCHEMA_VERSION:
                raise VersionError(f"unsupported schema version {version}")
            header = TraceHeader(
                schema_version=version,
                system=str(_req(rec, "system", line_no)),
                workload=str(_req(rec, "workload", line_no)),
                seed=_int_field(rec, "seed", line_no),
            )
            continue

        if kind == "header":
            raise ParseError(line_no, "duplicate header record")
        elif kind == "tensor":
            tid = str(_req(rec, "tensor_id", line_no))
            run = int(rec.get("run", 0))
            shape = _req(rec, "shape", line_no)
            values = _req(rec, "values", line_no)
            if not isinstance(shape, list) or not isinstance(values, list):
                raise ParseError(line_no, "tensor shape/values must be lists")
            snap = TensorSnapshot(
                tensor_id=tid,
                shape=tuple(shape),
                values=tuple(float(v) for v in values),
            )
            try:
                snap.validate()
            except TraceError as exc:
                raise ParseError(line_no, str(exc)) from exc
            per_run = tensors.setdefault(tid, {})
            if run in per_run:
                raise ParseError(line_no, f"duplicate tensor {tid!r} for run {run}")
            per_run[run] = snap
        elif kind == "op":
            op = OperatorEvent(
                op_id=str(_req(rec, "op_id", line_no)),
                op_name=str(_req(rec, "op_name", line_no)),
                input_tensor_ids=_str_list(rec, "input_tensor_ids", line_no),
                output_tensor_ids=_str_list(rec, "output_tensor_ids", line_no),
                kernel_ids=_str_list(rec, "kernel_ids", line_no),
                start=_int_field(rec, "start", line_no),
                end=_int_field(rec, "end", line_no),
            )
            try:
                op.validate()
            except TraceError as exc:
                raise ParseError(line_no, str(exc)) from exc
            if any(op.op_id == o.op_id for o in operators):
                raise ParseError(line_no, f"duplicate op_id {op.op_id!r}")
            operators.append(op)
        elif kind == "kernel":
            kev = KernelEvent(
                kernel_id=str(_req(rec, "kernel_id", line_no)),
                kernel_name=str(_req(rec, "kernel_name", line_no)),
                correlation_id=_int_field(rec, "correlation_id", line_no),
                start=_int_field(rec, "start", line_no),
                end=_int_field(rec, "end", line_no),
                backtrace=_str_list(rec, "backtrace", line_no),
                params=dict(rec.get("params", {})),
            )
            try:
                kev.validate()
            except TraceError as exc:
                raise ParseError(line_no, str(exc)) from exc
            if kev.kernel_id in kernels:
                raise ParseError(line_no, f"duplicate kernel_id {kev.kernel_id!r}")
            kernels[kev.kernel_id] = kev
        elif kind == "power":
            sample = PowerSample(
                timestamp=_int_field(rec, "timestamp", line_no),
                watts=float(_req(rec, "watts", line_no)),
            )
            try:
                sample.validate()
            except TraceError as exc:
                raise ParseError(line_no, str(exc)) from exc
            power.append(sample)
        elif kind == "blocktrace":
            blocktraces.append(
                BlockTraceRecord(
                    func=str(_req(rec, "func", line_no)),
                    run_index=_int_field(rec, "run_index", line_no),
                    blocks=_str_list(rec, "blocks", line_no),
                )
            )
        elif kind == "progmodel":
            if progmodel is not None:
                raise ParseError(line_no, "duplicate progmodel record")
            functions = {
                str(f): tuple(str(b) for b in blocks)
                for f, blocks in _req(rec, "functions", line_no).items()
            }
            block_control = {
                str(b): (str(c["kind"]), str(c["var"]))
                for b, c in _req(rec, "block_control", line_no).items()
            }
            def_use = tuple(
                DefUseEdge(var=str(e["var"]), source=str(e["from"]), site=str(e["site"]))
                for e in _req(rec, "def_use", line_no)
            )
            progmodel = ProgramModel(functions=functions, block_control=block_control, def_use=def_use)
        elif kind == "config":
            config[str(_req(rec, "key", line_no))] = rec.get("value")
        else:
            raise ParseError(line_no, f"unknown record type {kind!r}")

    if header is None:
        raise ParseError(1, "empty trace: missing header")

    trace = Trace(
        header=header,
        tensors=_normalize_runs(tensors),
        operators=tuple(operators),
        kernels=kernels,
        power=tuple(power),
        blocktraces=tuple(blocktraces),
        progmodel=progmodel,
        config=config,
    )
    _cross_validate(trace)
    return trace


def _normalize_runs(tensors: dict[str, dict[int, TensorSnapshot]]) -> dict[str, tuple[TensorSnapshot, ...]]:
    if not tensors:
        return {}
    counts = {tid: sorted(runs) for tid, runs in tensors.items()}
    expected = sorted(next(iter(counts.values())))
    if expected != list(range(len(expected))):
        tid = next(iter(counts))
        raise TraceError(f"tensor {tid!r}: run indices must be contiguous from 0")
    for tid, runs in counts.items():
        if runs != expected:
            raise TraceError(
                f"tensor {tid!r}: run count {len(runs)} differs from trace run count {len(expected)}"
            )
    return {tid: tuple(runs[r] for r in range(len(expected))) for tid, runs in tensors.items()}


def _cross_validate(trace: Trace) -> None:
    kernel_owner: dict[str, str] = {}
    for op in trace.operators:
        for tid in op.input_tensor_ids + op.output_tensor_ids:
            if tid not in trace.tensors:
                raise TraceReferenceError(f"op {op.op_id!r} references missing tensor {tid!r}")
        for tid in op.output_tensor_ids:
            if tid in op.input_tensor_ids:
                raise TraceError(
                    f"op {op.op_id!r}: tensor {tid!r} appears as both input and output "
                    "(in-place operators must record distinct tensor ids)"
                )
        for kid in op.kernel_ids:
            if kid not in trace.kernels:
                raise TraceReferenceError(f"op {op.op_id!r} references missing kernel {kid!r}")
            if kid in kernel_owner:
                raise TraceError(f"kernel {kid!r} launched by both {kernel_owner[kid]!r} and {op.op_id!r}")
            kernel_owner[kid] = op.op_id
            k = trace.kernels[kid]
            if k.start < op.start or k.end > op.end:
                raise TraceError(f"kernel {kid!r} interval outside its operator {op.op_id!r}")

    for kid in trace.kernels:
        if kid not in kernel_owner:
            raise TraceReferenceError(f"kernel {kid!r} is not launched by any operator")
    corr_ids = [k.correlation_id for k in trace.kernels.values()]
    if len(corr_ids) != len(set(corr_ids)):
        raise TraceError("correlation_id values must be unique per launch")

    # One producer per tensor, and operators must be topologically orderable.
    producer: dict[str, str] = {}
    for op in trace.operators:
        for tid in op.output_tensor_ids:
            if tid in producer:
                raise TraceError(f"tensor {tid!r} produced by both {producer[tid]!r} and {op.op_id!r}")
            producer[tid] = op.op_id
    _check_topological(trace.operators, producer)

    for s_prev, s_next in zip(trace.power, trace.power[1:]):
        if s_next.timestamp <= s_prev.timestamp:
            raise TraceError("power samples must be strictly increasing in timestamp")

    if trace.blocktraces:
        if trace.progmodel is None:
            raise TraceReferenceError("blocktrace records present but no progmodel record")
        for bt in trace.blocktraces:
            if bt.func not in trace.progmodel.functions:
                raise TraceReferenceError(f"blocktrace references unknown function {bt.func!r}")
            known = set(trace.progmodel.functions[bt.func])
            for b in bt.blocks:
                if b not in known:
                    raise TraceReferenceError(f"blocktrace for {bt.func!r}: unknown block {b!r}")
    if trace.progmodel is not None:
        trace.progmodel.validate()


def _check_topological(operators: Sequence[OperatorEvent], producer: Mapping[str, str]) -> None:
    indeg = {op.op_id: 0 for op in operators}
    consumers: dict[str, list[str]] = {op.op_id: [] for op in operators}
    for op in operators:
        for tid in op.input_tensor_ids:
            src = producer.get(tid)
            if src is not None:
                consumers[src].append(op.op_id)
                indeg[op.op_id] += 1
    ready = [oid for oid, d in indeg.items() if d == 0]
    seen = 0
    while ready:
        oid = ready.pop()
        seen += 1
        for nxt in consumers[oid]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
    if seen != len(operators):
        raise TraceError("operator graph contains a cycle")


# ---------------------------------------------------------------------------
# Serialization


def _dump(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"))


def trace_to_lines(trace: Trace) -> list[str]:
    """Canonical re-emission: fixed record order, fixed key order, 9-digit floats."""
    lines = [
        _dump(
            {
                "type": "header",
                "schema_version": trace.header.schema_version,
                "system": trace.header.system,
                "workload": trace.header.workload,
                "seed": trace.header.seed,
            }
        )
    ]
    for key in sorted(trace.config):
        lines.append(_dump({"type": "config", "key": key, "value": trace.config[key]}))
    if trace.progmodel is not None:
        pm = trace.progmodel
        lines.append(
            _dump(
                {
                    "type": "progmodel",
                    "functions": {f: list(bs) for f, bs in sorted(pm.functions.items())},
                    "block_control": {
                        b: {"kind": kind, "var": var}
                        for b, (kind, var) in sorted(pm.block_control.items())
                    },
                    "def_use": [
                        {"var": e.var, "from": e.source, "site": e.site} for e in pm.def_use
                    ],
                }
            )
        )
    for tid in sorted(trace.tensors):
        for run, snap in enumerate(trace.tensors[tid]):
            lines.append(
                _dump(
                    {
                        "type": "tensor",
                        "tensor_id": tid,
                        "run": run,
                        "shape": list(snap.shape),
                        "values": [_round9(v) for v in snap.values],
                    }
                )
            )
    for op in sorted(trace.operators, key=lambda o: (o.start, o.op_id)):
        lines.append(
            _dump(
                {
                    "type": "op",
                    "op_id": op.op_id,
                    "op_name": op.op_name,
                    "input_tensor_ids": list(op.input_tensor_ids),
                    "output_tensor_ids": list(op.output_tensor_ids),
                    "kernel_ids": list(op.kernel_ids),
                    "start": op.start,
                    "end": op.end,
                }
            )
        )
    for kid in sorted(trace.kernels, key=lambda k: (trace.kernels[k].start, k)):
        k = trace.kernels[kid]
        rec = {
            "type": "kernel",
            "kernel_id": k.kernel_id,
            "kernel_name": k.kernel_name,
            "correlation_id": k.correlation_id,
            "start": k.start,
            "end": k.end,
            "backtrace": list(k.backtrace),
        }
        if k.params:
            rec["params"] = {key: k.params[key] for key in sorted(k.params)}
        lines.append(_dump(rec))
    for sample in trace.power:
        lines.append(
            _dump({"type": "power", "timestamp": sample.timestamp, "watts": _round9(sample.watts)})
        )
    for bt in sorted(trace.blocktraces, key=lambda b: (b.func, b.run_index)):
        lines.append(
            _dump(
                {
                    "type": "blocktrace",
                    "func": bt.func,
                    "run_index": bt.run_index,
                    "blocks": list(bt.blocks),
                }
            )
        )
    return lines


def save_trace(trace: Trace, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(trace_to_lines(trace)))
        fh.write("\n")


# ---------------------------------------------------------------------------
# Pairing


@dataclass(frozen=True)
class PairingReport:
    workload: str
    runs: int
    input_pairs: tuple[tuple[str, str, float], ...]  # (tensor_a, tensor_b, score)
    output_pairs: tuple[tuple[str, str, float], ...]  # (tensor_a, tensor_b, rel diff)
    max_output_rel_diff: float

    @property
    def ok(self) -> bool:
        return True


def elementwise_rel_diff(a: TensorSnapshot, b: TensorSnapshot, floor: float = 1e-30) -> float:
    """Max |b_i - a_i| / |a_i| over elements, with an absolute floor on the denominator."""
    if a.shape != b.shape:
        raise ValueError("elementwise comparison requires identical shapes")
    worst = 0.0
    for x, y in zip(a.values, b.values):
        worst = max(worst, abs(y - x) / max(abs(x), floor))
    return worst


def validate_pairing(a: Trace, b: Trace, epsilon: float = 1e-3) -> PairingReport:
    """Check the two traces form a valid differential pair.

    Both traces must declare the same workload and the model-level input
    tensors must be equivalent under tensor matching at ``epsilon`` on every
    recorded run. The model-level output difference is reported, not enforced.
    """
    from . import tensor_equiv

    if a.header.workload != b.header.workload:
        raise PairingError(
            f"workload mismatch: {a.header.workload!r} vs {b.header.workload!r}"
        )
    if a.run_count != b.run_count:
        raise PairingError(f"run count mismatch: {a.run_count} vs {b.run_count}")

    runs = max(a.run_count, 1)
    inputs_a = a.model_input_ids()
    inputs_b = b.model_input_ids()
    if len(inputs_a) != len(inputs_b):
        raise PairingError(
            f"input mismatch: {len(inputs_a)} model inputs vs {len(inputs_b)}"
        )

    input_pairs: list[tuple[str, str, float]] = []
    taken: set[str] = set()
    for ta in inputs_a:
        best: Optional[tuple[str, float]] = None
        for tb in inputs_b:
            if tb in taken:
                continue
            scores = []
            for run in range(runs):
                eq, score = tensor_equiv.tensors_equivalent(
                    a.snapshot(ta, run), b.snapshot(tb, run), epsilon
                )
                if not eq:
                    break
                scores.append(score)
            else:
                worst = max(scores) if scores else 0.0
                if best is None or worst < best[1]:
                    best = (tb, worst)
        if best is None:
            raise PairingError(f"input mismatch: no equivalent for model input {ta!r}")
        taken.add(best[0])
        input_pairs.append((ta, best[0], best[1]))

    output_pairs: list[tuple[str, str, float]] = []
    outs_a, outs_b = a.model_output_ids(), b.model_output_ids()
    used: set[str] = set()
    for ta in outs_a:
        snap_a = a.snapshot(ta)
        best_out: Optional[tuple[str, float]] = None
        for tb in outs_b:
            if tb in used:
                continue
            snap_b = b.snapshot(tb)
            if snap_a.shape == snap_b.shape:
                diff = elementwise_rel_diff(snap_a, snap_b)
            else:
                _, diff = tensor_equiv.tensors_equivalent(snap_a, snap_b, epsilon)
            if best_out is None or diff < best_out[1]:
                best_out = (tb, diff)
        if best_out is not None:
            used.add(best_out[0])
            output_pairs.append((ta, best_out[0], best_out[1]))

    max_diff = max((d for _, _, d in output_pairs), default=0.0)
    return PairingReport(
        workload=a.header.workload,
        runs=runs,
        input_pairs=tuple(input_pairs),
        output_pairs=tuple(output_pairs),
        max_output_rel_diff=max_diff,
    )
