"""Synthetic workload simulator: generates paired traces of two "systems"
running the same workload, with declared ground truth for every quantity the
analysis pipeline is supposed to recover.

System A is the efficient reference. System B shares the workload's cut
tensors (optionally stored under permuted layouts) but keeps its own interior
intermediates, and may carry one injected inefficiency:

* misconfiguration - same operators, but a config-guarded dispatch selects a
  different (hungrier) kernel; program model and block traces record the
  guilty branch and its config source.
* api_misuse - the target segment calls a disjoint set of kernels for the
  same math (optionally fused into one operator), at higher energy.
* redundant - an extra operator with communication-style kernels and a forced
  non-idle gap appears inside the target segment.

Per-kernel power is declarative; the trace's power records are the exact
piecewise-constant ground truth.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

import numpy as np

from .trace_model import (
    BlockTraceRecord,
    DefUseEdge,
    KernelEvent,
    OperatorEvent,
    PowerSample,
    ProgramModel,
    TensorSnapshot,
    Trace,
    TraceHeader,
    _round9,
    save_trace,
)

IDLE_WATTS = 75.0
FORCED_GAP_WATTS = 120.0

TEMPLATES = ("chain", "diamond", "transformer")
KINDS = ("misconfiguration", "api_misuse", "redundant")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Inefficiency:
    kind: str
    target_segment: int
    magnitude: float  # fractional extra energy on the target segment
    source_key: str = ""  # config key, for misconfiguration
    fuse: bool = False  # api_misuse: replace the segment with one fused operator


@dataclass(frozen=True)
class ScenarioManifest:
    workload: str
    seed: int
    template: str = "chain"
    length: int = 4  # chain segments / transformer blocks
    layout_permute: bool = False
    inefficiency: Optional[Inefficiency] = None
    input_batches: int = 2
    output_noise: float = 0.002
    inter_segment_gap_us: int = 1000
    lead_us: int = 1000
    chain_ops_per_segment: Optional[tuple[int, ...]] = None  # chain template only

    def validate(self) -> None:
        if self.template not in TEMPLATES:
            raise ManifestError(f"unknown template {self.template!r}")
        if self.length < 1:
            raise ManifestError("length must be >= 1")
        if self.input_batches < 2:
            raise ManifestError("at least two input batches are required")
        if not 0 <= self.output_noise < 0.01:
            raise ManifestError("output noise must stay under the 1% output rule")
        ineff = self.inefficiency
        if ineff is not None:
            if ineff.kind not in KINDS:
                raise ManifestError(f"unknown inefficiency kind {ineff.kind!r}")
            if not 0 < ineff.magnitude <= 2:
                raise ManifestError("magnitude must be in (0, 2]")
            if ineff.kind == "misconfiguration" and not ineff.source_key:
                raise ManifestError("misconfiguration needs a source_key")
            if not 0 <= ineff.target_segment < self._segment_count():
                raise ManifestError("target_segment out of range")

    def _segment_count(self) -> int:
        if self.template == "transformer":
            return 2 * self.length
        if self.template == "diamond":
            return 3
        return self.length

    def to_dict(self, include_expected: bool = True) -> dict:
        d: dict[str, Any] = {
            "workload": self.workload,
            "seed": self.seed,
            "template": self.template,
            "length": self.length,
            "layout_permute": self.layout_permute,
            "input_batches": self.input_batches,
            "output_noise": self.output_noise,
            "inter_segment_gap_us": self.inter_segment_gap_us,
            "lead_us": self.lead_us,
        }
        if self.chain_ops_per_segment is not None:
            d["chain_ops_per_segment"] = list(self.chain_ops_per_segment)
        if self.inefficiency is not None:
            d["inefficiency"] = {
                "kind": self.inefficiency.kind,
                "target_segment": self.inefficiency.target_segment,
                "magnitude": self.inefficiency.magnitude,
                "source_key": self.inefficiency.source_key,
                "fuse": self.inefficiency.fuse,
            }
        if include_expected:
            d["expected"] = expected_ground_truth(self).to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioManifest":
        ineff = None
        if d.get("inefficiency"):
            i = d["inefficiency"]
            ineff = Inefficiency(
                kind=i["kind"],
                target_segment=int(i["target_segment"]),
                magnitude=float(i["magnitude"]),
                source_key=i.get("source_key", ""),
                fuse=bool(i.get("fuse", False)),
            )
        m = cls(
            workload=d["workload"],
            seed=int(d["seed"]),
            template=d.get("template", "chain"),
            length=int(d.get("length", 4)),
            layout_permute=bool(d.get("layout_permute", False)),
            inefficiency=ineff,
            input_batches=int(d.get("input_batches", 2)),
            output_noise=float(d.get("output_noise", 0.002)),
            inter_segment_gap_us=int(d.get("inter_segment_gap_us", 1000)),
            lead_us=int(d.get("lead_us", 1000)),
            chain_ops_per_segment=(
                tuple(d["chain_ops_per_segment"]) if d.get("chain_ops_per_segment") else None
            ),
        )
        m.validate()
        return m


@dataclass(frozen=True)
class SegmentTruth:
    ops_a: tuple[str, ...]
    ops_b: tuple[str, ...]
    energy_a: float
    energy_b: float

    @property
    def wasted_joules(self) -> float:
        return abs(self.energy_b - self.energy_a)


@dataclass(frozen=True)
class GroundTruth:
    op_count_a: int
    op_count_b: int
    segments: tuple[SegmentTruth, ...]
    injected_kind: Optional[str]
    target_segment: Optional[int]
    wasted_joules: float
    total_joules_a: float
    total_joules_b: float
    end_to_end_waste_fraction: float  # wasted / inefficient-side total
    source: Optional[str]  # "config:<key>" for misconfiguration
    extra_kernels: tuple[str, ...]  # kernel names, for redundant
    kernel_multiset_a: tuple[str, ...]  # unmatched names, for api_misuse
    kernel_multiset_b: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "op_count_a": self.op_count_a,
            "op_count_b": self.op_count_b,
            "segments": [
                {
                    "ops_a": list(s.ops_a),
                    "ops_b": list(s.ops_b),
                    "energy_a": s.energy_a,
                    "energy_b": s.energy_b,
                }
                for s in self.segments
            ],
            "injected_kind": self.injected_kind,
            "target_segment": self.target_segment,
            "wasted_joules": self.wasted_joules,
            "total_joules_a": self.total_joules_a,
            "total_joules_b": self.total_joules_b,
            "end_to_end_waste_fraction": self.end_to_end_waste_fraction,
            "source": self.source,
            "extra_kernels": list(self.extra_kernels),
            "kernel_multiset_a": list(self.kernel_multiset_a),
            "kernel_multiset_b": list(self.kernel_multiset_b),
        }


# ---------------------------------------------------------------------------
# Plan structures


@dataclass
class _KernelPlan:
    name: str
    watts: float
    duration_us: int
    backtrace: tuple[str, ...]
    gap_after_us: int = 0  # forced non-idle gap inside the operator
    gap_watts: float = 0.0

    def joules(self) -> float:
        j = self.watts * self.duration_us / 1e6
        if self.gap_after_us:
            j += self.gap_watts * self.gap_after_us / 1e6
        return j

    def span_us(self) -> int:
        return self.duration_us + self.gap_after_us


@dataclass
class _OpPlan:
    op_id: str
    op_name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    kernels: list[_KernelPlan]
    segment: int

    def joules(self) -> float:
        return sum(k.joules() for k in self.kernels)

    def busy_us(self) -> int:
        return sum(k.span_us() for k in self.kernels)


@dataclass
class _Plan:
    system: str
    ops: list[_OpPlan] = field(default_factory=list)
    # tensor_id -> (shape, kind, payload); kind: shared | private | noised
    tensors: dict[str, tuple[tuple[int, ...], str, Any]] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=dict)
    progmodel: Optional[ProgramModel] = None
    blocktrace_blocks: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def segment_ops(self, seg: int) -> list[_OpPlan]:
        return [op for op in self.ops if op.segment == seg]

    def segment_joules(self, seg: int) -> float:
        return sum(op.joules() for op in self.segment_ops(seg))


def _bt(workload: str, op_name: str, kernel_name: str, extra: Sequence[str] = ()) -> tuple[str, ...]:
    return ("main", f"run_{workload}", f"{op_name}_fwd", *extra, f"{kernel_name}_launch")


def _rand_shape(rng: np.random.Generator, min_order: int = 2, max_order: int = 3) -> tuple[int, ...]:
    order = int(rng.integers(min_order, max_order + 1))
    return tuple(int(d) for d in rng.integers(2, 6, size=order))


# ---------------------------------------------------------------------------
# Templates


def _build_structures(manifest: ScenarioManifest, rng: np.random.Generator) -> tuple[_Plan, _Plan, int]:
    if manifest.template == "transformer":
        return _transformer_structure(manifest, rng)
    if manifest.template == "diamond":
        return _diamond_structure(manifest, rng)
    return _chain_structure(manifest, rng)


_CHAIN_OP_NAMES = ("gemm", "layernorm", "softmax", "conv", "embed", "reduce", "gelu", "scale")


def _new_kernel(rng: np.random.Generator, workload: str, op_name: str, idx: int) -> _KernelPlan:
    name = f"{op_name}_cuda{idx}"
    return _KernelPlan(
        name=name,
        watts=_round9(float(rng.uniform(150.0, 450.0))),
        duration_us=int(rng.integers(3000, 9001)),
        backtrace=_bt(workload, op_name, name),
    )


def _chain_structure(manifest: ScenarioManifest, rng: np.random.Generator) -> tuple[_Plan, _Plan, int]:
    """A linear pipeline; each segment holds one or two operators per side."""
    plan_a, plan_b = _Plan("A"), _Plan("B")
    w = manifest.workload
    prev_cut = "x0"
    input_shape = _rand_shape(rng)
    for plan in (plan_a, plan_b):
        plan.tensors["x0"] = (input_shape, "shared", "pool_x0")

    fixed = manifest.chain_ops_per_segment
    for seg in range(manifest.length):
        n_ops = fixed[seg] if fixed is not None else int(rng.integers(1, 3))
        names = [str(rng.choice(_CHAIN_OP_NAMES)) for _ in range(n_ops)]
        kernel_specs = [
            [_new_kernel(rng, w, names[i], k) for k in range(int(rng.integers(1, 3)))]
            for i in range(n_ops)
        ]
        cut_shape = _rand_shape(rng)
        is_last = seg == manifest.length - 1
        cut_id = "y_out" if is_last else f"cut{seg}"
        for plan, side in ((plan_a, "a"), (plan_b, "b")):
            upstream = prev_cut
            for i in range(n_ops):
                last = i == n_ops - 1
                out_id = cut_id if last else f"{side}{seg}_t{i}"
                out_shape = cut_shape if last else _rand_shape(rng)
                if last:
                    kind = "noised" if (is_last and side == "b") else "shared"
                    payload = f"pool_{cut_id}"
                else:
                    kind, payload = "private", None
                if out_id not in plan.tensors:
                    plan.tensors[out_id] = (out_shape, kind, payload)
                plan.ops.append(
                    _OpPlan(
                        op_id=f"{side}_op{seg}_{i}",
                        op_name=names[i],
                        inputs=(upstream,),
                        outputs=(out_id,),
                        kernels=[replace(k) for k in kernel_specs[i]],
                        segment=seg,
                    )
                )
                upstream = out_id
        prev_cut = cut_id
    return plan_a, plan_b, manifest.length


def _diamond_structure(manifest: ScenarioManifest, rng: np.random.Generator) -> tuple[_Plan, _Plan, int]:
    """Entry op, a two-branch diamond, and a tail op (3 segments)."""
    plan_a, plan_b = _Plan("A"), _Plan("B")
    w = manifest.workload
    input_shape = _rand_shape(rng)
    shapes = {"x0": input_shape, "d_in": _rand_shape(rng), "d_out": _rand_shape(rng), "y_out": _rand_shape(rng)}
    kernels = {
        name: [_new_kernel(rng, w, name, k) for k in range(int(rng.integers(1, 3)))]
        for name in ("stem", "branch_l", "branch_r", "join", "tail")
    }
    for plan, side in ((plan_a, "a"), (plan_b, "b")):
        plan.tensors["x0"] = (shapes["x0"], "shared", "pool_x0")
        plan.tensors["d_in"] = (shapes["d_in"], "shared", "pool_d_in")
        plan.tensors["d_out"] = (shapes["d_out"], "shared", "pool_d_out")
        plan.tensors["y_out"] = (
            shapes["y_out"],
            "noised" if side == "b" else "shared",
            "pool_y_out",
        )
        t1, t2 = f"{side}_bl", f"{side}_br"
        plan.tensors[t1] = (_rand_shape(rng), "private", None)
        plan.tensors[t2] = (_rand_shape(rng), "private", None)
        plan.ops.extend(
            [
                _OpPlan(f"{side}_stem", "stem", ("x0",), ("d_in",), [replace(k) for k in kernels["stem"]], 0),
                _OpPlan(f"{side}_branch_l", "branch_l", ("d_in",), (t1,), [replace(k) for k in kernels["branch_l"]], 1),
                _OpPlan(f"{side}_branch_r", "branch_r", ("d_in",), (t2,), [replace(k) for k in kernels["branch_r"]], 1),
                _OpPlan(f"{side}_join", "join", (t1, t2), ("d_out",), [replace(k) for k in kernels["join"]], 1),
                _OpPlan(f"{side}_tail", "tail", ("d_out",), ("y_out",), [replace(k) for k in kernels["tail"]], 2),
            ]
        )
    return plan_a, plan_b, 3


def _transformer_structure(manifest: ScenarioManifest, rng: np.random.Generator) -> tuple[_Plan, _Plan, int]:
    """Attention blocks in two styles: split Q/K/V + Mul/Add feed-forward on
    side A; fused QKV + Split and a fused linear on side B."""
    plan_a, plan_b = _Plan("A"), _Plan("B")
    w = manifest.workload
    input_shape = _rand_shape(rng)
    plan_a.tensors["x0"] = (input_shape, "shared", "pool_x0")
    plan_b.tensors["x0"] = (input_shape, "shared", "pool_x0")

    prev = "x0"
    for blk in range(manifest.length):
        seg_attn, seg_ff = 2 * blk, 2 * blk + 1
        qkv_shape = _rand_shape(rng)
        attn_shape = _rand_shape(rng)
        is_last = blk == manifest.length - 1
        block_out = "y_out" if is_last else f"cut{blk}"
        out_shape = _rand_shape(rng)

        k_q = [_new_kernel(rng, w, "q_proj", 0)]
        k_k = [_new_kernel(rng, w, "k_proj", 0)]
        k_v = [_new_kernel(rng, w, "v_proj", 0)]
        k_attn = [_new_kernel(rng, w, "attn", k) for k in range(2)]
        k_mul = [_new_kernel(rng, w, "mul", 0)]
        k_add = [_new_kernel(rng, w, "add", 0)]

        q, k, v = f"q{blk}", f"k{blk}", f"v{blk}"
        attn_out = f"attn{blk}"
        for tid in (q, k, v):
            plan_a.tensors[tid] = (qkv_shape, "shared", f"pool_{tid}")
        for plan in (plan_a, plan_b):
            plan.tensors[attn_out] = (attn_shape, "shared", f"pool_{attn_out}")

        plan_a.tensors[f"a{blk}_mul"] = (_rand_shape(rng), "private", None)
        plan_a.tensors[block_out] = (out_shape, "shared", f"pool_{block_out}")
        plan_a.ops.extend(
            [
                _OpPlan(f"a_q{blk}", "q_proj", (prev,), (q,), [replace(x) for x in k_q], seg_attn),
                _OpPlan(f"a_k{blk}", "k_proj", (prev,), (k,), [replace(x) for x in k_k], seg_attn),
                _OpPlan(f"a_v{blk}", "v_proj", (prev,), (v,), [replace(x) for x in k_v], seg_attn),
                _OpPlan(f"a_attn{blk}", "attn", (q, k, v), (attn_out,), [replace(x) for x in k_attn], seg_attn),
                _OpPlan(f"a_mul{blk}", "mul", (attn_out,), (f"a{blk}_mul",), [replace(x) for x in k_mul], seg_ff),
                _OpPlan(f"a_add{blk}", "add", (f"a{blk}_mul",), (block_out,), [replace(x) for x in k_add], seg_ff),
            ]
        )

        qkv_t = f"b{blk}_qkv"
        plan_b.tensors[qkv_t] = (_rand_shape(rng), "private", None)
        plan_b.tensors[block_out] = (
            out_shape,
            "noised" if is_last else "shared",
            f"pool_{block_out}",
        )
        # Fused ops reuse the split-side kernel budget so null runs cost the same.
        k_qkv = [replace(x, name=f"qkv_proj_cuda{i}", backtrace=_bt(w, "qkv_proj", f"qkv_proj_cuda{i}"))
                 for i, x in enumerate(k_q + k_k + k_v)]
        # Splitting a fused projection is bookkeeping: a tiny, cheap kernel.
        k_split = [
            _KernelPlan(
                name="split_cuda0",
                watts=_round9(float(rng.uniform(90.0, 140.0))),
                duration_us=200,
                backtrace=_bt(w, "split", "split_cuda0"),
            )
        ]
        k_linear = [replace(x, name=f"linear_cuda{i}", backtrace=_bt(w, "linear", f"linear_cuda{i}"))
                    for i, x in enumerate(k_mul + k_add)]
        sq, sk, sv = f"b{blk}_q", f"b{blk}_k", f"b{blk}_v"
        # Split outputs mirror the A-side projections (same logical values).
        for tid, pool in ((sq, f"pool_{q}"), (sk, f"pool_{k}"), (sv, f"pool_{v}")):
            plan_b.tensors[tid] = (qkv_shape, "shared", pool)
        plan_b.ops.extend(
            [
                _OpPlan(f"b_qkv{blk}", "qkv_proj", (prev,), (qkv_t,), k_qkv, seg_attn),
                _OpPlan(f"b_split{blk}", "split", (qkv_t,), (sq, sk, sv), k_split, seg_attn),
                _OpPlan(f"b_attn{blk}", "attn", (sq, sk, sv), (attn_out,), [replace(x) for x in k_attn], seg_attn),
                _OpPlan(f"b_linear{blk}", "linear", (attn_out,), (block_out,), k_linear, seg_ff),
            ]
        )
        prev = block_out
    return plan_a, plan_b, 2 * manifest.length


# ---------------------------------------------------------------------------
# Inefficiency transforms (applied to the plans before layout)


def _scale_segment_watts(plan: _Plan, seg: int, target_joules: float) -> None:
    base = plan.segment_joules(seg)
    factor = target_joules / base
    for op in plan.segment_ops(seg):
        for k in op.kernels:
            k.watts = _round9(k.watts * factor)


def _apply_misconfiguration(
    manifest: ScenarioManifest, plan_a: _Plan, plan_b: _Plan, rng: np.random.Generator
) -> str:
    ineff = manifest.inefficiency
    assert ineff is not None
    key = ineff.source_key
    var = "use_" + key.split(".")[-1]
    dispatch = "dispatch_" + key.replace(".", "_")
    w = manifest.workload

    for plan, suffix, taken in ((plan_a, "fast", "bb_fast"), (plan_b, "slow", "bb_slow")):
        for op in plan.segment_ops(ineff.target_segment):
            for k in op.kernels:
                k.name = f"{k.name}_{suffix}"
                k.backtrace = _bt(w, op.op_name, k.name, extra=(dispatch,))
        plan.blocktrace_blocks[dispatch] = ("bb_entry", taken, "bb_ret")
        plan.config[key] = plan is plan_a

    hops = int(rng.integers(1, 3))
    edges = []
    if hops == 1:
        edges.append(DefUseEdge(var=var, source=f"config:{key}", site=f"{dispatch}:bb_entry"))
    else:
        mid = f"{var}_cached"
        edges.append(DefUseEdge(var=var, source=mid, site=f"{dispatch}:bb_entry"))
        edges.append(DefUseEdge(var=mid, source=f"config:{key}", site="init_backend:bb0"))
    model = ProgramModel(
        functions={dispatch: ("bb_entry", "bb_fast", "bb_slow", "bb_ret")},
        block_control={"bb_entry": ("branch", var)},
        def_use=tuple(edges),
    )
    plan_a.progmodel = model
    plan_b.progmodel = model

    target = (1.0 + ineff.magnitude) * plan_a.segment_joules(ineff.target_segment)
    _scale_segment_watts(plan_b, ineff.target_segment, target)
    return f"config:{key}"


def _apply_api_misuse(
    manifest: ScenarioManifest, plan_a: _Plan, plan_b: _Plan
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    ineff = manifest.inefficiency
    assert ineff is not None
    seg = ineff.target_segment
    w = manifest.workload
    seg_ops = plan_b.segment_ops(seg)
    names_a = tuple(
        sorted(k.name for op in plan_a.segment_ops(seg) for k in op.kernels)
    )

    if ineff.fuse:
        produced_inside = {t for op in seg_ops for t in op.outputs}
        external_inputs = []
        boundary_outputs = []
        for op in seg_ops:
            for t in op.inputs:
                if t not in produced_inside and t not in external_inputs:
                    external_inputs.append(t)
        consumed_later = {
            t for other in plan_b.ops for t in other.inputs if other.segment != seg
        }
        for op in seg_ops:
            for t in op.outputs:
                if t in consumed_later or plan_b.tensors[t][1] in ("shared", "noised"):
                    if t not in boundary_outputs:
                        boundary_outputs.append(t)
        fused_name = "fused_" + "_".join(dict.fromkeys(op.op_name for op in seg_ops))
        kernels = [
            _KernelPlan(
                name=f"{fused_name}_cuda{i}",
                watts=k.watts,
                duration_us=k.duration_us,
                backtrace=_bt(w, fused_name, f"{fused_name}_cuda{i}"),
            )
            for i, k in enumerate(k for op in seg_ops for k in op.kernels)
        ]
        dropped_interiors = produced_inside - set(boundary_outputs)
        for t in dropped_interiors:
            del plan_b.tensors[t]
        fused = _OpPlan(
            op_id=f"b_fused{seg}",
            op_name=fused_name,
            inputs=tuple(external_inputs),
            outputs=tuple(boundary_outputs),
            kernels=kernels,
            segment=seg,
        )
        first = min(i for i, op in enumerate(plan_b.ops) if op.segment == seg)
        plan_b.ops = [op for op in plan_b.ops if op.segment != seg]
        plan_b.ops.insert(first, fused)
    else:
        for op in seg_ops:
            op.op_name = "alt_" + op.op_name
            for k in op.kernels:
                k.name = "alt_" + k.name
                k.backtrace = _bt(w, op.op_name, k.name)

    target = (1.0 + ineff.magnitude) * plan_a.segment_joules(seg)
    _scale_segment_watts(plan_b, seg, target)
    names_b = tuple(
        sorted(k.name for op in plan_b.segment_ops(seg) for k in op.kernels)
    )
    return names_a, names_b


def _apply_redundant(
    manifest: ScenarioManifest, plan_a: _Plan, plan_b: _Plan, rng: np.random.Generator
) -> tuple[str, ...]:
    """Insert an all-reduce style operator plus a forced non-idle gap."""
    ineff = manifest.inefficiency
    assert ineff is not None
    seg = ineff.target_segment
    w = manifest.workload
    target_joules = ineff.magnitude * plan_a.segment_joules(seg)

    # Roughly 30% of the extra energy burns in a forced non-idle gap, the rest
    # in the communication kernels; keep both strictly positive.
    gap_us = min(max(int(0.3 * target_joules * 1e6 / FORCED_GAP_WATTS), 1), 2000)
    kernel_joules = target_joules - FORCED_GAP_WATTS * gap_us / 1e6
    k_us = int(rng.integers(1500, 4000))
    w1 = _round9(0.5 * kernel_joules * 1e6 / k_us)
    w2 = _round9((kernel_joules - w1 * k_us / 1e6) * 1e6 / k_us)

    seg_ops = plan_b.segment_ops(seg)
    anchor = seg_ops[-1]
    upstream = anchor.inputs[0]
    extra_t = f"b{seg}_join_buf"
    plan_b.tensors[extra_t] = (_rand_shape(rng), "private", None)
    kernels = [
        _KernelPlan(
            name="allreduce_copy",
            watts=w1,
            duration_us=k_us,
            backtrace=_bt(w, "dist_join", "allreduce_copy"),
            gap_after_us=gap_us,
            gap_watts=FORCED_GAP_WATTS,
        ),
        _KernelPlan(
            name="allreduce_comm",
            watts=w2,
            duration_us=k_us,
            backtrace=_bt(w, "dist_join", "allreduce_comm"),
        ),
    ]
    extra = _OpPlan(
        op_id=f"b_join{seg}",
        op_name="dist_join",
        inputs=(upstream,),
        outputs=(extra_t,),
        kernels=kernels,
        segment=seg,
    )
    anchor.inputs = tuple(anchor.inputs) + (extra_t,)
    idx = plan_b.ops.index(anchor)
    plan_b.ops.insert(idx, extra)
    return ("allreduce_comm", "allreduce_copy")


# ---------------------------------------------------------------------------
# Timeline layout and trace assembly


@dataclass
class _Layout:
    op_times: dict[str, tuple[int, int]]
    kernel_events: list[KernelEvent]
    power: list[PowerSample]
    end_us: int


def _layout_plan(manifest: ScenarioManifest, plan: _Plan) -> _Layout:
    cursor = manifest.lead_us
    op_times: dict[str, tuple[int, int]] = {}
    kernel_events: list[KernelEvent] = []
    busy: list[tuple[int, int, float]] = []
    corr = 0
    current_segment: Optional[int] = None
    kernel_seq = 0
    for op in plan.ops:
        if current_segment is not None and op.segment != current_segment:
            cursor += manifest.inter_segment_gap_us
        current_segment = op.segment
        start = cursor
        for k in op.kernels:
            corr += 1
            kid = f"{plan.system.lower()}_krn{kernel_seq}"
            kernel_seq += 1
            kernel_events.append(
                KernelEvent(
                    kernel_id=kid,
                    kernel_name=k.name,
                    correlation_id=corr,
                    start=cursor,
                    end=cursor + k.duration_us,
                    backtrace=k.backtrace,
                )
            )
            busy.append((cursor, cursor + k.duration_us, k.watts))
            cursor += k.duration_us
            if k.gap_after_us:
                busy.append((cursor, cursor + k.gap_after_us, k.gap_watts))
                cursor += k.gap_after_us
        op_times[op.op_id] = (start, cursor)
    end_us = cursor + manifest.lead_us

    power: list[PowerSample] = []
    t = 0
    last_watts: Optional[float] = None
    events = sorted(busy)
    for s, e, wv in events:
        if s > t and last_watts != IDLE_WATTS:
            power.append(PowerSample(timestamp=t, watts=IDLE_WATTS))
            last_watts = IDLE_WATTS
        if wv != last_watts:
            power.append(PowerSample(timestamp=s, watts=_round9(wv)))
            last_watts = wv
        t = e
    if last_watts != IDLE_WATTS:
        power.append(PowerSample(timestamp=t, watts=IDLE_WATTS))
    return _Layout(op_times=op_times, kernel_events=kernel_events, power=power, end_us=end_us)


def _materialize_values(
    manifest: ScenarioManifest,
    plan: _Plan,
    pools: dict[str, list[np.ndarray]],
    rng_private: np.random.Generator,
    rng_noise: np.random.Generator,
    permutations: dict[str, tuple[int, ...]],
) -> dict[str, tuple[TensorSnapshot, ...]]:
    runs = manifest.input_batches
    out: dict[str, tuple[TensorSnapshot, ...]] = {}
    for tid, (shape, kind, payload) in plan.tensors.items():
        snaps = []
        for run in range(runs):
            if kind == "private":
                arr = rng_private.normal(size=shape)
            else:
                base = pools[payload][run]
                if kind == "noised":
                    noise = rng_noise.uniform(
                        -manifest.output_noise, manifest.output_noise, size=base.shape
                    )
                    arr = base * (1.0 + noise)
                else:
                    arr = base
                if plan.system == "B" and tid in permutations:
                    arr = np.transpose(arr, permutations[tid])
            arr = np.asarray(arr, dtype=np.float64)
            values = tuple(_round9(v) for v in arr.ravel().tolist())
            snaps.append(TensorSnapshot(tensor_id=tid, shape=tuple(arr.shape), values=values))
        out[tid] = tuple(snaps)
    return out


def _assemble_trace(
    manifest: ScenarioManifest,
    plan: _Plan,
    layout: _Layout,
    tensors: dict[str, tuple[TensorSnapshot, ...]],
) -> Trace:
    operators = []
    kernel_iter = iter(layout.kernel_events)
    kernels: dict[str, KernelEvent] = {}
    for op in plan.ops:
        kids = []
        for _ in op.kernels:
            kev = next(kernel_iter)
            kids.append(kev.kernel_id)
            kernels[kev.kernel_id] = kev
        start, end = layout.op_times[op.op_id]
        operators.append(
            OperatorEvent(
                op_id=op.op_id,
                op_name=op.op_name,
                input_tensor_ids=op.inputs,
                output_tensor_ids=op.outputs,
                kernel_ids=tuple(kids),
                start=start,
                end=end,
            )
        )
    config = dict(plan.config)
    config.setdefault("idle_watts", IDLE_WATTS)
    blocktraces = tuple(
        BlockTraceRecord(func=f, run_index=0, blocks=blocks)
        for f, blocks in sorted(plan.blocktrace_blocks.items())
    )
    return Trace(
        header=TraceHeader(
            schema_version=1,
            system=f"{plan.system}:{manifest.template}",
            workload=manifest.workload,
            seed=manifest.seed,
        ),
        tensors=tensors,
        operators=tuple(operators),
        kernels=kernels,
        power=tuple(layout.power),
        blocktraces=blocktraces,
        progmodel=plan.progmodel,
        config=config,
    )


def _full_trace_joules(plan: _Plan, layout: _Layout) -> float:
    """Energy over the trace's visible span [0, last op end] (the same span
    the energy ledger integrates)."""
    busy = sum(op.joules() for op in plan.ops)
    busy_us = sum(op.busy_us() for op in plan.ops)
    span_end = max((t[1] for t in layout.op_times.values()), default=0)
    idle_us = span_end - busy_us
    return busy + IDLE_WATTS * idle_us / 1e6


# ---------------------------------------------------------------------------
# Generation


def _plan_scenario(manifest: ScenarioManifest):
    manifest.validate()
    rng = np.random.default_rng(manifest.seed)
    rng_structure = np.random.default_rng(rng.integers(2**63))
    rng_values = np.random.default_rng(rng.integers(2**63))
    rng_private_a = np.random.default_rng(rng.integers(2**63))
    rng_private_b = np.random.default_rng(rng.integers(2**63))
    rng_noise = np.random.default_rng(rng.integers(2**63))
    rng_inject = np.random.default_rng(rng.integers(2**63))

    plan_a, plan_b, n_segments = _build_structures(manifest, rng_structure)

    source = None
    extra_kernels: tuple[str, ...] = ()
    multiset_a: tuple[str, ...] = ()
    multiset_b: tuple[str, ...] = ()
    ineff = manifest.inefficiency
    if ineff is not None:
        if ineff.kind == "misconfiguration":
            source = _apply_misconfiguration(manifest, plan_a, plan_b, rng_inject)
        elif ineff.kind == "api_misuse":
            multiset_a, multiset_b = _apply_api_misuse(manifest, plan_a, plan_b)
        else:
            extra_kernels = _apply_redundant(manifest, plan_a, plan_b, rng_inject)

    # Layout permutations for shared interior tensors on side B.
    permutations: dict[str, tuple[int, ...]] = {}
    if manifest.layout_permute:
        protected = {"x0", "y_out"}
        for tid, (shape, kind, _) in sorted(plan_b.tensors.items()):
            if kind == "shared" and tid not in protected and len(shape) >= 2:
                perm = tuple(int(x) for x in rng_values.permutation(len(shape)))
                if perm != tuple(range(len(shape))):
                    permutations[tid] = perm

    pools: dict[str, list[np.ndarray]] = {}
    for plan in (plan_a, plan_b):
        for tid, (shape, kind, payload) in plan.tensors.items():
            if kind in ("shared", "noised") and payload not in pools:
                pools[payload] = [
                    rng_values.normal(size=shape) for _ in range(manifest.input_batches)
                ]

    return (
        plan_a,
        plan_b,
        n_segments,
        pools,
        permutations,
        rng_private_a,
        rng_private_b,
        rng_noise,
        source,
        extra_kernels,
        multiset_a,
        multiset_b,
    )


def generate(manifest: ScenarioManifest) -> tuple[Trace, Trace, GroundTruth]:
    """Emit the paired traces plus the ground-truth record, deterministically."""
    (
        plan_a,
        plan_b,
        n_segments,
        pools,
        permutations,
        rng_private_a,
        rng_private_b,
        rng_noise,
        source,
        extra_kernels,
        multiset_a,
        multiset_b,
    ) = _plan_scenario(manifest)

    layout_a = _layout_plan(manifest, plan_a)
    layout_b = _layout_plan(manifest, plan_b)
    tensors_a = _materialize_values(manifest, plan_a, pools, rng_private_a, rng_noise, {})
    tensors_b = _materialize_values(manifest, plan_b, pools, rng_private_b, rng_noise, permutations)
    trace_a = _assemble_trace(manifest, plan_a, layout_a, tensors_a)
    trace_b = _assemble_trace(manifest, plan_b, layout_b, tensors_b)

    segments = tuple(
        SegmentTruth(
            ops_a=tuple(op.op_id for op in plan_a.segment_ops(seg)),
            ops_b=tuple(op.op_id for op in plan_b.segment_ops(seg)),
            energy_a=plan_a.segment_joules(seg),
            energy_b=plan_b.segment_joules(seg),
        )
        for seg in range(n_segments)
    )
    ineff = manifest.inefficiency
    wasted = segments[ineff.target_segment].wasted_joules if ineff else 0.0
    total_a = _full_trace_joules(plan_a, layout_a)
    total_b = _full_trace_joules(plan_b, layout_b)
    truth = GroundTruth(
        op_count_a=len(plan_a.ops),
        op_count_b=len(plan_b.ops),
        segments=segments,
        injected_kind=ineff.kind if ineff else None,
        target_segment=ineff.target_segment if ineff else None,
        wasted_joules=wasted,
        total_joules_a=total_a,
        total_joules_b=total_b,
        end_to_end_waste_fraction=wasted / max(total_a, total_b) if wasted else 0.0,
        source=source,
        extra_kernels=extra_kernels,
        kernel_multiset_a=multiset_a,
        kernel_multiset_b=multiset_b,
    )
    return trace_a, trace_b, truth


def expected_ground_truth(manifest: ScenarioManifest) -> GroundTruth:
    _, _, truth = generate(manifest)
    return truth


def write_scenario(manifest: ScenarioManifest, out_dir: str) -> tuple[str, str]:
    """Generate and save the pair plus manifest and ground truth as files."""
    os.makedirs(out_dir, exist_ok=True)
    trace_a, trace_b, truth = generate(manifest)
    path_a = os.path.join(out_dir, "trace_a.jsonl")
    path_b = os.path.join(out_dir, "trace_b.jsonl")
    save_trace(trace_a, path_a)
    save_trace(trace_b, path_b)
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(include_expected=False), fh, indent=2, sort_keys=True)
    with open(os.path.join(out_dir, "ground_truth.json"), "w", encoding="utf-8") as fh:
        json.dump(truth.to_dict(), fh, indent=2, sort_keys=True)
    return path_a, path_b


# ---------------------------------------------------------------------------
# Fuzzing and presets


_SOURCE_KEY_POOL = (
    "matmul.allow_tf32",
    "backend.math_mode",
    "conv.layout_policy",
    "attention.use_tensor_cores",
    "runtime.alloc_strategy",
)


def fuzz(seed: int, n: int) -> list[ScenarioManifest]:
    """Deterministic corpus of randomized scenario manifests.

    Injected scenarios draw from the structurally mirrored templates (chain,
    diamond) so the injected cause stays recoverable; the transformer template
    exercises cross-structure matching in null scenarios and presets.
    """
    if n < 1:
        raise ManifestError("need at least one manifest")
    rng = np.random.default_rng(seed)
    manifests = []
    for i in range(n):
        template = str(rng.choice(("chain", "diamond")))
        kind = KINDS[i % len(KINDS)]
        length = int(rng.integers(3, 7)) if template == "chain" else int(rng.integers(1, 3))
        n_segments = length if template == "chain" else 3
        ineff = Inefficiency(
            kind=kind,
            target_segment=int(rng.integers(0, n_segments)),
            magnitude=float(np.round(rng.uniform(0.02, 0.5), 4)),
            source_key=str(rng.choice(_SOURCE_KEY_POOL)),
        )
        manifests.append(
            ScenarioManifest(
                workload=f"fuzz_{seed}_{i}",
                seed=int(rng.integers(2**31)),
                template=template,
                length=length,
                layout_permute=bool(rng.integers(0, 2)),
                inefficiency=ineff,
            )
        )
    return manifests


def null_corpus(seed: int, n: int) -> list[ScenarioManifest]:
    """Scenarios with no injected inefficiency (for false-positive checks)."""
    rng = np.random.default_rng(seed)
    base = fuzz(int(rng.integers(2**31)), n)
    out = []
    for i, m in enumerate(base):
        template = str(rng.choice(TEMPLATES))
        length = int(rng.integers(1, 3)) if template == "transformer" else m.length
        out.append(
            replace(
                m,
                template=template,
                length=length,
                chain_ops_per_segment=None,
                inefficiency=None,
                workload=m.workload + "_null",
            )
        )
    return out


def preset(name: str) -> ScenarioManifest:
    try:
        return _PRESETS[name]()
    except KeyError:
        raise ManifestError(f"unknown preset {name!r}; have {sorted(_PRESETS)}") from None


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def _preset_attention_block() -> ScenarioManifest:
    return ScenarioManifest(
        workload="attention_block_demo",
        seed=70007,
        template="transformer",
        length=1,
        layout_permute=True,
    )


def _preset_tf32() -> ScenarioManifest:
    # Magnitude solved so the extra energy is 12.5% of the inefficient side's
    # end-to-end total: wasted = total_A / 7.
    base = ScenarioManifest(
        workload="sd_tf32_case",
        seed=32032,
        template="chain",
        length=4,
        chain_ops_per_segment=(1, 1, 1, 1),
    )
    probe_a, _, _ = generate(base)
    from . import energy as energy_mod

    total_a = energy_mod.build_ledger(probe_a).total_joules
    gt = expected_ground_truth(base)
    target_seg = 1
    magnitude = (total_a / 7.0) / gt.segments[target_seg].energy_a
    return replace(
        base,
        inefficiency=Inefficiency(
            kind="misconfiguration",
            target_segment=target_seg,
            magnitude=magnitude,
            source_key="matmul.allow_tf32",
        ),
    )


def _preset_join() -> ScenarioManifest:
    # wasted / total_B = 0.23  =>  wasted = total_A * 0.23 / 0.77
    base = ScenarioManifest(
        workload="ddp_join_case",
        seed=92092,
        template="chain",
        length=3,
        chain_ops_per_segment=(2, 1, 2),
    )
    from . import energy as energy_mod

    probe_a, _, _ = generate(base)
    total_a = energy_mod.build_ledger(probe_a).total_joules
    gt = expected_ground_truth(base)
    target_seg = 1
    magnitude = (total_a * 0.23 / 0.77) / gt.segments[target_seg].energy_a
    return replace(
        base,
        inefficiency=Inefficiency(
            kind="redundant",
            target_segment=target_seg,
            magnitude=magnitude,
            source_key="",
        ),
    )


def _preset_fused_linear() -> ScenarioManifest:
    return ScenarioManifest(
        workload="fused_linear_case",
        seed=14141,
        template="chain",
        length=3,
        chain_ops_per_segment=(1, 2, 1),
        inefficiency=Inefficiency(
            kind="api_misuse",
            target_segment=1,
            magnitude=0.10,
            fuse=True,
        ),
    )


def _preset_layout_null() -> ScenarioManifest:
    return ScenarioManifest(
        workload="layout_null_case",
        seed=55055,
        template="chain",
        length=5,
        layout_permute=True,
    )


def _preset_sampler() -> ScenarioManifest:
    # Three short single-kernel operators far apart: the delayed low-rate
    # sampler reads idle wattage where the kernels actually ran.
    return ScenarioManifest(
        workload="sampler_demo",
        seed=50505,
        template="chain",
        length=3,
        chain_ops_per_segment=(1, 1, 1),
        inter_segment_gap_us=600_000,
        lead_us=600_000,
    )


SAMPLER_DEMO_WATTS = (266.0, 317.0, 455.0)
SAMPLER_DEMO_DURATIONS_US = (6000, 8000, 9000)


def sampler_demo_traces() -> tuple[Trace, Trace, GroundTruth]:
    """The canonical three-operator sampler scenario with pinned watts."""
    manifest = _preset_sampler()
    (
        plan_a,
        plan_b,
        n_segments,
        pools,
        permutations,
        rng_private_a,
        rng_private_b,
        rng_noise,
        *_,
    ) = _plan_scenario(manifest)
    for plan in (plan_a, plan_b):
        for seg in range(3):
            ops = plan.segment_ops(seg)
            ops[0].kernels = [
                _KernelPlan(
                    name=ops[0].kernels[0].name,
                    watts=SAMPLER_DEMO_WATTS[seg],
                    duration_us=SAMPLER_DEMO_DURATIONS_US[seg],
                    backtrace=ops[0].kernels[0].backtrace,
                )
            ]
    layout_a = _layout_plan(manifest, plan_a)
    layout_b = _layout_plan(manifest, plan_b)
    tensors_a = _materialize_values(manifest, plan_a, pools, rng_private_a, rng_noise, {})
    tensors_b = _materialize_values(manifest, plan_b, pools, rng_private_b, rng_noise, permutations)
    trace_a = _assemble_trace(manifest, plan_a, layout_a, tensors_a)
    trace_b = _assemble_trace(manifest, plan_b, layout_b, tensors_b)
    segments = tuple(
        SegmentTruth(
            ops_a=tuple(op.op_id for op in plan_a.segment_ops(seg)),
            ops_b=tuple(op.op_id for op in plan_b.segment_ops(seg)),
            energy_a=plan_a.segment_joules(seg),
            energy_b=plan_b.segment_joules(seg),
        )
        for seg in range(n_segments)
    )
    truth = GroundTruth(
        op_count_a=len(plan_a.ops),
        op_count_b=len(plan_b.ops),
        segments=segments,
        injected_kind=None,
        target_segment=None,
        wasted_joules=0.0,
        total_joules_a=_full_trace_joules(plan_a, layout_a),
        total_joules_b=_full_trace_joules(plan_b, layout_b),
        end_to_end_waste_fraction=0.0,
        source=None,
        extra_kernels=(),
        kernel_multiset_a=(),
        kernel_multiset_b=(),
    )
    return trace_a, trace_b, truth


def _preset_qk_twins() -> ScenarioManifest:
    return ScenarioManifest(
        workload="qk_twins_case",
        seed=77077,
        template="transformer",
        length=1,
    )


def qk_disambiguation_traces() -> tuple[Trace, Trace, GroundTruth]:
    """Transformer pair whose Q/K projections share values on run 0 only.

    Pairing them correctly requires the all-runs rule: run 1 breaks the tie.
    """
    manifest = _preset_qk_twins()
    trace_a, trace_b, truth = generate(manifest)

    def patched(trace: Trace, q_id: str, k_id: str) -> Trace:
        tensors = dict(trace.tensors)
        q_run0 = tensors[q_id][0]
        k_snaps = list(tensors[k_id])
        k_snaps[0] = TensorSnapshot(
            tensor_id=k_id, shape=q_run0.shape, values=q_run0.values
        )
        tensors[k_id] = tuple(k_snaps)
        return replace(trace, tensors=tensors)

    trace_a = patched(trace_a, "q0", "k0")
    trace_b = patched(trace_b, "b0_q", "b0_k")
    return trace_a, trace_b, truth


_PRESETS = {
    "attention_block": _preset_attention_block,
    "tf32_misconfig": _preset_tf32,
    "join_redundant": _preset_join,
    "fused_api_misuse": _preset_fused_linear,
    "layout_null": _preset_layout_null,
    "sampler_demo": _preset_sampler,
    "qk_disambiguation": _preset_qk_twins,
}
