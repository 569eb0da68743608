"""Waste detection over matched subgraph pairs, waste-vs-tradeoff
classification, and report assembly.

A pair is software energy waste only when the energy gap clears the threshold
while the efficient side neither runs more than 1% slower nor produces
outputs differing by more than 1% element-wise; anything that buys its lower
energy with speed or accuracy is a trade-off, not waste.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from . import diagnose
from .energy import EnergyLedger
from .subgraph_match import SubgraphPair
from .trace_model import Trace, elementwise_rel_diff
from . import tensor_equiv

DEFAULT_THRESHOLD = 0.10
THRESHOLD_FLOOR = 0.05
LATENCY_SLACK = 1.01
OUTPUT_DIFF_LIMIT = 0.01

VERDICT_WASTE = "waste"
VERDICT_TRADEOFF = "tradeoff"
VERDICT_BELOW = "below_threshold"


@dataclass(frozen=True)
class WasteFinding:
    pair: SubgraphPair
    energy_a: float
    energy_b: float
    energy_ratio: float  # higher / lower
    latency_a: int
    latency_b: int
    output_rel_diff: float
    verdict: str
    category: str  # misconfiguration | api_misuse | redundant | unknown
    wasteful_side: str  # "A" | "B" | "-"
    wasted_joules: float
    informational: bool  # cleared the 5% floor but not the threshold


def _segment_latency(trace: Trace, op_ids: Sequence[str]) -> int:
    if not op_ids:
        return 0
    ops = [trace.operator(o) for o in op_ids]
    return max(o.end for o in ops) - min(o.start for o in ops)


def _boundary_rel_diff(pair: SubgraphPair, trace_a: Trace, trace_b: Trace) -> float:
    worst = 0.0
    for ta, tb in pair.boundary_right:
        snap_a, snap_b = trace_a.snapshot(ta), trace_b.snapshot(tb)
        if snap_a.shape == snap_b.shape:
            diff = elementwise_rel_diff(snap_a, snap_b)
            if diff > OUTPUT_DIFF_LIMIT:
                # Same shape but a permuted layout reads as a huge element-wise
                # delta; the layout-blind equivalence score is the fair measure.
                _, score = tensor_equiv.tensors_equivalent(snap_a, snap_b, 1.0)
                diff = min(diff, score)
        else:
            _, diff = tensor_equiv.tensors_equivalent(snap_a, snap_b, 1.0)
        worst = max(worst, diff)
    return worst


def detect_waste(
    pairs: Sequence[SubgraphPair],
    ledger_a: EnergyLedger,
    ledger_b: EnergyLedger,
    threshold: float = DEFAULT_THRESHOLD,
    *,
    trace_a: Trace,
    trace_b: Trace,
) -> list[WasteFinding]:
    """One finding per subgraph pair; the higher-energy side is the suspect."""
    if ledger_a.method != ledger_b.method:
        raise ValueError(
            f"ledger method mismatch: {ledger_a.method!r} vs {ledger_b.method!r}"
        )
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")

    findings = []
    for pair in pairs:
        e_a = ledger_a.subgraph_joules(pair.nodes_a)
        e_b = ledger_b.subgraph_joules(pair.nodes_b)
        high, low = max(e_a, e_b), min(e_a, e_b)
        if high == low:
            ratio = 1.0
            side = "-"
        else:
            ratio = high / low if low > 0 else float("inf")
            side = "A" if e_a > e_b else "B"
        lat_a = _segment_latency(trace_a, pair.nodes_a)
        lat_b = _segment_latency(trace_b, pair.nodes_b)
        out_diff = _boundary_rel_diff(pair, trace_a, trace_b)

        if ratio >= 1.0 + threshold:
            lat_eff, lat_ineff = (lat_b, lat_a) if side == "A" else (lat_a, lat_b)
            if lat_eff <= LATENCY_SLACK * lat_ineff and out_diff <= OUTPUT_DIFF_LIMIT:
                verdict = VERDICT_WASTE
            else:
                verdict = VERDICT_TRADEOFF
        else:
            verdict = VERDICT_BELOW

        finding = WasteFinding(
            pair=pair,
            energy_a=e_a,
            energy_b=e_b,
            energy_ratio=ratio,
            latency_a=lat_a,
            latency_b=lat_b,
            output_rel_diff=out_diff,
            verdict=verdict,
            category="unknown",
            wasteful_side=side,
            wasted_joules=high - low,
            informational=verdict == VERDICT_BELOW and ratio >= 1.0 + THRESHOLD_FLOOR,
        )
        if verdict == VERDICT_WASTE:
            finding = _with_category(finding, classify(finding, trace_a, trace_b))
        findings.append(finding)
    return findings


def _with_category(finding: WasteFinding, category: str) -> WasteFinding:
    return WasteFinding(**{**finding.__dict__, "category": category})


def classify(finding: WasteFinding, trace_a: Trace, trace_b: Trace) -> str:
    """Category hint for a waste finding; the diagnose module is authoritative
    for misconfiguration, so that probe runs before the kernel-multiset test."""
    if finding.wasteful_side == "A":
        waste_trace, eff_trace = trace_a, trace_b
        waste_nodes, eff_nodes = finding.pair.nodes_a, finding.pair.nodes_b
    else:
        waste_trace, eff_trace = trace_b, trace_a
        waste_nodes, eff_nodes = finding.pair.nodes_b, finding.pair.nodes_a

    waste_ops = Counter(waste_trace.operator(o).op_name for o in waste_nodes)
    eff_ops = Counter(eff_trace.operator(o).op_name for o in eff_nodes)
    has_extra_ops = bool(waste_ops - eff_ops) and not (eff_ops - waste_ops)
    forced_gaps = diagnose.forced_gap_joules(waste_trace, list(waste_nodes))
    if has_extra_ops or forced_gaps > 1e-9:
        return "redundant"

    report = diagnose.analyze_segment_pair(
        finding.pair.nodes_a, finding.pair.nodes_b, trace_a, trace_b
    )
    if report.diagnosis is not None:
        return "misconfiguration"

    kernels_a = Counter(
        trace_a.kernels[k].kernel_name
        for o in finding.pair.nodes_a
        for k in trace_a.operator(o).kernel_ids
    )
    kernels_b = Counter(
        trace_b.kernels[k].kernel_name
        for o in finding.pair.nodes_b
        for k in trace_b.operator(o).kernel_ids
    )
    if kernels_a != kernels_b:
        return "api_misuse"
    return "unknown"


# ---------------------------------------------------------------------------
# Report


@dataclass(frozen=True)
class Report:
    findings: tuple[WasteFinding, ...]  # ranked by wasted joules, descending
    total_a: float
    total_b: float
    wasted_joules: float
    end_to_end_waste_pct: float
    method: str
    threshold: float

    def waste_findings(self) -> tuple[WasteFinding, ...]:
        return tuple(f for f in self.findings if f.verdict == VERDICT_WASTE)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "method": self.method,
            "threshold": self.threshold,
            "total_joules_a": self.total_a,
            "total_joules_b": self.total_b,
            "wasted_joules": self.wasted_joules,
            "end_to_end_waste_pct": self.end_to_end_waste_pct,
            "findings": [
                {
                    "nodes_a": list(f.pair.nodes_a),
                    "nodes_b": list(f.pair.nodes_b),
                    "energy_a": f.energy_a,
                    "energy_b": f.energy_b,
                    "energy_ratio": f.energy_ratio,
                    "latency_a": f.latency_a,
                    "latency_b": f.latency_b,
                    "output_rel_diff": f.output_rel_diff,
                    "verdict": f.verdict,
                    "category": f.category,
                    "wasteful_side": f.wasteful_side,
                    "wasted_joules": f.wasted_joules,
                    "informational": f.informational,
                }
                for f in self.findings
            ],
        }

    def tsv_lines(self) -> list[str]:
        header = (
            "rank\tverdict\tcategory\tside\twasted_joules\tenergy_a\tenergy_b"
            "\tratio\tlatency_a_us\tlatency_b_us\toutput_rel_diff\tnodes_a\tnodes_b"
        )
        lines = [header]
        for i, f in enumerate(self.findings, start=1):
            lines.append(
                f"{i}\t{f.verdict}\t{f.category}\t{f.wasteful_side}"
                f"\t{f.wasted_joules:.6f}\t{f.energy_a:.6f}\t{f.energy_b:.6f}"
                f"\t{f.energy_ratio:.4f}\t{f.latency_a}\t{f.latency_b}"
                f"\t{f.output_rel_diff:.6f}"
                f"\t{'+'.join(f.pair.nodes_a) or '-'}\t{'+'.join(f.pair.nodes_b) or '-'}"
            )
        return lines

    def summary_text(self) -> str:
        lines = [
            f"differential energy report (method={self.method}, threshold={self.threshold:.2f})",
            f"  total energy: A={self.total_a:.3f} J  B={self.total_b:.3f} J",
            f"  wasted: {self.wasted_joules:.3f} J "
            f"({100.0 * self.end_to_end_waste_pct:.2f}% of the inefficient side)",
        ]
        wastes = self.waste_findings()
        if not wastes:
            lines.append("  no software energy waste detected")
        for f in wastes:
            lines.append(
                f"  [{f.category}] side {f.wasteful_side} wastes {f.wasted_joules:.3f} J "
                f"(x{f.energy_ratio:.2f}) in {'+'.join(f.pair.nodes_a) or '-'} vs "
                f"{'+'.join(f.pair.nodes_b) or '-'}"
            )
        return "\n".join(lines)


def report(
    findings: Sequence[WasteFinding],
    ledger_a: EnergyLedger,
    ledger_b: EnergyLedger,
    threshold: float = DEFAULT_THRESHOLD,
) -> Report:
    """Machine-readable report plus human summary, ranked by wasted joules."""
    ranked = sorted(
        findings,
        key=lambda f: (f.verdict != VERDICT_WASTE, -f.wasted_joules, f.pair.nodes_a),
    )
    wasted = sum(f.wasted_joules for f in ranked if f.verdict == VERDICT_WASTE)
    inefficient_total = max(ledger_a.total_joules, ledger_b.total_joules)
    pct = wasted / inefficient_total if inefficient_total > 0 else 0.0
    return Report(
        findings=tuple(ranked),
        total_a=ledger_a.total_joules,
        total_b=ledger_b.total_joules,
        wasted_joules=wasted,
        end_to_end_waste_pct=pct,
        method=ledger_a.method,
        threshold=threshold,
    )
