"""Command-line interface: validate -> graph -> match -> energy -> detect ->
diagnose -> report, plus the simulator, fuzzer, and self-check.

Exit codes for ``run``: 0 no waste, 2 waste found (reports written), 1 error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

from . import detect as detect_mod
from . import diagnose as diagnose_mod
from . import energy as energy_mod
from . import figures as figures_mod
from . import graph as graph_mod
from . import simulate as simulate_mod
from . import subgraph_match as match_mod
from . import tensor_equiv
from . import trace_model

SEED_ENV = "DIFFWATT_SEED"


@dataclass
class RunConfig:
    epsilon: float = tensor_equiv.DEFAULT_EPSILON
    threshold: float = detect_mod.DEFAULT_THRESHOLD
    method: str = "ground_truth"
    period_us: int = energy_mod.DEFAULT_SAMPLER_PERIOD_US
    delay_us: int = energy_mod.DEFAULT_SAMPLER_DELAY_US
    repeat: int = energy_mod.DEFAULT_REPLAY_REPEAT
    seed: int = 0
    out_dir: str = "diffwatt_out"
    keep_intermediates: bool = False
    verbose: bool = False

    def validate(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.threshold <= 1:
            raise ValueError("threshold must be in (0, 1]")
        if self.method not in energy_mod.METHODS:
            raise ValueError(f"method must be one of {energy_mod.METHODS}")
        if not 1_000 <= self.period_us <= 1_000_000:
            raise ValueError("sampler period must be within [1e3, 1e6] us")
        if self.repeat < 1:
            raise ValueError("repeat must be >= 1")


def _ledger(trace: trace_model.Trace, cfg: RunConfig) -> energy_mod.EnergyLedger:
    return energy_mod.build_ledger(
        trace,
        method=cfg.method,
        period_us=cfg.period_us,
        delay_us=cfg.delay_us,
        repeat=cfg.repeat,
        seed=cfg.seed,
    )


def run_pipeline(path_a: str, path_b: str, cfg: RunConfig) -> tuple[int, Optional[detect_mod.Report]]:
    """The full differential pipeline over two trace files."""
    cfg.validate()
    stage = "load"
    try:
        trace_a = trace_model.load_trace(path_a)
        trace_b = trace_model.load_trace(path_b)
        stage = "pairing"
        pairing = trace_model.validate_pairing(trace_a, trace_b, cfg.epsilon)
        stage = "graph"
        g_a = graph_mod.build_graph(trace_a)
        g_b = graph_mod.build_graph(trace_b)
        stage = "match"
        eq, match_stats = match_mod.match_tensors(g_a, g_b, cfg.epsilon)
        result = match_mod.recursive_match(g_a, g_b, eq)
        stage = "energy"
        ledger_a = _ledger(trace_a, cfg)
        ledger_b = _ledger(trace_b, cfg)
        stage = "detect"
        findings = detect_mod.detect_waste(
            result.pairs, ledger_a, ledger_b, cfg.threshold,
            trace_a=trace_a, trace_b=trace_b,
        )
        report = detect_mod.report(findings, ledger_a, ledger_b, cfg.threshold)
        stage = "diagnose"
        diagnoses = []
        for f in report.waste_findings():
            dr = diagnose_mod.diagnose_finding(f, trace_a, trace_b)
            diagnoses.append(
                {
                    "nodes_a": list(f.pair.nodes_a),
                    "nodes_b": list(f.pair.nodes_b),
                    "kind": dr.primary_kind,
                    "source": dr.source,
                    "details": _diagnosis_details(dr),
                }
            )
        stage = "report"
        _write_reports(cfg, trace_a, trace_b, pairing, eq, result, match_stats, report, diagnoses)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error in stage {stage}: {exc}", file=sys.stderr)
        return 1, None
    print(report.summary_text())
    return (2 if report.waste_findings() else 0), report


def _diagnosis_details(dr: diagnose_mod.DiagnosisReport) -> list[dict]:
    out: list[dict] = []
    for d in dr.details:
        if isinstance(d, diagnose_mod.Diagnosis):
            out.append(
                {
                    "kind": d.kind,
                    "deviation_index": d.deviation.index,
                    "deviation_func": d.deviation.func,
                    "frames": [d.deviation.frame_a, d.deviation.frame_b],
                    "key_variable": d.key_variable,
                    "control_kind": d.control_kind,
                    "source": d.source,
                    "chains": [
                        {
                            "source": c.source,
                            "hops": [
                                {"var": e.var, "from": e.source, "site": e.site}
                                for e in c.edges
                            ],
                        }
                        for c in d.chains
                    ],
                }
            )
        elif isinstance(d, diagnose_mod.ApiMisuseExplanation):
            out.append(
                {
                    "kind": d.kind,
                    "kernels_a": list(d.kernels_a),
                    "kernels_b": list(d.kernels_b),
                }
            )
        elif isinstance(d, diagnose_mod.RedundantExplanation):
            out.append(
                {
                    "kind": d.kind,
                    "side": d.side,
                    "extra_kernels": [
                        {"kernel_id": kid, "kernel_name": name, "joules": j}
                        for kid, name, j in d.extra_kernels
                    ],
                    "forced_gap_joules": d.forced_gap_joules,
                }
            )
        elif isinstance(d, diagnose_mod.ParameterDelta):
            out.append(
                {
                    "kind": d.kind,
                    "kernel_a": d.kernel_a,
                    "kernel_b": d.kernel_b,
                    "deltas": [list(t) for t in d.deltas],
                    "sources": list(d.sources),
                }
            )
    return out


def _write_reports(cfg, trace_a, trace_b, pairing, eq, result, match_stats, report, diagnoses):
    os.makedirs(cfg.out_dir, exist_ok=True)
    doc = report.to_dict()
    doc["config"] = {
        "epsilon": cfg.epsilon,
        "threshold": cfg.threshold,
        "method": cfg.method,
        "period_us": cfg.period_us,
        "delay_us": cfg.delay_us,
        "repeat": cfg.repeat,
        "seed": cfg.seed,
    }
    doc["pairing"] = {
        "workload": pairing.workload,
        "runs": pairing.runs,
        "max_output_rel_diff": pairing.max_output_rel_diff,
    }
    seg_report = match_mod.segment_cost_report(result)
    doc["matching"] = {
        "pair_count": seg_report.pair_count,
        "avg_size": seg_report.avg_size,
        "max_size": seg_report.max_size,
        "coarse_count": seg_report.coarse_count,
        "dropped_cut_pairs": seg_report.dropped_cut_pairs,
        "wall_time_s": seg_report.wall_time_s,
        "candidate_pairs": match_stats.candidate_pairs,
        "full_checks": match_stats.full_checks,
    }
    doc["diagnoses"] = diagnoses
    with open(os.path.join(cfg.out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    with open(os.path.join(cfg.out_dir, "findings.tsv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(report.tsv_lines()) + "\n")
    with open(os.path.join(cfg.out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.summary_text() + "\n")
    figures_mod.render_report_figures(
        report, trace_a, trace_b, os.path.join(cfg.out_dir, "figures")
    )
    if cfg.keep_intermediates:
        inter = {
            "tensor_pairs": [
                {"tensor_a": p.tensor_a, "tensor_b": p.tensor_b, "score": p.score,
                 "confirmed_runs": list(p.confirmed_runs)}
                for p in eq.pairs
            ],
            "subgraph_pairs": [
                {"nodes_a": list(p.nodes_a), "nodes_b": list(p.nodes_b),
                 "depth": p.depth, "coarse": p.coarse}
                for p in result.pairs
            ],
        }
        with open(os.path.join(cfg.out_dir, "intermediates.json"), "w", encoding="utf-8") as fh:
            json.dump(inter, fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Self-check


def selfcheck(out_dir: Optional[str] = None, threshold: float = 0.10) -> tuple[bool, list[str]]:
    """Run the built-in canonical scenarios and check each expected outcome."""
    lines: list[str] = []
    ok_all = True

    def check(name: str, ok: bool, detail: str = "") -> None:
        nonlocal ok_all
        ok_all &= ok
        lines.append(f"{'PASS' if ok else 'FAIL'} {name}{(': ' + detail) if detail else ''}")

    # (a) canonical attention-block partition
    ta, tb, _ = simulate_mod.generate(simulate_mod.preset("attention_block"))
    g_a, g_b = graph_mod.build_graph(ta), graph_mod.build_graph(tb)
    eq, _ = match_mod.match_tensors(g_a, g_b)
    res = match_mod.recursive_match(g_a, g_b, eq)
    got = {(p.nodes_a, p.nodes_b) for p in res.pairs}
    want = {
        (("a_attn0", "a_k0", "a_q0", "a_v0"), ("b_attn0", "b_qkv0", "b_split0")),
        (("a_add0", "a_mul0"), ("b_linear0",)),
    }
    check("attention-block partition", got == want, f"{sorted(got)}")

    # (b) misconfiguration preset: 12.5% end-to-end, config source recovered
    code, report = _run_preset("tf32_misconfig", threshold)
    ok = (
        code == 2
        and report is not None
        and abs(report.end_to_end_waste_pct - 0.125) <= 0.01
    )
    src = _first_diagnosis_source("tf32_misconfig")
    ok = ok and src == "config:matmul.allow_tf32"
    check(
        "misconfiguration preset (12.5% end-to-end)",
        ok,
        f"pct={100 * (report.end_to_end_waste_pct if report else 0):.2f}% source={src}",
    )

    # (c) redundant preset: ~23% attributed to extra comm kernels + forced gaps
    code, report = _run_preset("join_redundant", threshold)
    ok = (
        code == 2
        and report is not None
        and abs(report.end_to_end_waste_pct - 0.23) <= 0.02
        and all(f.category == "redundant" for f in report.waste_findings())
    )
    check(
        "redundant preset (~23% end-to-end)",
        ok,
        f"pct={100 * (report.end_to_end_waste_pct if report else 0):.2f}%",
    )

    # (d) sampler demo: direct sampling badly wrong, replay accurate
    rows, direct_bad, replay_good = sampler_demo_table(seeds=20)
    check(
        "sampler-vs-replay fidelity",
        direct_bad and replay_good,
        "; ".join(f"{n}: direct {100 * (s - t) / t:+.0f}%, replay {100 * (r - t) / t:+.0f}%"
                  for n, t, s, r in rows),
    )
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        figures_mod.render_sampler_errors(rows, os.path.join(out_dir, "sampler_errors.png"))

    # (e) layout-permuted null scenario: nothing flagged at the 5% floor
    ta, tb, _ = simulate_mod.generate(simulate_mod.preset("layout_null"))
    g_a, g_b = graph_mod.build_graph(ta), graph_mod.build_graph(tb)
    eq, _ = match_mod.match_tensors(g_a, g_b)
    res = match_mod.recursive_match(g_a, g_b, eq)
    la, lb = energy_mod.build_ledger(ta), energy_mod.build_ledger(tb)
    findings = detect_mod.detect_waste(res.pairs, la, lb, 0.05, trace_a=ta, trace_b=tb)
    n_waste = sum(1 for f in findings if f.verdict == detect_mod.VERDICT_WASTE)
    covered = set().union(*[set(p.nodes_a) for p in res.pairs]) == set(
        op.op_id for op in ta.operators
    )
    check("layout-permuted null scenario", n_waste == 0 and covered, f"waste={n_waste}")

    return ok_all, lines


def _run_preset(name: str, threshold: float) -> tuple[int, Optional[detect_mod.Report]]:
    import tempfile

    manifest = simulate_mod.preset(name)
    with tempfile.TemporaryDirectory() as tmp:
        path_a, path_b = simulate_mod.write_scenario(manifest, tmp)
        cfg = RunConfig(threshold=threshold, out_dir=os.path.join(tmp, "out"))
        return run_pipeline(path_a, path_b, cfg)


def _first_diagnosis_source(name: str) -> Optional[str]:
    ta, tb, _ = simulate_mod.generate(simulate_mod.preset(name))
    g_a, g_b = graph_mod.build_graph(ta), graph_mod.build_graph(tb)
    eq, _ = match_mod.match_tensors(g_a, g_b)
    res = match_mod.recursive_match(g_a, g_b, eq)
    la, lb = energy_mod.build_ledger(ta), energy_mod.build_ledger(tb)
    findings = detect_mod.detect_waste(res.pairs, la, lb, trace_a=ta, trace_b=tb)
    for f in findings:
        if f.verdict == detect_mod.VERDICT_WASTE:
            return diagnose_mod.diagnose_finding(f, ta, tb).source
    return None


def sampler_demo_table(seeds: int = 20) -> tuple[list[tuple[str, float, float, float]], bool, bool]:
    """Mean truth/direct/replay power per demo operator, averaged over seeds."""
    trace, _, _ = simulate_mod.sampler_demo_traces()
    truth = energy_mod.ground_truth_signal(trace)
    rows = []
    direct_bad = False
    replay_good = True
    for op in trace.operators:
        t_w = energy_mod.mean_power(truth, (op.start, op.end))
        d_sum = r_sum = 0.0
        for seed in range(seeds):
            view = energy_mod.sampled_view(trace, seed=seed)
            d_sum += energy_mod.mean_power(view, (op.start, op.end))
            r_sum += energy_mod.replay_estimate(trace, op.op_id, seed=seed).watts
        d_w, r_w = d_sum / seeds, r_sum / seeds
        rows.append((op.op_name, t_w, d_w, r_w))
        if abs(d_w - t_w) / t_w >= 0.50:
            direct_bad = True
        if abs(r_w - t_w) / t_w > 0.05:
            replay_good = False
    return rows, direct_bad, replay_good


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_validate(args) -> int:
    trace = trace_model.load_trace(args.trace)
    print(
        f"OK {args.trace}: system={trace.header.system!r} workload={trace.header.workload!r} "
        f"ops={len(trace.operators)} kernels={len(trace.kernels)} "
        f"tensors={len(trace.tensors)} runs={trace.run_count}"
    )
    return 0


def _cmd_graph(args) -> int:
    trace = trace_model.load_trace(args.trace)
    g = graph_mod.build_graph(trace)
    dot = graph_mod.to_dot(g)
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(dot + "\n")
        print(f"wrote {args.dot} ({len(g.nodes)} nodes, {len(g.edges)} edges)")
    else:
        print(dot)
    return 0


def _cmd_tensors(args) -> int:
    trace_a = trace_model.load_trace(args.trace_a)
    trace_b = trace_model.load_trace(args.trace_b)
    g_a, g_b = graph_mod.build_graph(trace_a), graph_mod.build_graph(trace_b)
    eq, stats = match_mod.match_tensors(g_a, g_b, args.epsilon)
    for p in eq.pairs:
        print(f"{p.tensor_a}\t{p.tensor_b}\t{p.score:.3e}\truns={len(p.confirmed_runs)}")
    print(
        f"# {len(eq)} pairs, {stats.candidate_pairs} candidates, "
        f"{stats.full_checks} full checks, {stats.wall_time_s:.3f}s",
        file=sys.stderr,
    )
    return 0


def _cmd_match(args) -> int:
    trace_a = trace_model.load_trace(args.trace_a)
    trace_b = trace_model.load_trace(args.trace_b)
    trace_model.validate_pairing(trace_a, trace_b, args.epsilon)
    g_a, g_b = graph_mod.build_graph(trace_a), graph_mod.build_graph(trace_b)
    eq, _ = match_mod.match_tensors(g_a, g_b, args.epsilon)
    res = match_mod.recursive_match(g_a, g_b, eq)
    doc = {
        "pairs": [
            {
                "nodes_a": list(p.nodes_a),
                "nodes_b": list(p.nodes_b),
                "boundary_left": [list(t) for t in p.boundary_left],
                "boundary_right": [list(t) for t in p.boundary_right],
                "depth": p.depth,
                "coarse": p.coarse,
            }
            for p in res.pairs
        ],
        "dropped_cut_pairs": [list(t) for t in res.dropped_cut_pairs],
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    print(match_mod.segment_cost_report(res).summary())
    return 0


def _cmd_energy(args) -> int:
    trace = trace_model.load_trace(args.trace)
    ledger = energy_mod.build_ledger(
        trace,
        method=args.method,
        period_us=args.period_us,
        delay_us=args.delay_us,
        repeat=args.repeat,
        seed=args.seed,
    )
    doc = {
        "method": ledger.method,
        "total_joules": ledger.total_joules,
        "idle_joules": ledger.idle_joules,
        "per_operator": dict(sorted(ledger.per_operator.items())),
        "per_kernel": dict(sorted(ledger.per_kernel.items())),
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_detect(args) -> int:
    cfg = RunConfig(
        epsilon=args.epsilon,
        threshold=args.threshold,
        method=args.method,
        period_us=args.period_us,
        delay_us=args.delay_us,
        repeat=args.repeat,
        seed=args.seed,
    )
    cfg.validate()
    trace_a = trace_model.load_trace(args.trace_a)
    trace_b = trace_model.load_trace(args.trace_b)
    trace_model.validate_pairing(trace_a, trace_b, cfg.epsilon)
    g_a, g_b = graph_mod.build_graph(trace_a), graph_mod.build_graph(trace_b)
    eq, _ = match_mod.match_tensors(g_a, g_b, cfg.epsilon)
    res = match_mod.recursive_match(g_a, g_b, eq)
    ledger_a, ledger_b = _ledger(trace_a, cfg), _ledger(trace_b, cfg)
    findings = detect_mod.detect_waste(
        res.pairs, ledger_a, ledger_b, cfg.threshold, trace_a=trace_a, trace_b=trace_b
    )
    report = detect_mod.report(findings, ledger_a, ledger_b, cfg.threshold)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    print(report.summary_text())
    return 2 if report.waste_findings() else 0


def _cmd_diagnose(args) -> int:
    trace_a = trace_model.load_trace(args.trace_a)
    trace_b = trace_model.load_trace(args.trace_b)
    with open(args.findings, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    out = []
    for f in doc.get("findings", []):
        if f.get("verdict") != detect_mod.VERDICT_WASTE:
            continue
        dr = diagnose_mod.analyze_segment_pair(
            f["nodes_a"], f["nodes_b"], trace_a, trace_b
        )
        out.append(
            {
                "nodes_a": f["nodes_a"],
                "nodes_b": f["nodes_b"],
                "kind": dr.primary_kind,
                "source": dr.source,
                "details": _diagnosis_details(dr),
            }
        )
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump({"diagnoses": out}, fh, indent=2, sort_keys=True)
    for d in out:
        print(f"{d['kind']}: {d['source'] or '-'} ({'+'.join(d['nodes_a'])})")
    return 0


def _cmd_run(args) -> int:
    cfg = RunConfig(
        epsilon=args.epsilon,
        threshold=args.threshold,
        method=args.method,
        period_us=args.period_us,
        delay_us=args.delay_us,
        repeat=args.repeat,
        seed=args.seed,
        out_dir=args.out_dir,
        keep_intermediates=args.keep_intermediates,
    )
    code, _ = run_pipeline(args.trace_a, args.trace_b, cfg)
    return code


def _cmd_simulate(args) -> int:
    if args.preset:
        manifest = simulate_mod.preset(args.preset)
    else:
        with open(args.manifest, "r", encoding="utf-8") as fh:
            manifest = simulate_mod.ScenarioManifest.from_dict(json.load(fh))
    env_seed = os.environ.get(SEED_ENV)
    if env_seed:
        from dataclasses import replace

        manifest = replace(manifest, seed=int(env_seed))
    path_a, path_b = simulate_mod.write_scenario(manifest, args.out_dir)
    print(f"wrote {path_a} and {path_b}")
    return 0


def _cmd_fuzz(args) -> int:
    seed = int(os.environ.get(SEED_ENV, args.seed))
    manifests = simulate_mod.fuzz(seed, args.count)
    os.makedirs(args.out_dir, exist_ok=True)
    for i, m in enumerate(manifests):
        sub = os.path.join(args.out_dir, f"scenario_{i:03d}")
        simulate_mod.write_scenario(m, sub)
    print(f"wrote {len(manifests)} scenarios under {args.out_dir}")
    return 0


def _cmd_selfcheck(args) -> int:
    ok, lines = selfcheck(out_dir=args.out_dir, threshold=args.threshold)
    print("\n".join(lines))
    print("selfcheck:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


def _add_energy_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", default="ground_truth", choices=energy_mod.METHODS)
    p.add_argument("--period-us", dest="period_us", type=int,
                   default=energy_mod.DEFAULT_SAMPLER_PERIOD_US)
    p.add_argument("--delay-us", dest="delay_us", type=int,
                   default=energy_mod.DEFAULT_SAMPLER_DELAY_US)
    p.add_argument("--repeat", type=int, default=energy_mod.DEFAULT_REPLAY_REPEAT)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffwatt",
        description="Differential energy debugger over operator-level traces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="load and validate a trace file")
    p.add_argument("trace")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("graph", help="emit the computational graph as DOT")
    p.add_argument("trace")
    p.add_argument("--dot", default=None)
    p.set_defaults(func=_cmd_graph)

    p = sub.add_parser("tensors", help="print matched tensor pairs with scores")
    p.add_argument("trace_a")
    p.add_argument("trace_b")
    p.add_argument("--epsilon", type=float, default=tensor_equiv.DEFAULT_EPSILON)
    p.set_defaults(func=_cmd_tensors)

    p = sub.add_parser("match", help="emit equivalent subgraph pairs")
    p.add_argument("trace_a")
    p.add_argument("trace_b")
    p.add_argument("--epsilon", type=float, default=tensor_equiv.DEFAULT_EPSILON)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("energy", help="emit an energy ledger for one trace")
    p.add_argument("trace")
    _add_energy_args(p)
    p.set_defaults(func=_cmd_energy)

    p = sub.add_parser("detect", help="detect energy waste between two traces")
    p.add_argument("trace_a")
    p.add_argument("trace_b")
    p.add_argument("--epsilon", type=float, default=tensor_equiv.DEFAULT_EPSILON)
    p.add_argument("--threshold", type=float, default=detect_mod.DEFAULT_THRESHOLD)
    p.add_argument("--out", required=True)
    _add_energy_args(p)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("diagnose", help="diagnose waste findings to root causes")
    p.add_argument("trace_a")
    p.add_argument("trace_b")
    p.add_argument("--findings", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("run", help="full pipeline; exit 0 clean, 2 waste, 1 error")
    p.add_argument("trace_a")
    p.add_argument("trace_b")
    p.add_argument("--epsilon", type=float, default=tensor_equiv.DEFAULT_EPSILON)
    p.add_argument("--threshold", type=float, default=detect_mod.DEFAULT_THRESHOLD)
    p.add_argument("--out-dir", dest="out_dir", default="diffwatt_out")
    p.add_argument("--keep-intermediates", action="store_true")
    _add_energy_args(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("simulate", help="generate a scenario trace pair")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--manifest")
    group.add_argument("--preset", choices=simulate_mod.preset_names())
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fuzz", help="generate a corpus of random scenarios")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=_cmd_fuzz)

    p = sub.add_parser("selfcheck", help="run the built-in canonical scenarios")
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.add_argument("--threshold", type=float, default=detect_mod.DEFAULT_THRESHOLD)
    p.set_defaults(func=_cmd_selfcheck)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (trace_model.TraceError, graph_mod.GraphBuildError,
            match_mod.MatchPreconditionError, diagnose_mod.DiagnoseError,
            simulate_mod.ManifestError, energy_mod.SignalError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
