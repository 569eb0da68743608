import json

import numpy as np
import pytest

from diffwatt import simulate, trace_model
from diffwatt.detect import VERDICT_WASTE, detect_waste
from diffwatt.energy import build_ledger
from diffwatt.graph import build_graph
from diffwatt.simulate import Inefficiency, ManifestError, ScenarioManifest
from diffwatt.subgraph_match import match_tensors, recursive_match


def test_generate_is_deterministic():
    m = ScenarioManifest(workload="d", seed=77, template="transformer", length=1,
                         layout_permute=True)
    a1, b1, t1 = simulate.generate(m)
    a2, b2, t2 = simulate.generate(m)
    assert trace_model.trace_to_lines(a1) == trace_model.trace_to_lines(a2)
    assert trace_model.trace_to_lines(b1) == trace_model.trace_to_lines(b2)
    assert t1 == t2


def test_misconfiguration_magnitude_lands_on_segment():
    m = ScenarioManifest(
        workload="m", seed=78, template="chain", length=4,
        inefficiency=Inefficiency(kind="misconfiguration", target_segment=2,
                                  magnitude=0.125, source_key="matmul.allow_tf32"),
    )
    _, _, truth = simulate.generate(m)
    seg = truth.segments[2]
    assert seg.energy_b == pytest.approx(1.125 * seg.energy_a, rel=1e-6)
    assert truth.wasted_joules == pytest.approx(0.125 * seg.energy_a, rel=1e-6)


def test_redundant_scenario_has_extra_kernels_and_forced_gap():
    m = ScenarioManifest(
        workload="r", seed=79, template="chain", length=3,
        inefficiency=Inefficiency(kind="redundant", target_segment=1, magnitude=0.23),
    )
    ta, tb, truth = simulate.generate(m)
    names_b = {k.kernel_name for k in tb.kernels.values()}
    assert set(truth.extra_kernels) <= names_b
    assert not set(truth.extra_kernels) & {k.kernel_name for k in ta.kernels.values()}
    # forced non-idle gap: some op interval holds power above idle between kernels
    from diffwatt.diagnose import forced_gap_joules

    extra_op = next(op for op in tb.operators if op.op_name == "dist_join")
    assert forced_gap_joules(tb, [extra_op.op_id]) > 0


def test_null_scenario_produces_no_findings_at_floor():
    for m in simulate.null_corpus(500, 3):
        ta, tb, _ = simulate.generate(m)
        g_a, g_b = build_graph(ta), build_graph(tb)
        eq, _ = match_tensors(g_a, g_b)
        res = recursive_match(g_a, g_b, eq)
        la, lb = build_ledger(ta), build_ledger(tb)
        fs = detect_waste(res.pairs, la, lb, 0.05, trace_a=ta, trace_b=tb)
        assert all(f.verdict != VERDICT_WASTE for f in fs)


def test_generated_traces_validate_and_pair():
    for m in simulate.fuzz(501, 4):
        ta, tb, _ = simulate.generate(m)
        report = trace_model.validate_pairing(ta, tb)
        assert report.runs == m.input_batches
        assert report.max_output_rel_diff <= 0.01  # under the 1% output rule


def test_injected_waste_obeys_the_waste_definition():
    for m in simulate.fuzz(502, 6):
        ta, tb, truth = simulate.generate(m)
        seg = truth.segments[m.inefficiency.target_segment]
        lat_a = _segment_wall(ta, seg.ops_a)
        lat_b = _segment_wall(tb, seg.ops_b)
        # efficient side (A) must not be slower by more than 1%
        assert lat_a <= 1.01 * lat_b


def _segment_wall(trace, ops):
    events = [trace.operator(o) for o in ops]
    return max(e.end for e in events) - min(e.start for e in events)


def test_fuzz_deterministic_and_magnitudes_in_range():
    a = simulate.fuzz(333, 10)
    b = simulate.fuzz(333, 10)
    assert a == b
    for m in a:
        assert 0.02 <= m.inefficiency.magnitude <= 0.5
        assert m.inefficiency.kind in simulate.KINDS
    assert simulate.fuzz(334, 10) != a


def test_manifest_json_roundtrip():
    m = ScenarioManifest(
        workload="j", seed=80, template="diamond", layout_permute=True,
        inefficiency=Inefficiency(kind="api_misuse", target_segment=1,
                                  magnitude=0.2, fuse=False),
    )
    again = ScenarioManifest.from_dict(json.loads(json.dumps(m.to_dict(include_expected=False))))
    assert again == m


def test_manifest_validation():
    with pytest.raises(ManifestError):
        ScenarioManifest(workload="x", seed=1, template="ring").validate()
    with pytest.raises(ManifestError):
        ScenarioManifest(workload="x", seed=1, input_batches=1).validate()
    with pytest.raises(ManifestError):
        ScenarioManifest(
            workload="x", seed=1,
            inefficiency=Inefficiency(kind="misconfiguration", target_segment=0,
                                      magnitude=0.1, source_key=""),
        ).validate()
    with pytest.raises(ManifestError):
        ScenarioManifest(
            workload="x", seed=1,
            inefficiency=Inefficiency(kind="redundant", target_segment=0, magnitude=2.5),
        ).validate()


def test_expected_ground_truth_consistency():
    m = ScenarioManifest(
        workload="e", seed=81, template="chain", length=3,
        inefficiency=Inefficiency(kind="api_misuse", target_segment=1, magnitude=0.3),
    )
    truth = simulate.expected_ground_truth(m)
    seg = truth.segments[1]
    assert truth.wasted_joules == pytest.approx(m.inefficiency.magnitude * seg.energy_a, rel=1e-6)
    assert truth.end_to_end_waste_fraction == pytest.approx(
        truth.wasted_joules / truth.total_joules_b, rel=1e-9
    )


def test_write_scenario_emits_loadable_files(tmp_path):
    m = simulate.preset("layout_null")
    path_a, path_b = simulate.write_scenario(m, str(tmp_path))
    ta = trace_model.load_trace(path_a)
    tb = trace_model.load_trace(path_b)
    trace_model.validate_pairing(ta, tb)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["workload"] == m.workload
    truth = json.loads((tmp_path / "ground_truth.json").read_text())
    assert truth["op_count_a"] == len(ta.operators)


def test_layout_permutation_changes_shapes_but_matches():
    m = ScenarioManifest(workload="p", seed=82, template="chain", length=3,
                         layout_permute=True)
    ta, tb, _ = simulate.generate(m)
    permuted = [
        tid for tid in ta.tensors
        if tid in tb.tensors and ta.snapshot(tid).shape != tb.snapshot(tid).shape
    ]
    assert permuted, "expected at least one permuted shared tensor"
    from diffwatt.tensor_equiv import tensors_equivalent

    for tid in permuted:
        eq, _ = tensors_equivalent(ta.snapshot(tid), tb.snapshot(tid), 1e-3)
        assert eq
