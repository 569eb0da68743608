"""diffwatt: trace-driven differential energy debugging.

Compare operator-level traces of two systems running the same workload,
match semantically equivalent subgraphs, attribute energy, flag software
energy waste, and trace it back to the guilty configuration or API choice.
"""

__version__ = "0.1.0"

from .trace_model import Trace, load_trace, save_trace, validate_pairing
from .graph import build_graph, dominators
from .tensor_equiv import invariant_set, singular_values, tensors_equivalent, unfold
from .subgraph_match import match_tensors, recursive_match, segment_cost_report
from .energy import build_ledger, integrate, replay_estimate, sample_signal
from .detect import classify, detect_waste, report
from .diagnose import backward_dataflow, diagnose_finding, find_deviation, find_key_var
from .simulate import ScenarioManifest, fuzz, generate

__all__ = [
    "Trace",
    "load_trace",
    "save_trace",
    "validate_pairing",
    "build_graph",
    "dominators",
    "unfold",
    "singular_values",
    "invariant_set",
    "tensors_equivalent",
    "match_tensors",
    "recursive_match",
    "segment_cost_report",
    "integrate",
    "sample_signal",
    "replay_estimate",
    "build_ledger",
    "detect_waste",
    "classify",
    "report",
    "find_deviation",
    "find_key_var",
    "backward_dataflow",
    "diagnose_finding",
    "ScenarioManifest",
    "generate",
    "fuzz",
]
