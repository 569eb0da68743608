import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from diffwatt.trace_model import (
    KernelEvent,
    OperatorEvent,
    PowerSample,
    TensorSnapshot,
    Trace,
    TraceHeader,
    _round9,
)


def snapshot(tensor_id: str, values, shape=None) -> TensorSnapshot:
    arr = np.asarray(values, dtype=np.float64)
    if shape is not None:
        arr = arr.reshape(shape)
    return TensorSnapshot(
        tensor_id=tensor_id,
        shape=tuple(arr.shape),
        values=tuple(_round9(v) for v in arr.ravel().tolist()),
    )


def dag_trace(
    preds: dict[str, list[str]],
    values: dict[str, list[np.ndarray]],
    workload: str = "dag",
    system: str = "X",
    op_names: dict[str, str] | None = None,
    watts: float = 200.0,
    backtraces: dict[str, tuple[str, ...]] | None = None,
) -> Trace:
    """Build a trace from adjacency: each op consumes its predecessors'
    output tensors (tensor id = f"t_{op}"), roots consume "x0".

    ``values`` maps tensor ids to one array per run; missing entries get
    deterministic per-trace randoms.
    """
    import zlib

    op_ids = list(preds)
    runs = max((len(v) for v in values.values()), default=2)
    rng = np.random.default_rng(zlib.crc32(f"{workload}/{system}".encode()))
    tensors: dict[str, tuple[TensorSnapshot, ...]] = {}

    def put(tid: str, shape=(2, 3)):
        if tid in tensors:
            return
        if tid in values:
            snaps = [snapshot(tid, v) for v in values[tid]]
        else:
            snaps = [snapshot(tid, rng.normal(size=shape)) for _ in range(runs)]
        tensors[tid] = tuple(snaps)

    put("x0")
    operators = []
    kernels = {}
    power = [PowerSample(timestamp=0, watts=75.0)]
    cursor = 1000
    for i, op in enumerate(op_ids):
        ins = tuple(f"t_{p}" for p in preds[op]) or ("x0",)
        out = f"t_{op}"
        put(out)
        kid = f"k_{op}"
        kernels[kid] = KernelEvent(
            kernel_id=kid,
            kernel_name=f"{op}_kernel",
            correlation_id=i + 1,
            start=cursor,
            end=cursor + 800,
            backtrace=(backtraces or {}).get(op, ("main", "fwd", f"{op}_kernel_launch")),
        )
        power.append(PowerSample(timestamp=cursor, watts=watts))
        power.append(PowerSample(timestamp=cursor + 800, watts=75.0))
        operators.append(
            OperatorEvent(
                op_id=op,
                op_name=(op_names or {}).get(op, op),
                input_tensor_ids=ins,
                output_tensor_ids=(out,),
                kernel_ids=(kid,),
                start=cursor,
                end=cursor + 1000,
            )
        )
        cursor += 1500
    return Trace(
        header=TraceHeader(schema_version=1, system=system, workload=workload, seed=0),
        tensors=tensors,
        operators=tuple(operators),
        kernels=kernels,
        power=tuple(power),
        blocktraces=(),
        progmodel=None,
        config={"idle_watts": 75.0},
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260808)
