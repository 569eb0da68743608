"""Energy attribution: signal integration, the low-rate delayed sampler, and
replay-based power estimation.

Vendor power counters update at 10-50 Hz and lag real power by hundreds of
milliseconds, so integrating their samples over a sub-10 ms kernel mostly
reads whatever the GPU was doing long before the kernel ran. Replaying an
operator back-to-back long enough for the sampler to settle recovers its true
steady power; that estimator lives here alongside exact integration of the
simulated ground-truth signal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .trace_model import OperatorEvent, PowerSample, Trace

US_PER_S = 1_000_000

DEFAULT_SAMPLER_PERIOD_US = 40_000  # 25 Hz, within the 10-50 Hz band
DEFAULT_SAMPLER_DELAY_US = 200_000  # "hundreds of milliseconds"
DEFAULT_REPLAY_REPEAT = 1000
REPLAY_MARGIN = 0.10  # fraction of the replay window discarded at each end

IDLE_OP = "idle"

METHODS = ("ground_truth", "sampled", "replay")


class SignalError(ValueError):
    pass


@dataclass(frozen=True)
class PowerSignal:
    """Piecewise-constant ground truth, or a low-rate sampled view of one."""

    segments: tuple[tuple[int, int, float], ...] = ()  # (start_us, end_us, watts)
    samples: tuple[PowerSample, ...] = ()
    period_us: Optional[int] = None
    delay_us: Optional[int] = None

    @property
    def is_ground_truth(self) -> bool:
        return bool(self.segments)

    def span(self) -> tuple[int, int]:
        if self.segments:
            return self.segments[0][0], self.segments[-1][1]
        if self.samples:
            return self.samples[0].timestamp, self.samples[-1].timestamp
        raise SignalError("empty power signal")

    def value_at(self, t_us: float) -> float:
        """Ground-truth value at a time point, clamped to the signal span."""
        if not self.segments:
            raise SignalError("value_at requires the ground-truth form")
        start, end = self.span()
        t_us = min(max(t_us, start), end)
        for s, e, w in self.segments:
            if s <= t_us < e:
                return w
        return self.segments[-1][2]

    @classmethod
    def from_breakpoints(cls, samples: Sequence[PowerSample], end_us: int) -> "PowerSignal":
        """Interpret trace power records as step-function breakpoints.

        Each record holds its wattage until the next record; the last one
        holds until ``end_us``.
        """
        if not samples:
            raise SignalError("trace carries no power records")
        segs = []
        for cur, nxt in zip(samples, samples[1:]):
            segs.append((cur.timestamp, nxt.timestamp, cur.watts))
        last = samples[-1]
        segs.append((last.timestamp, max(end_us, last.timestamp + 1), last.watts))
        return cls(segments=tuple(segs))


def ground_truth_signal(trace: Trace) -> PowerSignal:
    _, end = trace.span_us()
    return PowerSignal.from_breakpoints(trace.power, end)


def integrate(signal: PowerSignal, interval: tuple[int, int]) -> float:
    """Joules over ``interval``; exact for ground truth, trapezoidal for samples."""
    lo, hi = interval
    if hi < lo:
        raise SignalError("interval end precedes start")
    start, end = signal.span()
    if lo < start or hi > end:
        raise SignalError(f"interval [{lo},{hi}] outside signal span [{start},{end}]")
    if signal.is_ground_truth:
        total = 0.0
        for s, e, w in signal.segments:
            overlap = min(e, hi) - max(s, lo)
            if overlap > 0:
                total += w * overlap
        return total / US_PER_S
    return _integrate_samples(signal.samples, lo, hi)


def _integrate_samples(samples: Sequence[PowerSample], lo: int, hi: int) -> float:
    """Trapezoid over samples, holding the boundary value outside coverage."""
    if not samples:
        raise SignalError("sampled signal has no samples")
    ts = [s.timestamp for s in samples]
    ws = [s.watts for s in samples]

    def value(t: float) -> float:
        if t <= ts[0]:
            return ws[0]
        if t >= ts[-1]:
            return ws[-1]
        for i in range(len(ts) - 1):
            if ts[i] <= t <= ts[i + 1]:
                frac = (t - ts[i]) / (ts[i + 1] - ts[i])
                return ws[i] + frac * (ws[i + 1] - ws[i])
        return ws[-1]

    points = [lo] + [t for t in ts if lo < t < hi] + [hi]
    total = 0.0
    for a, b in zip(points, points[1:]):
        total += 0.5 * (value(a) + value(b)) * (b - a)
    return total / US_PER_S


def mean_power(signal: PowerSignal, interval: tuple[int, int]) -> float:
    lo, hi = interval
    if hi <= lo:
        return 0.0
    return integrate(signal, interval) * US_PER_S / (hi - lo)


# ---------------------------------------------------------------------------
# Low-rate delayed sampler


def sample_signal(
    truth: PowerSignal,
    period_us: int = DEFAULT_SAMPLER_PERIOD_US,
    delay_us: int = DEFAULT_SAMPLER_DELAY_US,
    seed: int = 0,
) -> PowerSignal:
    """Emulate a vendor power counter reading the ground-truth signal.

    Samples are spaced ``period_us`` apart; each reports the truth value at
    (timestamp - delay) where the delay is drawn per sample, uniformly in
    [0.5, 1.5] x ``delay_us``. Deterministic per seed.
    """
    if not truth.is_ground_truth:
        raise SignalError("sample_signal requires a ground-truth signal")
    if period_us <= 0:
        raise SignalError("sampler period must be positive")
    rng = np.random.default_rng(seed)
    start, end = truth.span()
    samples = []
    t = start + period_us
    while t <= end:
        delay = rng.uniform(0.5 * delay_us, 1.5 * delay_us) if delay_us else 0.0
        samples.append(PowerSample(timestamp=t, watts=truth.value_at(t - delay)))
        t += period_us
    if not samples:
        # Degenerate span shorter than one period: read once at the end.
        delay = rng.uniform(0.5 * delay_us, 1.5 * delay_us) if delay_us else 0.0
        samples.append(PowerSample(timestamp=end, watts=truth.value_at(end - delay)))
    return PowerSignal(samples=tuple(samples), period_us=period_us, delay_us=delay_us)


def sampled_view(
    trace: Trace,
    period_us: int = DEFAULT_SAMPLER_PERIOD_US,
    delay_us: int = DEFAULT_SAMPLER_DELAY_US,
    seed: int = 0,
) -> PowerSignal:
    sig = sample_signal(ground_truth_signal(trace), period_us, delay_us, seed)
    start, end = ground_truth_signal(trace).span()
    # Anchor boundary samples so the sampled span covers the trace span.
    samples = list(sig.samples)
    if samples[0].timestamp > start:
        samples.insert(0, PowerSample(timestamp=start, watts=samples[0].watts))
    if samples[-1].timestamp < end:
        samples.append(PowerSample(timestamp=end, watts=samples[-1].watts))
    return PowerSignal(samples=tuple(samples), period_us=period_us, delay_us=delay_us)


# ---------------------------------------------------------------------------
# Replay estimation


@dataclass(frozen=True)
class ReplayEstimate:
    op_id: str
    watts: float
    joules: float
    repeat: int
    samples_used: int


def _op_profile(trace: Trace, op: OperatorEvent, truth: PowerSignal) -> list[tuple[int, int, float]]:
    """The operator's power profile relative to its own start."""
    profile = []
    for s, e, w in truth.segments:
        overlap_lo, overlap_hi = max(s, op.start), min(e, op.end)
        if overlap_hi > overlap_lo:
            profile.append((overlap_lo - op.start, overlap_hi - op.start, w))
    return profile


def replay_estimate(
    trace: Trace,
    op_id: str,
    repeat: int = DEFAULT_REPLAY_REPEAT,
    period_us: int = DEFAULT_SAMPLER_PERIOD_US,
    delay_us: int = DEFAULT_SAMPLER_DELAY_US,
    seed: int = 0,
) -> ReplayEstimate:
    """Estimate an operator's steady power by replaying it back-to-back.

    The single-execution profile is tiled ``repeat`` times, the tiled signal is
    read through the low-rate delayed sampler, and mid-window samples (the
    first and last 10% discarded) are averaged. Energy is that steady power
    times the single-execution duration.
    """
    op = trace.operator(op_id)
    if not op.kernel_ids:
        raise SignalError(f"operator {op_id!r} launched no kernels; nothing to replay")
    if repeat < 1:
        raise SignalError("repeat must be >= 1")
    truth = ground_truth_signal(trace)
    duration = op.end - op.start
    profile = _op_profile(trace, op, truth)

    tiled = []
    for k in range(repeat):
        base = k * duration
        for s, e, w in profile:
            tiled.append((base + s, base + e, w))
    replay_signal = PowerSignal(segments=tuple(tiled))

    sampled = sample_signal(replay_signal, period_us, delay_us, seed)
    total = repeat * duration
    lo, hi = REPLAY_MARGIN * total, (1.0 - REPLAY_MARGIN) * total
    mid = [s.watts for s in sampled.samples if lo <= s.timestamp <= hi]
    if not mid:
        mid = [s.watts for s in sampled.samples]
    watts = float(sum(mid) / len(mid))
    joules = watts * duration / US_PER_S
    return ReplayEstimate(
        op_id=op_id, watts=watts, joules=joules, repeat=repeat, samples_used=len(mid)
    )


# ---------------------------------------------------------------------------
# Ledger


@dataclass(frozen=True)
class EnergyLedger:
    """Per-kernel / per-operator joules plus the idle pseudo-operator."""

    method: str  # ground_truth | sampled | replay
    per_kernel: dict[str, float]
    per_operator: dict[str, float]
    idle_joules: float
    total_joules: float

    def operator_total(self) -> float:
        return sum(self.per_operator.values())

    def subgraph_joules(self, op_ids: Iterable[str]) -> float:
        return sum(self.per_operator[o] for o in op_ids)


def build_ledger(
    trace: Trace,
    method: str = "ground_truth",
    period_us: int = DEFAULT_SAMPLER_PERIOD_US,
    delay_us: int = DEFAULT_SAMPLER_DELAY_US,
    repeat: int = DEFAULT_REPLAY_REPEAT,
    seed: int = 0,
) -> EnergyLedger:
    """Attribute energy to kernels and operators with the chosen method.

    Gaps between kernels inside an operator's interval are attributed to that
    operator; gaps between operators go to the pseudo-operator ``idle``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown energy method {method!r}")
    truth = ground_truth_signal(trace)
    if method == "ground_truth":
        signal = truth
    elif method == "sampled":
        signal = sampled_view(trace, period_us, delay_us, seed)
    else:
        signal = truth  # replay estimates are derived per operator below

    per_kernel: dict[str, float] = {}
    per_operator: dict[str, float] = {}
    for op in trace.operators:
        if method == "replay":
            est = replay_estimate(trace, op.op_id, repeat, period_us, delay_us, seed)
            per_operator[op.op_id] = est.joules
            for kid in op.kernel_ids:
                k = trace.kernels[kid]
                per_kernel[kid] = est.watts * k.duration_us() / US_PER_S
        else:
            per_operator[op.op_id] = integrate(signal, (op.start, op.end))
            for kid in op.kernel_ids:
                k = trace.kernels[kid]
                per_kernel[kid] = integrate(signal, (k.start, k.end))

    start, end = truth.span()
    if method == "replay":
        total = integrate(truth, (start, end))
    else:
        total = integrate(signal, (start, end))
    op_total = sum(per_operator.values())
    idle = max(total - op_total, 0.0)
    return EnergyLedger(
        method=method,
        per_kernel=per_kernel,
        per_operator=per_operator,
        idle_joules=idle,
        total_joules=total,
    )
