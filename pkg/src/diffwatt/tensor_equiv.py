"""Semantic tensor equivalence via multi-mode SVD invariant sets.

Layout transformations (permute, mode-merging reshape) reorder tensor entries
without changing the singular-value spectra of the tensor's unfoldings, so two
recordings of the same logical tensor match even when the systems under
comparison store it differently. An order-r tensor yields one spectrum per
non-trivial mode subset; the collection is compared as a multiset.

Singular values come from a one-sided Jacobi orthogonalization working on the
smaller matrix dimension: deterministic, dependency-free, and accurate at the
sizes this tool sees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

SPECTRUM_FLOOR = 1e-12  # absolute trim threshold for rank noise
DEFAULT_EPSILON = 1e-3
ORDER_CAP = 8
_NORM_FLOOR = 1e-30

_JACOBI_TOL = 1e-14
_JACOBI_MAX_SWEEPS = 60


@dataclass(frozen=True)
class Spectrum:
    """Singular values sorted descending, trimmed below the absolute floor."""

    singulars: tuple[float, ...]

    @classmethod
    def from_values(cls, values: Iterable[float]) -> "Spectrum":
        vals = sorted((float(v) for v in values), reverse=True)
        while vals and vals[-1] < SPECTRUM_FLOOR:
            vals.pop()
        return cls(tuple(vals))

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.singulars))

    def sum_squares(self) -> float:
        return sum(v * v for v in self.singulars)


@dataclass(frozen=True)
class InvariantSet:
    """All unfolding spectra of one tensor; ``source_order`` is its order r."""

    spectra: tuple[Spectrum, ...]
    source_order: int

    def frobenius_norm(self) -> float:
        if not self.spectra:
            return 0.0
        return self.spectra[0].norm()


def _as_array(t) -> np.ndarray:
    """Accept a TensorSnapshot-like object (shape / values attrs) or an ndarray."""
    if isinstance(t, np.ndarray):
        return np.asarray(t, dtype=np.float64)
    return np.asarray(t.values, dtype=np.float64).reshape(tuple(t.shape))


def unfold(t, modes: Iterable[int]) -> np.ndarray:
    """Matricize: modes in ``modes`` become rows, the complement becomes columns.

    Entry mapping uses ascending mode order within each group.
    """
    arr = _as_array(t)
    r = arr.ndim
    group = sorted(set(int(m) for m in modes))
    if not group:
        raise ValueError("mode subset must be non-empty")
    if any(m < 0 or m >= r for m in group):
        raise ValueError(f"mode out of range for order-{r} tensor")
    if len(group) == r:
        raise ValueError("mode subset must be a proper subset of the modes")
    comp = [m for m in range(r) if m not in group]
    rows = int(np.prod([arr.shape[m] for m in group]))
    cols = int(np.prod([arr.shape[m] for m in comp]))
    return arr.transpose(group + comp).reshape(rows, cols)


def _round_robin_rounds(n: int) -> list[list[tuple[int, int]]]:
    players = list(range(n))
    if n % 2:
        players.append(-1)
    k = len(players)
    rounds = []
    for _ in range(k - 1):
        pairs = []
        for i in range(k // 2):
            p, q = players[i], players[k - 1 - i]
            if p != -1 and q != -1:
                pairs.append((min(p, q), max(p, q)))
        rounds.append(pairs)
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _offdiag_measure(a: np.ndarray) -> float:
    g = a.T @ a
    d = np.sqrt(np.clip(np.diag(g), 0.0, None))
    denom = np.outer(d, d)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.abs(g) / denom
    np.fill_diagonal(ratio, 0.0)
    return float(np.nan_to_num(ratio, nan=0.0).max())


def singular_values(mat: np.ndarray) -> Spectrum:
    """Singular values of a real matrix by one-sided Jacobi orthogonalization.

    The iteration runs on whichever side is smaller; rotations within a sweep
    follow a fixed round-robin ordering, so results are deterministic.
    """
    a = np.asarray(mat, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    m, n = a.shape
    if n > m:
        a = a.T
        m, n = n, m
    a = np.array(a, copy=True)
    if n == 1:
        return Spectrum.from_values([math.sqrt(float(a[:, 0] @ a[:, 0]))])

    rounds = _round_robin_rounds(n)
    for _ in range(_JACOBI_MAX_SWEEPS):
        if _offdiag_measure(a) <= _JACOBI_TOL:
            break
        for pairs in rounds:
            ps = np.array([p for p, _ in pairs])
            qs = np.array([q for _, q in pairs])
            cols_p = a[:, ps]
            cols_q = a[:, qs]
            alpha = np.einsum("ij,ij->j", cols_p, cols_p)
            beta = np.einsum("ij,ij->j", cols_q, cols_q)
            gamma = np.einsum("ij,ij->j", cols_p, cols_q)
            scale = np.sqrt(np.clip(alpha * beta, 0.0, None))
            active = np.abs(gamma) > _JACOBI_TOL * np.where(scale > 0, scale, 1.0)
            if not active.any():
                continue
            zeta = np.zeros_like(gamma)
            zeta[active] = (beta[active] - alpha[active]) / (2.0 * gamma[active])
            t = np.zeros_like(gamma)
            t[active] = np.sign(zeta[active]) / (
                np.abs(zeta[active]) + np.sqrt(1.0 + zeta[active] ** 2)
            )
            # sign(0) is 0; treat the symmetric case as a 45-degree rotation
            symmetric = active & (zeta == 0.0)
            t[symmetric] = 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            a[:, ps] = cols_p * c - cols_q * s
            a[:, qs] = cols_p * s + cols_q * c

    norms = np.sqrt(np.einsum("ij,ij->j", a, a))
    return Spectrum.from_values(norms)


def invariant_set(t) -> InvariantSet:
    """Spectra of every non-trivial unfolding (2^r - 2 of them for order r).

    Order-1 tensors have no non-trivial mode subsets; their set degenerates to
    the single spectrum of the 1 x n unfolding, i.e. the Euclidean norm.
    """
    arr = _as_array(t)
    r = arr.ndim
    if r > ORDER_CAP:
        raise ValueError(f"tensor order {r} exceeds the cap of {ORDER_CAP}")
    if r == 1:
        norm = math.sqrt(float(arr @ arr))
        return InvariantSet(spectra=(Spectrum.from_values([norm]),), source_order=1)

    spectra: list[Spectrum] = []
    for mask in range(1, (1 << r) - 1):
        group = [m for m in range(r) if mask & (1 << m)]
        spectra.append(singular_values(unfold(arr, group)))
    return InvariantSet(spectra=tuple(spectra), source_order=r)


def spectrum_distance(a: Spectrum, b: Spectrum) -> float:
    """Relative L2 distance between spectra; shorter one is zero-padded."""
    n = max(len(a.singulars), len(b.singulars))
    if n == 0:
        return 0.0
    diff = 0.0
    for i in range(n):
        va = a.singulars[i] if i < len(a.singulars) else 0.0
        vb = b.singulars[i] if i < len(b.singulars) else 0.0
        diff += (va - vb) ** 2
    denom = max(min(a.norm(), b.norm()), _NORM_FLOOR)
    return math.sqrt(diff) / denom


def _perfect_matching_exists(dist: list[list[float]], limit: float) -> bool:
    """Kuhn's augmenting paths over the pairs within ``limit``."""
    n_large = len(dist[0]) if dist else 0
    adjacency = [
        [j for j in range(n_large) if row[j] <= limit] for row in dist
    ]
    match_of_large: list[Optional[int]] = [None] * n_large

    def try_assign(i: int, visited: set[int]) -> bool:
        for j in adjacency[i]:
            if j in visited:
                continue
            visited.add(j)
            if match_of_large[j] is None or try_assign(match_of_large[j], visited):
                match_of_large[j] = i
                return True
        return False

    return all(try_assign(i, set()) for i in range(len(dist)))


def _embed_injectively(
    small: Sequence[Spectrum], large: Sequence[Spectrum], epsilon: float
) -> Optional[float]:
    """Bottleneck injective embedding of ``small`` into ``large``.

    Returns the smallest achievable max matched-pair distance if it is within
    ``epsilon``, else None. Binary search over the candidate distances keeps
    the score independent of matching order (and so deterministic).
    """
    if not small:
        return 0.0
    dist = [[spectrum_distance(sa, sb) for sb in large] for sa in small]
    levels = sorted({d for row in dist for d in row if d <= epsilon})
    if not levels or not _perfect_matching_exists(dist, levels[-1]):
        return None
    lo, hi = 0, len(levels) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _perfect_matching_exists(dist, levels[mid]):
            hi = mid
        else:
            lo = mid + 1
    return levels[lo]


def tensors_equivalent(
    a,
    b,
    epsilon: float = DEFAULT_EPSILON,
    set_a: Optional[InvariantSet] = None,
    set_b: Optional[InvariantSet] = None,
) -> tuple[bool, float]:
    """Decide semantic equivalence of two tensors at relative tolerance ``epsilon``.

    True iff element counts are equal and, after trimming near-zero singular
    values, the smaller invariant set embeds injectively into the larger with
    every matched spectrum pair within ``epsilon``. The returned score is the
    max matched-pair distance (infinity when no embedding exists).

    Precomputed invariant sets may be passed to amortize the SVD work when one
    tensor participates in many comparisons.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    arr_a, arr_b = _as_array(a), _as_array(b)
    if arr_a.size != arr_b.size:
        return False, math.inf

    norm_a = float(np.sqrt(np.einsum("i,i->", arr_a.ravel(), arr_a.ravel())))
    norm_b = float(np.sqrt(np.einsum("i,i->", arr_b.ravel(), arr_b.ravel())))
    norm_dist = abs(norm_a - norm_b) / max(min(norm_a, norm_b), _NORM_FLOOR)
    if norm_dist > epsilon:
        # Frobenius norm is itself a spectrum invariant: cheap rejection.
        return False, math.inf

    # Order-1 tensors carry no unfolding structure beyond their norm.
    if arr_a.ndim == 1 or arr_b.ndim == 1:
        return norm_dist <= epsilon, norm_dist

    inv_a = set_a if set_a is not None else invariant_set(arr_a)
    inv_b = set_b if set_b is not None else invariant_set(arr_b)
    small, large = inv_a.spectra, inv_b.spectra
    if len(small) > len(large):
        small, large = large, small
    worst = _embed_injectively(small, large, epsilon)
    if worst is None:
        return False, math.inf
    return True, worst
