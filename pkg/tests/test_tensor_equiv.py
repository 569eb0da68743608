import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffwatt.tensor_equiv import (
    Spectrum,
    invariant_set,
    singular_values,
    spectrum_distance,
    tensors_equivalent,
    unfold,
)

from oracles import gram_eigen_singular_values


# ---------------------------------------------------------------------------
# unfold


def test_unfold_shape_arithmetic():
    t = np.arange(24, dtype=float).reshape(2, 3, 4)
    assert unfold(t, {0, 2}).shape == (8, 3)
    assert unfold(t, {1}).shape == (3, 8)


def test_unfold_order2_identity():
    t = np.arange(6, dtype=float).reshape(2, 3)
    assert np.array_equal(unfold(t, {0}), t)
    assert np.array_equal(unfold(t, {1}), t.T)


def test_unfold_rejects_empty_and_full_subsets():
    t = np.zeros((2, 2))
    with pytest.raises(ValueError):
        unfold(t, set())
    with pytest.raises(ValueError):
        unfold(t, {0, 1})


def test_all_ones_cube_is_rank_one():
    t = np.ones((2, 2, 2))
    for modes in ({0}, {1}, {0, 2}):
        spectrum = singular_values(unfold(t, modes))
        assert len(spectrum.singulars) == 1
        assert spectrum.singulars[0] == pytest.approx(2 * math.sqrt(2), rel=1e-12)
        # Cross-check against the Gram-eigenvalue oracle.
        oracle = gram_eigen_singular_values(unfold(t, modes))
        assert spectrum.singulars[0] == pytest.approx(oracle[0], rel=1e-9)


# ---------------------------------------------------------------------------
# singular_values


def test_identity_and_diagonal():
    assert singular_values(np.eye(2)).singulars == (1.0, 1.0)
    assert singular_values(np.diag([3.0, 1.0])).singulars == (3.0, 1.0)


def test_random_matrix_matches_gram_oracle(rng):
    a = rng.normal(size=(4, 6))
    mine = np.array(singular_values(a).singulars)
    oracle = gram_eigen_singular_values(a)
    oracle = oracle[: len(mine)]
    assert np.allclose(mine, oracle, rtol=1e-9, atol=1e-12)


def test_rejects_non_finite():
    with pytest.raises(ValueError, match="finite"):
        singular_values(np.array([[1.0, np.inf]]))


def test_wide_and_tall_agree(rng):
    a = rng.normal(size=(3, 7))
    assert singular_values(a).singulars == pytest.approx(singular_values(a.T).singulars)


# ---------------------------------------------------------------------------
# invariant_set


def test_set_cardinality_by_order(rng):
    assert len(invariant_set(rng.normal(size=(2, 3))).spectra) == 2
    assert len(invariant_set(rng.normal(size=(2, 3, 4))).spectra) == 6
    assert len(invariant_set(rng.normal(size=5)).spectra) == 1


def test_order2_spectra_are_transpose_twins(rng):
    inv = invariant_set(rng.normal(size=(3, 4)))
    a, b = inv.spectra
    assert a.singulars == pytest.approx(b.singulars, rel=1e-12)


def test_order_cap_enforced():
    with pytest.raises(ValueError, match="cap"):
        invariant_set(np.zeros((2,) * 9))


def test_permuted_copy_has_equal_multiset(rng):
    t = rng.normal(size=(2, 3, 4))
    p = np.transpose(t, (2, 0, 1))
    inv_t = sorted(s.singulars for s in invariant_set(t).spectra)
    inv_p = sorted(s.singulars for s in invariant_set(p).spectra)
    for sa, sb in zip(inv_t, inv_p):
        assert sa == pytest.approx(sb, rel=1e-9)


def test_frobenius_consistency_every_unfolding(rng):
    for _ in range(20):
        order = int(rng.integers(2, 5))
        shape = tuple(int(d) for d in rng.integers(2, 5, size=order))
        t = rng.normal(size=shape)
        fro2 = float(np.sum(t * t))
        for spectrum in invariant_set(t).spectra:
            assert spectrum.sum_squares() == pytest.approx(fro2, rel=1e-9)


# ---------------------------------------------------------------------------
# tensors_equivalent


def test_permuted_layout_matches():
    rng = np.random.default_rng(7)
    t = rng.normal(size=(3, 4, 5))  # e.g. head-first vs sequence-first layouts
    eq, score = tensors_equivalent(t, np.transpose(t, (1, 2, 0)), 1e-3)
    assert eq and score < 1e-9


def test_single_element_10pct_perturbation_detected(rng):
    t = rng.normal(size=(4, 5))
    p = t.copy()
    idx = np.unravel_index(np.argmax(np.abs(p)), p.shape)
    p[idx] *= 1.10
    eq, _ = tensors_equivalent(t, p, 1e-3)
    assert not eq
    # Oracle: the top singular value moves beyond the tolerance.
    s_t = gram_eigen_singular_values(t)
    s_p = gram_eigen_singular_values(p)
    assert np.linalg.norm(s_t - s_p) / np.linalg.norm(s_t) > 1e-3


def test_reshape_merge_matches(rng):
    v = rng.normal(size=6)
    eq, _ = tensors_equivalent(v, v.reshape(2, 3), 1e-3)
    assert eq
    t = rng.normal(size=(2, 3, 4))
    eq, _ = tensors_equivalent(t, t.reshape(6, 4), 1e-3)
    assert eq


def test_element_count_must_match(rng):
    eq, score = tensors_equivalent(rng.normal(size=(2, 3)), rng.normal(size=(2, 4)), 1e-3)
    assert not eq and score == math.inf


def test_snapshot_inputs_accepted(rng):
    from conftest import snapshot

    t = rng.normal(size=(2, 3))
    eq, _ = tensors_equivalent(snapshot("a", t), snapshot("b", t.T), 1e-3)
    assert eq


# Property: symmetry, monotonicity in epsilon, scale sensitivity.

_shapes = st.sampled_from([(4,), (2, 3), (3, 2, 2), (2, 2, 2, 2)])


@st.composite
def _tensor_pair(draw):
    shape = draw(_shapes)
    seed = draw(st.integers(0, 2**20))
    kind = draw(st.sampled_from(["same_permuted", "perturbed", "different"]))
    rng = np.random.default_rng(seed)
    a = rng.normal(size=shape)
    if kind == "same_permuted":
        perm = tuple(rng.permutation(len(shape)).tolist())
        b = np.transpose(a, perm)
    elif kind == "perturbed":
        b = a.copy().ravel()
        b[int(rng.integers(0, b.size))] *= 1.3
        b = b.reshape(shape)
    else:
        b = rng.normal(size=shape)
    return a, b


@given(_tensor_pair(), st.sampled_from([1e-4, 1e-3, 1e-2]))
@settings(max_examples=60, deadline=None)
def test_equivalence_is_symmetric(pair, eps):
    a, b = pair
    assert tensors_equivalent(a, b, eps)[0] == tensors_equivalent(b, a, eps)[0]


@given(_tensor_pair())
@settings(max_examples=60, deadline=None)
def test_monotone_in_epsilon(pair):
    a, b = pair
    verdicts = [tensors_equivalent(a, b, eps)[0] for eps in (1e-5, 1e-3, 1e-1)]
    for small, large in zip(verdicts, verdicts[1:]):
        assert (not small) or large  # equivalent at eps implies equivalent at larger eps


@given(st.floats(min_value=0.011, max_value=0.5), st.integers(0, 2**16))
@settings(max_examples=40, deadline=None)
def test_scale_sensitivity(delta, seed):
    eps = 0.01
    rng = np.random.default_rng(seed)
    t = rng.normal(size=(3, 4))
    eq, _ = tensors_equivalent(t, (1.0 + delta) * t, eps)
    assert not eq


def test_spectrum_trims_rank_noise():
    s = Spectrum.from_values([2.0, 1.0, 1e-13, 1e-15])
    assert s.singulars == (2.0, 1.0)


def test_spectrum_distance_pads_with_zeros():
    a = Spectrum.from_values([2.0, 1.0])
    b = Spectrum.from_values([2.0])
    # |(0, 1)| over the smaller spectrum norm (2.0).
    assert spectrum_distance(a, b) == pytest.approx(0.5)
