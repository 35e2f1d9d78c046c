import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from karst.kron import (
    FlopTally,
    KronPair,
    kron_apply,
    kron_apply_lowrank,
    kron_apply_transpose,
    kron_flops,
    kron_materialize,
    materialized_flops,
    rank_of,
)
from karst.numerics import ShapeError, make_rng, rel_err
from oracles import block_kron

dims = st.integers(1, 5)


def test_identity_kron():
    assert np.array_equal(kron_materialize(KronPair(np.eye(2), np.eye(3))), np.eye(6))


def test_hand_expanded_example():
    # expected value written out block by block: [[1*S, 2*S], [3*S, 4*S]] with S = [[0,1],[1,0]]
    expected = np.array([[0, 1, 0, 2], [1, 0, 2, 0], [0, 3, 0, 4], [3, 0, 4, 0]], dtype=float)
    c, d = np.array([[1.0, 2], [3, 4]]), np.array([[0.0, 1], [1, 0]])
    assert np.array_equal(block_kron(c, d), expected)
    assert np.array_equal(kron_materialize(KronPair(c, d)), expected)


def test_zero_factor_annihilates():
    c = make_rng(0).standard_normal((3, 2))
    assert not kron_materialize(KronPair(c, np.zeros((2, 4)))).any()


@settings(max_examples=60, deadline=None)
@given(p1=dims, q1=dims, p2=dims, q2=dims, seed=st.integers(0, 2**32 - 1))
def test_materialize_matches_block_oracle(p1, q1, p2, q2, seed):
    rng = make_rng(seed)
    c, d = rng.standard_normal((p1, q1)), rng.standard_normal((p2, q2))
    full = kron_materialize(KronPair(c, d))
    assert full.shape == (p1 * p2, q1 * q2)
    assert np.array_equal(full, block_kron(c, d))
    assert np.array_equal(full, np.kron(c, d))


@settings(max_examples=60, deadline=None)
@given(p1=dims, q1=dims, p2=dims, q2=dims, seed=st.integers(0, 2**32 - 1))
def test_structured_apply_matches_materialized(p1, q1, p2, q2, seed):
    rng = make_rng(seed)
    k = KronPair(rng.standard_normal((p1, q1)), rng.standard_normal((p2, q2)))
    x = rng.standard_normal(p1 * p2)
    assert rel_err(kron_apply(k, x), block_kron(k.c, k.d).T @ x) <= 1e-13
    v = rng.standard_normal(q1 * q2)
    assert rel_err(kron_apply_transpose(k, v), block_kron(k.c, k.d) @ v) <= 1e-13


def test_vec_identity_in_column_major_form():
    rng = make_rng(11)
    c, d = rng.standard_normal((2, 2)), rng.standard_normal((3, 4))
    x = rng.standard_normal(6)
    big_x = x.reshape(3, 2, order="F")  # column-major unvec, shape (p2, p1)
    expected = (d.T @ big_x @ c).ravel(order="F")
    assert rel_err(kron_apply(KronPair(c, d), x), expected) <= 1e-13


def test_identity_apply():
    x = make_rng(2).standard_normal(12)
    assert np.allclose(kron_apply(KronPair(np.eye(3), np.eye(4)), x), x, rtol=0, atol=0)


def test_batched_apply_equals_rowwise():
    rng = make_rng(3)
    k = KronPair(rng.standard_normal((2, 3)), rng.standard_normal((4, 2)))
    xs = rng.standard_normal((5, 8))
    batched = kron_apply(k, xs)
    for i in range(5):
        assert rel_err(batched[i], kron_apply(k, xs[i])) <= 1e-15


def test_lowrank_two_step_path():
    rng = make_rng(4)
    c, a, b = rng.standard_normal((3, 3)), rng.standard_normal((5, 2)), rng.standard_normal((2, 4))
    x = rng.standard_normal(15)
    assert rel_err(kron_apply_lowrank(c, a, b, x), block_kron(c, a @ b).T @ x) <= 1e-13


def test_length_mismatch_names_factorization():
    k = KronPair(np.ones((2, 2)), np.ones((3, 3)))
    with pytest.raises(ShapeError, match=r"2\*3"):
        kron_apply(k, np.ones(5))


def test_bilinearity_and_mixed_product():
    rng = make_rng(5)
    for _ in range(20):
        c, d = rng.standard_normal((2, 3)), rng.standard_normal((4, 2))
        alpha = rng.standard_normal()
        assert rel_err(kron_materialize(KronPair(alpha * c, d)), alpha * kron_materialize(KronPair(c, d))) <= 1e-14
        c2, d2 = rng.standard_normal((3, 2)), rng.standard_normal((2, 3))
        lhs = kron_materialize(KronPair(c, d)) @ kron_materialize(KronPair(c2, d2))
        assert rel_err(lhs, kron_materialize(KronPair(c @ c2, d @ d2))) <= 1e-12


def test_flop_closed_forms():
    m, n = 8, 96
    k = KronPair(np.ones((m, m)), np.ones((n, n)))
    assert kron_flops(k) == m * n * (n + m) == 79_872
    assert materialized_flops(k) == m * m * n * n == 589_824


@pytest.mark.parametrize("p1,q1,p2,q2,r", [(2, 3, 4, 5, None), (8, 8, 96, 96, None), (8, 8, 96, 96, 8), (3, 2, 5, 7, 2)])
def test_flops_match_tally(p1, q1, p2, q2, r):
    rng = make_rng(6)
    c = rng.standard_normal((p1, q1))
    x = rng.standard_normal(p1 * p2)
    tally = FlopTally()
    if r is None:
        k = KronPair(c, rng.standard_normal((p2, q2)))
        kron_apply(k, x, tally)
    else:
        k = KronPair(c, np.zeros((p2, q2)))
        kron_apply_lowrank(c, rng.standard_normal((p2, r)), rng.standard_normal((r, q2)), x, tally)
    assert tally.multiplies == kron_flops(k, r)


def test_lowrank_cheaper_exactly_below_threshold():
    p2, q2 = 12, 20  # threshold p2*q2/(p2+q2) = 7.5
    k = KronPair(np.ones((4, 4)), np.ones((p2, q2)))
    for r in range(1, 12):
        assert (kron_flops(k, r) < kron_flops(k)) == (r < p2 * q2 / (p2 + q2))


def test_rank_examples():
    assert rank_of(np.eye(5)) == 5
    rng = make_rng(7)
    assert rank_of(np.outer(rng.standard_normal(4), rng.standard_normal(6))) == 1
    assert rank_of(np.zeros((0, 3))) == 0
    assert rank_of(np.zeros((3, 3))) == 0
    with pytest.raises(ValueError):
        rank_of(np.eye(2), tol=0)


@pytest.mark.parametrize("seed", range(8))
def test_rank_multiplies_under_kron(seed):
    rng = make_rng(seed)
    rc, rd = rng.integers(1, 4, size=2)
    c = rng.standard_normal((4, rc)) @ rng.standard_normal((rc, 3))
    d = rng.standard_normal((3, rd)) @ rng.standard_normal((rd, 5))
    assert rank_of(c) == rc and rank_of(d) == rd
    assert rank_of(kron_materialize(KronPair(c, d))) == rc * rd


def test_non_finite_factor_rejected():
    with pytest.raises(FloatingPointError):
        KronPair(np.array([[np.nan]]), np.eye(2))
