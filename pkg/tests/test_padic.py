import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from expander_lab.errors import DomainError, UnsupportedError, UnsupportedModulusError
from expander_lab.modq import INF_VAL, vp_mat
from expander_lab.padic import (
    PadicMat,
    alpha,
    bch_bound,
    bch_defect,
    beta,
    conj_exp_check,
    exp_mod_q,
    exp_trunc,
    exp_trunc_batch,
    log_mod_q,
    log_trace_check,
    log_trunc,
    log_trunc_batch,
    property_sweep,
    random_lie_samples,
    truncation_index,
    verify_word,
    word_synthesize,
)

E12 = np.array([[0, 1], [0, 0]])
E21 = E12.T
I2 = np.eye(2, dtype=int)


def test_domain_constants():
    assert [alpha(p) for p in (2, 3, 5)] == [2, 1, 1]
    assert [beta(p) for p in (2, 3, 5, 7)] == [3, 2, 1, 1]


def test_truncation_index_tail_vanishes():
    # every dropped term x^n / n! has valuation >= m
    for p in (2, 3, 5, 7):
        for m in range(1, 12):
            N = truncation_index(p, m)
            assert N * (alpha(p) - 1 / (p - 1)) >= m - 1e-12


def test_exp_nilpotent_examples():
    assert np.array_equal(exp_trunc(PadicMat(5, 4, 5 * E12)).entries, I2 + 5 * E12)
    assert np.array_equal(exp_trunc(PadicMat(2, 5, 4 * E12)).entries, I2 + 4 * E12)
    assert np.array_equal(log_trunc(PadicMat(5, 4, I2 + 5 * E12)).entries, 5 * E12)
    assert not np.any(log_trunc(PadicMat(3, 4, I2)).entries)


def test_exp_domain_errors():
    with pytest.raises(DomainError):
        exp_trunc(PadicMat(2, 5, 2 * E12))
    with pytest.raises(DomainError):
        log_trunc(PadicMat(5, 4, I2 + E12))


def test_roundtrip_p7_m6():
    rng = np.random.default_rng(7)
    X = random_lie_samples(rng, 7, 1, 6, 3, 200)
    assert np.array_equal(log_trunc_batch(exp_trunc_batch(X, 7, 6), 7, 6), X)


@pytest.mark.parametrize("p", [2, 3, 5, 7])
def test_exp_of_log_roundtrip(p):
    rng = np.random.default_rng(p)
    for m in range(alpha(p) + 1, 11):
        G = (random_lie_samples(rng, p, alpha(p), m, 2, 100) + I2) % p**m
        assert np.array_equal(exp_trunc_batch(log_trunc_batch(G, p, m), p, m), G)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([2, 3, 5, 7, 11]), st.integers(1, 10), st.integers(2, 3), st.integers(0, 2**32))
def test_property_sweep_has_no_failures(p, m, d, seed):
    res = property_sweep(p, m, d, 20, seed)
    assert res["roundtrip_failures"] == res["isometry_failures"] == res["bch_failures"] == 0


def test_homomorphism_on_commuting_pairs():
    p, m = 5, 8
    x = PadicMat(p, m, 5 * np.array([[1, 2], [3, 4]]))
    y = x.with_entries(3 * x.entries)
    lhs = exp_trunc(x.with_entries(x.entries + y.entries)).entries
    rhs = exp_trunc(x).entries.dot(exp_trunc(y).entries) % p**m
    assert np.array_equal(lhs, rhs)


def test_bch_examples():
    x = PadicMat(5, 6, 5 * E12)
    assert bch_defect(x, x.with_entries(0 * E12)) == INF_VAL
    assert bch_defect(x, x.with_entries(3 * x.entries)) == INF_VAL
    v = bch_defect(x, PadicMat(5, 6, 5 * E21))
    assert v == 2 and v >= bch_bound(1, 1, 5)


def test_bch_requires_beta():
    with pytest.raises(DomainError):
        bch_defect(PadicMat(3, 6, 3 * E12), PadicMat(3, 6, 9 * E21))


def test_conj_exp_examples():
    A = np.array([[1, 1], [0, 1]])
    assert conj_exp_check(I2, PadicMat(5, 4, 5 * E21))
    assert conj_exp_check(A, PadicMat(5, 4, 5 * E21))
    rng = np.random.default_rng(3)
    for _ in range(500):
        a = np.array([[1, int(rng.integers(-9, 10))], [0, 1]]) @ np.array([[1, 0], [int(rng.integers(-9, 10)), 1]])
        x = random_lie_samples(rng, 3, 1, 5, 2, 1)[0]
        assert conj_exp_check(a, PadicMat(3, 5, x))


def test_exp_mod_q_examples():
    assert exp_mod_q(0 * E12, 45).is_identity()
    assert exp_mod_q(15 * E12, 15).is_identity()
    assert np.array_equal(exp_mod_q(15 * E12, 225).entries, I2 + 15 * E12)
    with pytest.raises(DomainError, match="prime 3"):
        exp_mod_q(5 * E12, 225)
    with pytest.raises(UnsupportedModulusError):
        exp_mod_q(6 * E12, 6)


def test_exp_mod_q_isometry_and_injectivity():
    rng = np.random.default_rng(11)
    q = 225
    B = [15 * rng.integers(0, 15, size=(2, 2)) for _ in range(50)]
    images = {exp_mod_q(x, q).key for x in B}
    assert len(images) == len({tuple((x % q).ravel()) for x in B})
    for x in B:
        g = exp_mod_q(x, q).entries
        for p, m in ((3, 2), (5, 2)):
            assert vp_mat((g - I2) % p**m, p, m) == vp_mat(x % p**m, p, m)
        assert np.array_equal(log_mod_q(g, q) % q, x % q)


def test_log_trace_check():
    g = exp_mod_q(np.array([[15, 30], [45, -15]]), 225)
    assert log_trace_check(g, 225)


def test_word_synthesize_shapes():
    assert word_synthesize(3, 1) == (((1, 1), (2, 1), (3, 1)), 1)
    assert word_synthesize(2, 2) == (((1, 1), (2, 1)), 1)
    w, D = word_synthesize(2, 3)
    assert D == 12 and isinstance(D, int)
    with pytest.raises(UnsupportedError):
        word_synthesize(2, 4)


@pytest.mark.parametrize("p", [3, 5, 7])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_word_lemma(p, k):
    for s in (1, 2, 3):
        w, D = word_synthesize(s, k)
        ok, worst = verify_word(w, D, s, k, p, 1, trials=50, rng=p * 100 + k)
        assert ok and worst >= k


def test_verify_word_trivial_cases():
    w, D = word_synthesize(1, 3)
    assert verify_word(w, D, 1, 3, 5, 1, trials=20, rng=0) == (True, INF_VAL)
    w, D = word_synthesize(2, 2)
    ok, worst = verify_word(w, D, 2, 2, 5, 1, trials=50, rng=1, commuting=True)
    assert ok and worst >= 3


def test_verify_word_rejects_bad_2_adic_radius():
    w, D = word_synthesize(2, 3)
    with pytest.raises(DomainError):
        verify_word(w, D, 2, 3, 2, 1)


def test_k3_word_at_p2():
    w, D = word_synthesize(2, 3)
    assert verify_word(w, D, 2, 3, 2, 2, trials=100, rng=5)[0]
