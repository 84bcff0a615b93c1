import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from expander_lab.errors import DomainError
from expander_lab.grpenum import GeneratorSet, enumerate_group
from expander_lab.spectral import (
    REPORT_FIELDS,
    WalkOperator,
    cheeger_bounds,
    diameter,
    edge_expansion_exhaustive,
    family_scan,
    lambda2,
    reports_csv,
    reports_json,
    spectral_report,
    uniform_on_generators,
    uniform_on_group,
    walk_operator_apply,
)
from expander_lab.walk import SparseMeasure

ORDER3 = np.array([[0, -1], [1, -1]])  # an element of order 3 in SL_2(Z)


def cyclic3():
    return enumerate_group(GeneratorSet(2, [ORDER3], symmetric=True), 5)


def test_operator_basics(sl2_table):
    T = sl2_table(3)
    mu = uniform_on_generators(T)
    ones = np.ones(len(T))
    assert np.array_equal(walk_operator_apply(T, mu, ones), ones)
    f = np.random.default_rng(0).standard_normal(len(T))
    assert np.array_equal(walk_operator_apply(T, SparseMeasure.point(0), f), f)


def test_matvec_matches_dense_double_sum(sl2_table):
    T = sl2_table(3)
    mu = uniform_on_generators(T)
    f = np.random.default_rng(1).standard_normal(len(T))
    inv = T.inverse
    expect = np.zeros(len(T))
    for x in range(len(T)):
        for g, w in mu.support.items():
            expect[x] += float(w) * f[int(T.mul(inv[g], x))]
    assert np.allclose(walk_operator_apply(T, mu, f), expect, atol=1e-14)
    assert np.allclose(WalkOperator(T, mu).dense_matrix() @ f, expect, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32))
def test_self_adjoint(seed):
    T = enumerate_group(GeneratorSet(2, [np.array([[1, 1], [0, 1]]), np.array([[1, 0], [1, 1]])], symmetric=True), 7)
    op = WalkOperator(T, uniform_on_generators(T))
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal((2, len(T)))
    assert abs(op(f) @ g - f @ op(g)) < 1e-12 * max(1, np.abs(f).sum() * np.abs(g).sum())


def test_lambda2_examples(sl2_table):
    T = sl2_table(5)
    assert abs(lambda2(T, uniform_on_group(T)).lambda2) < 1e-12
    C3 = cyclic3()
    assert len(C3) == 3
    res = lambda2(C3, uniform_on_generators(C3))
    assert res.lambda2 == pytest.approx(-0.5, abs=1e-12)


@pytest.mark.parametrize("q", [2, 3, 4, 5, 7, 8, 9, 13])
def test_dense_lanczos_power_agree(sl2_table, q):
    T = sl2_table(q)
    mu = uniform_on_generators(T)
    dense = lambda2(T, mu, method="dense")
    lanc = lambda2(T, mu, method="lanczos")
    assert abs(dense.lambda2 - lanc.lambda2) < 1e-8
    assert abs(dense.lambda_min - lanc.lambda_min) < 1e-8
    if q in (5, 7):
        assert abs(lambda2(T, mu, method="power").lambda2 - dense.lambda2) < 1e-8


def test_lambda2_rejects_asymmetric(sl2_table):
    T = sl2_table(5)
    g = int(T.generator_ordinals()[0])
    with pytest.raises(DomainError):
        lambda2(T, SparseMeasure({g: Fraction(1)}))


def test_disconnected_support_is_flagged(sl2_table):
    T = sl2_table(5)
    g = int(T.generator_ordinals()[0])
    mu = SparseMeasure({g: Fraction(1, 2), int(T.inverse[g]): Fraction(1, 2)})
    res = lambda2(T, mu)
    assert res.components > 1 and res.lambda2 == pytest.approx(1)


def test_diameter_examples(sl2_table):
    assert diameter(sl2_table(1)) == 0
    T = sl2_table(5)
    assert diameter(T, np.arange(1, len(T))) == 1
    assert diameter(T) == 6


def test_diameter_conjugation_invariant(S, sl2_table):
    h = np.array([[2, 1], [1, 1]])
    T = enumerate_group(S.conjugate(h), 7)
    assert diameter(T) == diameter(sl2_table(7))


def test_cheeger_examples():
    assert cheeger_bounds(1) == (0, 0)
    assert cheeger_bounds(0) == pytest.approx((0.5, math.sqrt(2)))
    assert cheeger_bounds(-0.5) == pytest.approx((0.75, math.sqrt(3)))


def test_cheeger_brackets_exhaustive_expansion(sl2_table):
    T = sl2_table(3)
    mu = uniform_on_generators(T)
    h = edge_expansion_exhaustive(T, mu)
    lo, hi = cheeger_bounds(lambda2(T, mu).lambda2)
    assert lo - 1e-12 <= h <= hi + 1e-12


def test_family_scan_small(S):
    scan = family_scan(S, [5])
    assert scan.C_hat == pytest.approx(6 / math.log(5))
    scan = family_scan(S, [5, 7], measure=uniform_on_group)
    assert all(r.gap == pytest.approx(1) for r in scan.reports)


def test_family_scan_records_failures(S):
    scan = family_scan(S, [5, 61], cap=1000)
    assert 61 in scan.failures and len(scan.reports) == 1


def test_report_schema(sl2_table):
    T = sl2_table(5)
    rep = spectral_report(T, uniform_on_generators(T))
    row = json.loads(reports_json([rep]))[0]
    assert tuple(row) == REPORT_FIELDS
    assert reports_csv([rep]).splitlines()[0] == ",".join(REPORT_FIELDS)
    assert rep.cheeger[0] <= rep.cheeger[1]
