import numpy as np
import pytest

from expander_lab.errors import CapExceededError, DomainError, InvariantViolation
from expander_lab.grpenum import GeneratorSet, enumerate_group
from expander_lab.qr import (
    character_degrees,
    conjugacy_classes,
    gowers_cover_check,
    min_degree,
    min_proper_index_exhaustive,
    min_proper_index_probe,
    nonsplit_probe,
    qr_report,
    section_defect_search,
    teichmuller_torus,
)


@pytest.fixture(scope="module")
def cyclic3():
    return enumerate_group(GeneratorSet(2, [np.array([[0, -1], [1, -1]])], symmetric=True), 5)


def test_abelian_classes_are_singletons(cyclic3):
    cd = conjugacy_classes(cyclic3)
    assert cd.sizes == [1, 1, 1]
    assert character_degrees(cyclic3) == [1, 1, 1]
    assert min_degree(cyclic3) == 1


@pytest.mark.parametrize("q, n_classes", [(3, 7), (5, 9), (7, 11)])
def test_class_equation(sl2_table, q, n_classes):
    T = sl2_table(q)
    cd = conjugacy_classes(T)
    assert len(cd) == n_classes
    assert sum(cd.sizes) == len(T)
    assert cd.sizes[0] == 1 and cd.representatives[0] == 0
    assert all(len(T) % s == 0 for s in cd.sizes)
    assert cd.representatives == [int(c.min()) for c in cd.classes]


def test_degrees_examples(sl2_table):
    assert character_degrees(sl2_table(1)) == [1]
    assert character_degrees(sl2_table(3)) == [1, 1, 1, 2, 2, 2, 3]
    assert character_degrees(sl2_table(5)) == [1, 2, 2, 3, 3, 4, 4, 5, 6]


@pytest.mark.parametrize("q", [3, 4, 5, 6, 7, 8, 9])
def test_degree_sum_of_squares(sl2_table, q):
    T = sl2_table(q)
    d = character_degrees(T)
    assert sum(x * x for x in d) == len(T)
    assert len(d) == len(conjugacy_classes(T))
    assert d == character_degrees(T, method="complex")


@pytest.mark.parametrize("p", [3, 5, 7, 11, 13])
def test_min_degree_bound(sl2_table, p):
    m = min_degree(sl2_table(p))
    assert m >= (p - 1) / 2


def test_min_degree_examples(sl2_table):
    assert min_degree(sl2_table(5)) == 2
    assert min_degree(sl2_table(3)) == 1
    with pytest.raises(DomainError):
        min_degree([1])


def test_degree_cap(sl2_table):
    with pytest.raises(CapExceededError):
        character_degrees(sl2_table(29))


def test_qr_report_schema(sl2_table):
    rep = qr_report(sl2_table(5))
    assert list(rep) == ["q", "classes", "degrees", "min_degree", "frobenius_bound", "bound_ok"]
    assert rep["bound_ok"] is True and rep["frobenius_bound"] == 2


def test_gowers_examples(sl2_table):
    T = sl2_table(5)
    everything = np.arange(len(T))
    assert gowers_cover_check(everything, everything, everything, T, 2).ok
    res = gowers_cover_check([1], [2], [3], T, 2)
    assert not res.ok and not res.details["hypothesis"]


def test_gowers_random_triples(sl2_table):
    T = sl2_table(5)
    rng = np.random.default_rng(42)
    for _ in range(100):
        sets = [rng.choice(120, size=97, replace=False) for _ in range(3)]
        res = gowers_cover_check(*sets, T, 2)
        assert res.details["hypothesis"] and res.ok


def test_gowers_strict_raises_on_contradiction(sl2_table):
    # a false degree makes the hypothesis hold for sets that cannot cover
    T = sl2_table(5)
    with pytest.raises(InvariantViolation):
        gowers_cover_check([0], [0], [0], T, 10**7)


def test_proper_index_probe(sl2_table, cyclic3):
    assert min_proper_index_probe(sl2_table(1), trials=10) == (None, None)
    assert min_proper_index_probe(cyclic3, trials=200, seed=1)[0] == 3
    idx, ok = min_proper_index_probe(sl2_table(5), trials=500, seed=1)
    assert 2 <= idx <= 5 and ok


def test_proper_index_exhaustive_sl2_5(sl2_table):
    assert min_proper_index_exhaustive(sl2_table(5)) == 5


@pytest.mark.parametrize("p", [5, 7])
def test_nonsplit_probe_finds_witness(S, p):
    res = nonsplit_probe(S, p, trials=1000, seed=0)
    assert res.found
    z = res.witness
    eye = np.eye(2, dtype=np.int64)
    assert not np.any((z - eye) % p) and np.any((z - eye) % (p * p))


def test_nonsplit_rejects_small_p(S):
    with pytest.raises(DomainError):
        nonsplit_probe(S, 3)


def test_split_control_exhausts():
    quotient, section = teichmuller_torus(7)
    res = section_defect_search(quotient, section, 7, trials=500)
    assert not res.found and res.trials_used == 500
