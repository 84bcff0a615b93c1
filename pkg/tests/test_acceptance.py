"""The twelve acceptance criteria, each at its stated tolerance.

Every test records a single PASS/FAIL line (see ``conftest.record``) which is
printed in the terminal summary, then asserts.
"""

import itertools
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import record
from expander_lab.cli import main as cli_main
from expander_lab.fourier import TorusMeasure, decay_profile, fourier_transform, push_linear
from expander_lab.grpenum import crt_check, enumerate_group, lie_kernel_check, standard_sl2
from expander_lab.padic import property_sweep, verify_word, word_synthesize
from expander_lab.qr import character_degrees, gowers_cover_check, min_degree, nonsplit_probe
from expander_lab.spectral import family_scan, lambda2, uniform_on_generators
from expander_lab.walk import SparseMeasure, almost_diophantine, flattening_curve, uniform_word_measure

FIXTURES = Path(__file__).parent / "fixtures"
PRIMES_5_61 = [5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61]


@pytest.fixture(scope="module")
def S():
    return standard_sl2()


@pytest.fixture(scope="module")
def family(S):
    t0 = time.perf_counter()
    scan = family_scan(S, PRIMES_5_61)
    return scan, time.perf_counter() - t0


def test_c01_exp_log_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    failures = cases = 0
    for p in (2, 3, 5, 7, 11):
        for d in (2, 3):
            for m in range(1, 11):
                res = property_sweep(p, m, d, 1000, rng)
                cases += res["count"]
                failures += res["roundtrip_failures"] + res["isometry_failures"] + res["bch_failures"]
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 60
    record(1, ok, f"{cases} samples (10^4 per (p, d)), {failures} failures, {elapsed:.1f}s")
    assert ok


def test_c02_word_lemma():
    failures, runs, worst_margin = 0, 0, math.inf
    for p in (3, 5, 7):
        for r_val in (1, 2):
            for k in (1, 2, 3):
                for s in (1, 2, 3):
                    w, D = word_synthesize(s, k)
                    ok, worst = verify_word(w, D, s, k, p, r_val, trials=200, rng=[p, r_val, k, s])
                    runs += 1
                    failures += not ok
                    worst_margin = min(worst_margin, worst - k * r_val)
    ok = failures == 0
    record(2, ok, f"{runs} (p, R, k, s) cases x 200 samples, {failures} failures, min slack {worst_margin}")
    assert ok


def test_c03_enumeration_and_crt(S):
    t0 = time.perf_counter()
    bad = []
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23):
        T = enumerate_group(S, p)
        if len(T) != p * (p * p - 1):
            bad.append(("order", p))
        if p <= 7:
            brute = {
                (a, b, c, d)
                for a, b, c, d in itertools.product(range(p), repeat=4)
                if (a * d - b * c) % p == 1
            }
            if {tuple(int(v) for v in e.ravel()) for e in T.elements} != brute:
                bad.append(("brute", p))
    for q, (a, b) in {15: (3, 5), 35: (5, 7), 77: (7, 11), 143: (11, 13)}.items():
        if not crt_check(enumerate_group(S, q), a, b).ok:
            bad.append(("crt", q))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 120
    record(3, ok, f"orders p(p^2-1) for p<=23, brute force p<=7, CRT q in 15,35,77,143; {elapsed:.1f}s {bad or ''}")
    assert ok


def test_c04_lie_kernel(S):
    results = {p: lie_kernel_check(S, p) for p in (5, 7)}
    ok = all(r.ok and r.details["kernel_size"] == p**3 for p, r in results.items())
    sizes = {p: r.details["kernel_size"] for p, r in results.items()}
    record(4, ok, f"kernel sizes {sizes}, additivity and Ad-conjugation exhaustive")
    assert ok


def test_c05_spectral_cross_validation(S, family):
    scan, _ = family
    worst = 0.0
    norms = {}
    for q in range(2, 17):
        T = enumerate_group(S, q)
        assert len(T) <= 4096
        mu = uniform_on_generators(T)
        dense = lambda2(T, mu, method="dense")
        lanc = lambda2(T, mu, method="lanczos")
        power = lambda2(T, mu, method="power")
        worst = max(worst, abs(dense.lambda2 - lanc.lambda2), abs(dense.lambda2 - power.lambda2))
        norms[q] = (dense.opnorm0, dense.lambda2)
    # odd q: the walk is aperiodic and the mean-zero norm must be < 1;
    # even q: the sign character mod 2 makes the Cayley graph bipartite, so
    # lambda_min = -1 exactly and only the gap lambda2 < 1 is available
    odd_ok = all(n < 1 for q, (n, _) in norms.items() if q % 2)
    even_ok = all(l2 < 1 and abs(n - 1) < 1e-9 for q, (n, l2) in norms.items() if q % 2 == 0)
    fam_norm_ok = all(r.opnorm0 < 1 for r in scan.reports)
    fixture = json.loads((FIXTURES / "family_primes_5_61.json").read_text())
    gap_diff = abs(scan.min_gap - fixture["min_gap"])
    ok = worst < 1e-8 and odd_ok and even_ok and fam_norm_ok and scan.min_gap > 0 and gap_diff < 1e-9
    record(
        5, ok,
        f"max solver disagreement {worst:.1e} (q=2..16); ||T0||<1 on odd q and primes 5..61; "
        f"even q bipartite (||T0||=1, gap>0); min gap {scan.min_gap:.12f} vs fixture diff {gap_diff:.1e}",
    )
    assert ok


def test_c06_diameter_law(family):
    scan, elapsed = family
    fixture = json.loads((FIXTURES / "family_primes_5_61.json").read_text())
    expect = {r["q"]: r["diameter"] for r in fixture["rows"]}
    got = {r.q: r.diameter for r in scan.reports}
    ratios = [r.diameter / math.log(r.q) for r in scan.reports]
    band = (fixture["ratio_min"], fixture["ratio_max"])
    in_band = all(band[0] - 1e-12 <= x <= band[1] + 1e-12 for x in ratios)
    ok = got == expect and in_band and elapsed < 300
    record(6, ok, f"diameters match fixture for primes 5..61; ratio band [{band[0]:.4f}, {band[1]:.4f}]; scan {elapsed:.1f}s")
    assert ok


def test_c07_flattening(S):
    violations, checked = [], 0
    for q in (25, 27, 49, 121):
        T = enumerate_group(S, q)
        mu = SparseMeasure.on_generators(T)
        assert mu.is_symmetric(T) and mu.exact
        curve = flattening_curve(mu, T, q, 10)
        checked += 10
        if not (curve.monotone and curve.exact):
            violations.append(q)
    ok = not violations
    record(7, ok, f"{checked} exact doubling inequalities for q in 25,27,49,121; violations {violations}")
    assert ok


def test_c08_almost_diophantine(S):
    atoms = uniform_word_measure(S)
    res = {q: almost_diophantine(atoms, S, q, 0) for q in (101, 211)}
    ok = all(r.exact_support is True and r.m == math.floor(math.log(q) / (2 * math.log(r.norm_bound))) for q, r in res.items())
    detail = ", ".join(f"q={q}: m={r.m}, radius {r.radius}, exact={r.exact_support}" for q, r in res.items())
    record(8, ok, detail)
    assert ok


def test_c09_torus_fourier():
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(1000):
        q, dim = [(3, 2), (5, 2), (7, 2), (4, 3), (11, 1), (6, 2)][int(rng.integers(0, 6))]
        w = rng.random(q**dim) * (rng.random(q**dim) < 0.6)
        w[int(rng.integers(0, q**dim))] += 0.1
        nu = TorusMeasure(q, dim, w / w.sum())
        lhs = float(np.sum(np.abs(fourier_transform(nu)) ** 2))
        rhs = q**dim * float(np.sum(nu.weights**2))
        worst = max(worst, abs(lhs - rhs) / rhs)
    S = standard_sl2()
    atoms = [(0.25, np.array(m, dtype=object)) for m in S.matrices]
    fixture = json.loads((FIXTURES / "decay_q101.json").read_text())
    got = {n: decay_profile(push_linear(atoms, (1, 0), 101, n)).bucket(101) for n in (10, 40)}
    diffs = [abs(got[n] - fixture[str(n)]["s101_max"]) for n in (10, 40)]
    ok = worst <= 1e-9 and got[40] < got[10] and max(diffs) < 1e-9
    record(9, ok, f"Parseval max rel err {worst:.1e} on 1000 measures; s=101 max {got[10]:.6f} (n=10) > {got[40]:.6f} (n=40); fixture diff {max(diffs):.1e}")
    assert ok


def test_c10_quasirandomness(S):
    T3, T5 = enumerate_group(S, 3), enumerate_group(S, 5)
    d3, d5 = character_degrees(T3), character_degrees(T5)
    degrees_ok = d3 == [1, 1, 1, 2, 2, 2, 3] and d5 == [1, 2, 2, 3, 3, 4, 4, 5, 6]
    squares_ok = sum(x * x for x in d3) == 24 and sum(x * x for x in d5) == 120
    mins = {p: min_degree(enumerate_group(S, p)) for p in (3, 5, 7, 11, 13)}
    bound_ok = all(m >= (p - 1) / 2 for p, m in mins.items())
    rng = np.random.default_rng(10)
    covered = 0
    m5 = min_degree(d5)
    for _ in range(100):
        sets = [rng.choice(120, size=int(rng.integers(97, 121)), replace=False) for _ in range(3)]
        res = gowers_cover_check(*sets, T5, m5)
        assert res.details["hypothesis"]
        covered += res.ok
    ok = degrees_ok and squares_ok and bound_ok and covered == 100
    record(10, ok, f"degrees mod 3/5 exact; min degrees {mins}; Gowers covered {covered}/100")
    assert ok


def test_c11_nonsplit(S):
    res = {p: nonsplit_probe(S, p, trials=1000, seed=11) for p in (5, 7)}
    eye = np.eye(2, dtype=np.int64)
    ok = all(
        r.found and not np.any((r.witness - eye) % p) and np.any((r.witness - eye) % (p * p)) and r.valuation == 1
        for p, r in res.items()
    )
    record(11, ok, ", ".join(f"p={p}: witness after {r.trials_used} trials" for p, r in res.items()))
    assert ok


CLI_RUNS = [
    ["gap", "--q", "1,5,7,11"],
    ["diameter", "--q", "primes:5-23"],
    ["flatten", "--q", "25,27", "--set", "n=10"],
    ["dioph", "--q", "101", "--set", "n=0"],
    ["fourier", "--q", "101", "--set", "n=10,40", "--format", "csv"],
    ["exp", "--set", "samples=100"],
    ["qr", "--q", "3,5,7,11,13"],
    ["profile", "--q", "360,225", "--set", "g=1 30; 0 1", "--set", "tau=0.1"],
]


def test_c12_cli_reproducible(capsys):
    mismatched, codes = [], {}
    for argv in CLI_RUNS:
        outs = []
        for _ in range(2):
            code = cli_main(argv)
            outs.append((code, capsys.readouterr().out))
        codes[argv[0]] = outs[0][0]
        if outs[0] != outs[1]:
            mismatched.append(argv[0])
    ok = not mismatched and all(c == 0 for c in codes.values())
    record(12, ok, f"8 commands rerun byte-identical; exit codes {sorted(set(codes.values()))}; mismatches {mismatched}")
    assert ok
