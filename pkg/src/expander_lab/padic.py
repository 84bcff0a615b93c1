"""Truncated p-adic exponential and logarithm on matrices, and the mod-q
exponential built from them.

All series are summed with integers only.  A term ``x**n / n!`` is formed as
``(x**n // p**v) * u`` where ``v = v_p(n!)`` and ``u`` inverts the unit part of
``n!`` modulo ``p**m``; the powers of ``x`` are kept modulo ``p**(m + v_p(N!))``
so the exact division is legitimate.  Batched versions take ``(B, d, d)``
object arrays and are what the property sweeps use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError, UnsupportedError
from .modq import (
    INF_VAL,
    MatModQ,
    crt_matrix,
    delta2,
    factorize,
    int_inverse_sl,
    inv_mod,
    r_dot,
    vp,
    vp_factorial,
    vp_mat,
)

MAX_MODULUS = 1 << 62


def alpha(p: int) -> int:
    """Minimal valuation on which exp and log converge."""
    return 1 + delta2(p)


def beta(p: int) -> int:
    """Minimal valuation for the BCH defect bound."""
    return {2: 3, 3: 2}.get(p, 1)


@dataclass(frozen=True, eq=False)
class PadicMat:
    p: int
    m: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.m < 1:
            raise DomainError("precision must be >= 1")
        if self.p**self.m >= MAX_MODULUS:
            raise DomainError(f"p^m = {self.p}^{self.m} exceeds 2^62")
        e = np.array(self.entries, dtype=object) % self.p**self.m
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise DomainError(f"expected a square matrix, got shape {e.shape}")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def modulus(self) -> int:
        return self.p**self.m

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    def valuation(self):
        return vp_mat(self.entries, self.p, self.m)

    def with_entries(self, entries) -> "PadicMat":
        return PadicMat(self.p, self.m, entries)

    def __add__(self, other):
        return self.with_entries(self.entries + other.entries)

    def __sub__(self, other):
        return self.with_entries(self.entries - other.entries)

    def __matmul__(self, other):
        return self.with_entries(self.entries.dot(other.entries))

    def __eq__(self, other):
        return (
            isinstance(other, PadicMat)
            and (self.p, self.m) == (other.p, other.m)
            and np.array_equal(self.entries, other.entries)
        )

    def __hash__(self):
        return hash((self.p, self.m, tuple(self.entries.ravel())))

    def __repr__(self):
        return f"PadicMat(p={self.p}, m={self.m}, {self.entries.tolist()})"


def truncation_index(p: int, m: int) -> int:
    """Smallest N with N * (alpha_p - 1/(p-1)) >= m; later terms vanish mod p^m."""
    slope = Fraction(alpha(p)) - Fraction(1, p - 1)
    return max(1, math.ceil(Fraction(m) / slope))


def _batch_valuation(X: np.ndarray, p: int, m: int) -> list:
    return [vp_mat(x, p, m) for x in X]


def _as_batch(X) -> np.ndarray:
    X = np.array(X, dtype=object)
    if X.ndim == 2:
        X = X[None]
    return X


def _check_domain(X, p, m, what):
    a = alpha(p)
    for v in _batch_valuation(X, p, m):
        if v < a:
            raise DomainError(f"{what}: valuation {v} < {a} at p={p}; the series diverges")


def exp_trunc_batch(X, p: int, m: int, check: bool = True) -> np.ndarray:
    """exp of every matrix in ``X`` modulo p^m (X must be divisible by p^alpha)."""
    X = _as_batch(X)
    pm = p**m
    X = X % pm
    if check:
        _check_domain(X, p, m, "exp")
    N = truncation_index(p, m)
    big = p ** (m + vp_factorial(N, p))
    d = X.shape[-1]
    eye = np.eye(d, dtype=int).astype(object)
    total = np.broadcast_to(eye, X.shape).copy()
    power = total.copy()
    fact = 1
    for n in range(1, N + 1):
        power = np.matmul(power, X) % big
        fact *= n
        v = vp(fact, p)
        unit = fact // p**v
        total = (total + (power // p**v) * pow(unit, -1, pm)) % pm
    return total


def log_trunc_batch(G, p: int, m: int, check: bool = True) -> np.ndarray:
    """log of every matrix in ``G`` modulo p^m (G must be 1 mod p^alpha)."""
    G = _as_batch(G)
    pm = p**m
    d = G.shape[-1]
    eye = np.eye(d, dtype=int).astype(object)
    Y = (G - eye) % pm
    if check:
        _check_domain(Y, p, m, "log")
    N = truncation_index(p, m)
    extra = max(vp(n, p) for n in range(1, N + 1))
    big = p ** (m + extra)
    total = np.zeros(G.shape, dtype=object)
    power = np.broadcast_to(eye, G.shape).copy()
    for n in range(1, N + 1):
        power = np.matmul(power, Y) % big
        v = vp(n, p)
        coeff = pow(n // p**v, -1, pm)
        if n % 2 == 0:
            coeff = -coeff
        total = (total + (power // p**v) * coeff) % pm
    return total


def exp_trunc(x: PadicMat) -> PadicMat:
    return x.with_entries(exp_trunc_batch(x.entries, x.p, x.m)[0])


def log_trunc(g: PadicMat) -> PadicMat:
    return g.with_entries(log_trunc_batch(g.entries, g.p, g.m)[0])


def bch_defect(x: PadicMat, y: PadicMat):
    """v_p(log(exp x exp y) - x - y) at the working precision (INF_VAL if >= m)."""
    if (x.p, x.m) != (y.p, y.m):
        raise DomainError("x and y must share p and precision")
    p, m = x.p, x.m
    b = beta(p)
    vx, vy = x.valuation(), y.valuation()
    if vx < b or vy < b:
        raise DomainError(f"BCH bound needs valuations >= {b} at p={p}, got {vx}, {vy}")
    return bch_defect_batch(x.entries[None], y.entries[None], p, m)[0]


def bch_defect_batch(X, Y, p: int, m: int) -> list:
    ex = exp_trunc_batch(X, p, m)
    ey = exp_trunc_batch(Y, p, m)
    z = log_trunc_batch(np.matmul(ex, ey) % p**m, p, m) - X - Y
    return _batch_valuation(z % p**m, p, m)


def bch_bound(vx, vy, p: int):
    return vx + vy - 2 * delta2(p)


def conj_exp_check(a, x: PadicMat) -> bool:
    """a exp(x) a^-1 == exp(a x a^-1) at the precision of x."""
    a = np.array(a, dtype=object)
    ai = int_inverse_sl(a)
    pm = x.modulus
    lhs = a.dot(exp_trunc(x).entries).dot(ai) % pm
    rhs = exp_trunc(x.with_entries(a.dot(x.entries).dot(ai))).entries
    return bool(np.array_equal(lhs, rhs))


def _check_exp_mod_q_domain(x, fm):
    for p, _ in fm.factors:
        need = alpha(p)
        v = vp_mat(x, p, need)
        if v < need:
            raise DomainError(f"x is not divisible by {p}^{need} (prime {p} offends)")


def exp_mod_q(x, q) -> MatModQ:
    """exp(x) mod q for an integer matrix x divisible by r_dot(q)."""
    fm = factorize(q)
    x = np.array(x, dtype=object)
    d = x.shape[0]
    if fm.q == 1:
        return MatModQ(1, np.zeros((d, d), dtype=int))
    r_dot(fm)
    _check_exp_mod_q_domain(x, fm)
    parts = [exp_trunc_batch(x, p, m, check=False)[0] for p, m in fm.factors]
    return MatModQ(fm.q, crt_matrix(parts, fm.prime_powers()) if len(parts) > 1 else parts[0])


def log_mod_q(g, q) -> np.ndarray:
    """log(g) mod q for g congruent to 1 mod r_dot(q); returns an integer matrix."""
    fm = factorize(q)
    g = np.array(getattr(g, "entries", g), dtype=object)
    d = g.shape[0]
    if fm.q == 1:
        return np.zeros((d, d), dtype=object)
    r_dot(fm)
    _check_exp_mod_q_domain(g - np.eye(d, dtype=int), fm)
    parts = [log_trunc_batch(g, p, m, check=False)[0] for p, m in fm.factors]
    return crt_matrix(parts, fm.prime_powers()) if len(parts) > 1 else parts[0] % fm.q


def log_trace_check(g, q) -> bool:
    """For g of determinant 1, log g must be trace-free mod q (sl_d membership)."""
    x = log_mod_q(g, q)
    return int(np.trace(x)) % factorize(q).q == 0


# ---------------------------------------------------------------------------
# word lemma

# Scaling constant for the k = 3 word; clears the 2- and 3-parts of the
# Campbell-Hausdorff denominators up to the degrees that matter mod R^3.
WORD_SCALE = 12


def word_synthesize(s: int, k: int):
    """A word ``w`` in s letters and a constant ``D`` with
    ``exp(D (x_1 + ... + x_s)) = w(exp x_1, ..., exp x_s) mod R^k``.

    A word is a tuple of ``(letter, exponent)`` pairs, letters numbered from 1.
    For k <= 2 the plain product works (for k = 2 this needs R odd; 2-adic R
    needs the k = 3 word).  For k = 3 the product of C-th powers picks up a
    degree-two term ``C^2/2 * sum_{i<j} [x_i, x_j]``, which is cancelled by the
    commutators ``[a_j^C, a_i^(C/2)]``.
    """
    if s < 1 or k < 1:
        raise DomainError("s and k must be positive")
    if k <= 2:
        return tuple((i, 1) for i in range(1, s + 1)), 1
    if k == 3:
        c = WORD_SCALE
        word = [(i, c) for i in range(1, s + 1)]
        for i in range(1, s + 1):
            for j in range(i + 1, s + 1):
                word += [(j, c), (i, c // 2), (j, -c), (i, -c // 2)]
        return tuple(word), c
    raise UnsupportedError(f"word synthesis is implemented for k <= 3, got k={k}")


def word_length(word) -> int:
    return sum(abs(e) for _, e in word)


def _batch_matpow(E, Einv, n, mod):
    base = E if n >= 0 else Einv
    n = abs(n)
    d = E.shape[-1]
    out = np.broadcast_to(np.eye(d, dtype=int).astype(object), E.shape).copy()
    while n:
        if n & 1:
            out = np.matmul(out, base) % mod
        base = np.matmul(base, base) % mod
        n >>= 1
    return out


def evaluate_word(word, mats, mats_inv, mod) -> np.ndarray:
    """w(g_1, ..., g_s) for batches ``mats[i]`` of shape (B, d, d)."""
    out = np.broadcast_to(np.eye(mats[0].shape[-1], dtype=int).astype(object), mats[0].shape).copy()
    for letter, e in word:
        out = np.matmul(out, _batch_matpow(mats[letter - 1], mats_inv[letter - 1], e, mod)) % mod
    return out


def random_lie_samples(rng, p, val, m, d, count, commuting=False):
    """``count`` random d x d matrices divisible by p^val, modulo p^m."""
    pm = p**m
    span = p ** (m - val)
    if commuting:
        base = _rand_matrix(rng, span, d, 1)[0]
        coeffs = [int(c) for c in rng.integers(0, span, size=count)]
        return np.array([(p**val) * ((c * base) % span) for c in coeffs], dtype=object) % pm
    return (_rand_matrix(rng, span, d, count) * (p**val)) % pm


def _rand_matrix(rng, bound, d, count):
    # integers may exceed int64, so draw digits in base 2^30
    out = np.zeros((count, d, d), dtype=object)
    b = 1
    while b < bound:
        out = out * (1 << 30) + rng.integers(0, 1 << 30, size=(count, d, d)).astype(object)
        b <<= 30
    return out % bound


def verify_word(word, D, s, k, p, r_val, trials=200, rng=None, d=2, commuting=False, extra=None):
    """Sample x_i divisible by p^r_val and test the word congruence mod p^(k r_val).

    Returns ``(ok, worst)`` with ``worst`` the smallest observed valuation of
    ``exp(D sum x_i) - w(exp x_1, ...)`` (INF_VAL when exact at the working
    precision).  The working precision defaults to ``(k + 1) * r_val + 1``.
    """
    if p == 2 and r_val == 1:
        raise DomainError("R must not have 2-adic valuation 1")
    if r_val < alpha(p):
        raise DomainError(f"R must be divisible by {p}^{alpha(p)}")
    rng = np.random.default_rng(rng)
    m = extra if extra is not None else (k + 1) * r_val + 1
    pm = p**m
    if commuting:
        base = random_lie_samples(rng, p, r_val, m, d, 1)[0]
        coeffs = [rng.integers(0, p ** (m - r_val), size=trials).astype(object) for _ in range(s)]
        xs = [np.array([(int(c) * base) % pm for c in cs], dtype=object).reshape(trials, d, d) for cs in coeffs]
    else:
        xs = [random_lie_samples(rng, p, r_val, m, d, trials) for _ in range(s)]
    E = [exp_trunc_batch(x, p, m, check=False) for x in xs]
    Ei = [exp_trunc_batch((-x) % pm, p, m, check=False) for x in xs]
    rhs = evaluate_word(word, E, Ei, pm)
    lhs = exp_trunc_batch((D * sum(xs)) % pm, p, m, check=False)
    vals = _batch_valuation((lhs - rhs) % pm, p, m)
    worst = min(vals) if vals else INF_VAL
    return worst >= k * r_val, worst


def _scaled_samples(rng, p, m, d, count, low):
    pm = p**m
    units = _rand_matrix(rng, pm, d, count)
    vals = rng.integers(low, max(low, m) + 1, size=count)
    scale = np.array([p ** int(v) for v in vals], dtype=object)[:, None, None]
    return (units * scale) % pm


def property_sweep(p: int, m: int, d: int, count: int, rng=None) -> dict:
    """Failure counts of the exp/log roundtrip, the isometry and the BCH bound.

    Each property is tested on ``count`` random matrices mod p^m whose
    valuations are drawn uniformly from the admissible range.
    """
    rng = np.random.default_rng(rng)
    pm = p**m
    eye = np.eye(d, dtype=int).astype(object)
    X = _scaled_samples(rng, p, m, d, count, alpha(p))
    E = exp_trunc_batch(X, p, m)
    roundtrip = int(np.sum(np.any(log_trunc_batch(E, p, m) != X, axis=(1, 2))))
    isometry = sum(vp_mat((e - eye) % pm, p, m) != vp_mat(x, p, m) for e, x in zip(E, X))
    b = beta(p)
    X = _scaled_samples(rng, p, m, d, count, b)
    Y = _scaled_samples(rng, p, m, d, count, b)
    bch = 0
    for z, x, y in zip(bch_defect_batch(X, Y, p, m), X, Y):
        need = bch_bound(vp_mat(x, p, m), vp_mat(y, p, m), p)
        if z < min(m, need):
            bch += 1
    return {"count": count, "roundtrip_failures": roundtrip, "isometry_failures": int(isometry), "bch_failures": bch}
