"""Measures on finite quotients, convolution powers, flattening diagnostics,
the almost-diophantine mass, and approximate-subgroup statistics.

Small measures are kept as exact :class:`~fractions.Fraction` weights.  Long
convolution powers on large tables use a dense integer representation: if
``mu = c / D`` with integer ``c``, then ``mu^{*n} = c_n / D^n`` and ``c_n`` is
an integer vector, so norms can be compared exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import CapExceededError, ConfigError, DomainError
from .grpenum import GeneratorSet, GroupTable, encode_keys, enumerate_group
from .modq import INT64_SAFE_MODULUS, factorize, int_inverse_sl

EXACT_ATOM_LIMIT = 1 << 16
FLOAT_TOL = 1e-12


@dataclass(frozen=True)
class SparseMeasure:
    """A finitely supported probability measure on table ordinals."""

    support: dict
    exact: bool = True

    def __post_init__(self):
        clean = {int(k): w for k, w in sorted(self.support.items()) if w != 0}
        if any(w < 0 for w in clean.values()):
            raise DomainError("weights must be nonnegative")
        if self.exact:
            clean = {k: Fraction(w) for k, w in clean.items()}
            if sum(clean.values()) != 1:
                raise DomainError(f"exact measure has total mass {sum(clean.values())}")
        else:
            clean = {k: float(w) for k, w in clean.items()}
            if abs(sum(clean.values()) - 1) > FLOAT_TOL * max(1, len(clean)):
                raise DomainError("float measure does not have total mass 1")
        object.__setattr__(self, "support", clean)

    @property
    def total(self):
        return sum(self.support.values())

    @property
    def mode(self) -> str:
        return "exact" if self.exact else "float"

    def __len__(self):
        return len(self.support)

    @classmethod
    def point(cls, i: int = 0) -> "SparseMeasure":
        return cls({i: Fraction(1)})

    @classmethod
    def uniform(cls, ordinals) -> "SparseMeasure":
        ords = np.unique(np.asarray(ordinals, dtype=np.int64))
        return cls({int(i): Fraction(1, len(ords)) for i in ords})

    @classmethod
    def on_generators(cls, T: GroupTable, weights=None) -> "SparseMeasure":
        """Push the (default uniform) measure on generator indices onto T."""
        s = len(T.generators)
        weights = [Fraction(1, s)] * s if weights is None else [Fraction(w) for w in weights]
        out: dict[int, Fraction] = {}
        for g, w in zip(T.generator_ordinals(), weights):
            out[int(g)] = out.get(int(g), Fraction(0)) + w
        return cls(out)

    def ordinals(self) -> np.ndarray:
        return np.fromiter(self.support.keys(), dtype=np.int64, count=len(self.support))

    def weights(self) -> list:
        return list(self.support.values())

    def is_symmetric(self, T: GroupTable) -> bool:
        inv = T.inverse
        return all(self.support.get(int(inv[k]), 0) == w for k, w in self.support.items())

    def translate(self, T: GroupTable, g: int) -> "SparseMeasure":
        """Left translate: the law of g*x for x distributed as self."""
        ords = self.ordinals()
        if not len(ords):
            return self
        new = T.mul(np.full(len(ords), g), ords)
        return SparseMeasure(dict(zip(new.tolist(), self.weights())), self.exact)

    def to_float(self) -> "SparseMeasure":
        return SparseMeasure({k: float(w) for k, w in self.support.items()}, exact=False)

    def dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        for k, w in self.support.items():
            out[k] = float(w)
        return out


def common_denominator(mu: SparseMeasure) -> tuple[np.ndarray, np.ndarray, int]:
    """(ordinals, integer numerators, D) with mu = numerators / D."""
    if not mu.exact:
        raise DomainError("measure is not exact")
    D = math.lcm(*(w.denominator for w in mu.weights()))
    nums = np.array([int(w * D) for w in mu.weights()], dtype=object)
    return mu.ordinals(), nums, D


def convolve(mu: SparseMeasure, nu: SparseMeasure, T: GroupTable) -> SparseMeasure:
    """(mu * nu)(x) = sum_g mu(g) nu(g^-1 x)."""
    a, b = mu.ordinals(), nu.ordinals()
    prod = T.mul(a[:, None], b[None, :]).ravel()
    wa, wb = mu.weights(), nu.weights()
    exact = mu.exact and nu.exact and len(np.unique(prod)) <= EXACT_ATOM_LIMIT
    if exact:
        acc: dict[int, Fraction] = {}
        k = 0
        for x in wa:
            for y in wb:
                key = int(prod[k])
                acc[key] = acc.get(key, Fraction(0)) + x * y
                k += 1
        return SparseMeasure(acc, True)
    w = np.outer(np.array(wa, dtype=float), np.array(wb, dtype=float)).ravel()
    order = np.argsort(prod, kind="stable")
    uniq, start = np.unique(prod[order], return_index=True)
    sums = np.add.reduceat(w[order], start) if len(order) else np.zeros(0)
    return SparseMeasure(dict(zip(uniq.tolist(), sums.tolist())), False)


# ---------------------------------------------------------------------------
# dense convolution powers


def left_actions(T: GroupTable, ords) -> np.ndarray:
    """For each ordinal g, the permutation y -> g*y of the table."""
    gen = {int(g): i for i, g in enumerate(T.generator_ordinals())}
    idx = np.arange(len(T))
    rows = []
    for g in np.asarray(ords).tolist():
        if g in gen:
            rows.append(T.gen_action[gen[g]])
        else:
            rows.append(T.mul(np.full(len(T), g), idx))
    return np.array(rows, dtype=np.int64).reshape(len(rows), len(T))


class DensePowers:
    """Iterates mu^{*0}, mu^{*1}, ... as dense vectors on a table.

    Exact measures yield ``(numerators, D**n)`` integer pairs; float measures
    yield ``(vector, 1)``.
    """

    def __init__(self, mu: SparseMeasure, T: GroupTable, start=None):
        self.T = T
        self.exact = mu.exact
        if self.exact:
            ords, nums, self.D = common_denominator(mu)
            self.weights = nums
        else:
            ords = mu.ordinals()
            self.weights = np.array(mu.weights(), dtype=float)
            self.D = 1
        self.actions = left_actions(T, ords)
        n = len(T)
        if start is None:
            cur = np.zeros(n, dtype=np.int64 if self.exact else float)
            cur[0] = 1
        else:
            cur = start
        self.current = cur
        self.denominator = 1
        self.n = 0

    def step(self):
        cur = self.current
        if self.exact and cur.dtype != object and self.denominator * self.D >= 1 << 62:
            cur = cur.astype(object)
        out = np.zeros_like(cur)
        for perm, w in zip(self.actions, self.weights):
            out[perm] += w * cur if not self.exact else cur * int(w)
        self.current = out
        self.denominator *= self.D
        self.n += 1
        return self.current, self.denominator

    def advance_to(self, n: int):
        while self.n < n:
            self.step()
        return self.current, self.denominator


def pushforward_counts(vec: np.ndarray, T: GroupTable, q2: int) -> np.ndarray:
    """Sum a dense vector over the fibres of reduction mod q2."""
    if q2 == T.modulus:
        return vec
    _, inv = np.unique(T.reduce_keys(q2), return_inverse=True)
    if vec.dtype.kind == "f":
        return np.bincount(inv, weights=vec)
    out = np.zeros(inv.max() + 1, dtype=vec.dtype)
    np.add.at(out, inv, vec)
    return out


def flatness_squared_exact(vec, den, T: GroupTable, q2: int) -> Fraction:
    """Exact ||nu * P_{q2}||_2^2 for nu = vec / den (vec integer)."""
    pushed = pushforward_counts(vec, T, q2)
    size = len(pushed)
    s = sum(int(c) * int(c) for c in pushed[pushed != 0].tolist())
    return Fraction(size * s, den * den)


def flatness(mu, T: GroupTable, q2: int | None = None) -> float:
    """||mu * P_{q2}||_2 for the pushforward of mu to pi_{q2}(Gamma)."""
    q2 = T.modulus if q2 is None else q2
    if T.modulus % q2:
        raise DomainError(f"{q2} does not divide {T.modulus}")
    if isinstance(mu, SparseMeasure):
        if mu.exact:
            ords, nums, D = common_denominator(mu)
            vec = np.zeros(len(T), dtype=object)
            vec[ords] = nums
            return math.sqrt(flatness_squared_exact(vec, D, T, q2))
        vec = mu.dense(len(T))
    else:
        vec = np.asarray(mu, dtype=float)
    pushed = pushforward_counts(vec, T, q2)
    return math.sqrt(len(pushed) * float(np.dot(pushed, pushed)))


@dataclass
class FlatteningCurve:
    q: int
    rows: list  # (n, flatness, ratio flatness(2n)/flatness(n))
    crossing: int | None
    tau: float | None
    monotone: bool
    exact: bool


def flattening_curve(mu: SparseMeasure, T: GroupTable, q2: int | None = None, n_max: int = 10, tau=None) -> FlatteningCurve:
    """Flatness of mu^{*n} for n = 0..n_max, with doubling ratios.

    ``monotone`` records whether flatness(2n) <= flatness(n) held for every
    n in 1..n_max, decided with exact rational arithmetic for exact measures.
    """
    q2 = T.modulus if q2 is None else q2
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    if T.modulus % q2:
        raise DomainError(f"{q2} does not divide {T.modulus}")
    powers = DensePowers(mu, T)
    sq = []
    for n in range(2 * n_max + 1):
        vec, den = powers.advance_to(n)
        if mu.exact:
            sq.append(flatness_squared_exact(vec, den, T, q2))
        else:
            pushed = pushforward_counts(vec, T, q2)
            sq.append(len(pushed) * float(np.dot(pushed, pushed)))
    values = [math.sqrt(v) for v in sq]
    rows = []
    monotone = True
    for n in range(n_max + 1):
        ratio = values[2 * n] / values[n]
        rows.append((n, values[n], ratio))
        if n >= 1 and sq[2 * n] > sq[n]:
            monotone = False
    crossing = None
    if tau is not None:
        threshold = q2 ** float(tau)
        crossing = next((n for n, v, _ in rows if v < threshold), None)
    return FlatteningCurve(q2, rows, crossing, tau, monotone, mu.exact)


# ---------------------------------------------------------------------------
# measures given by words


def parse_measure_text(text: str):
    """Parse "weight w1 w2 ... wL" lines; generator indices are 1-based and a
    negative index denotes the inverse.  Weights are normalized."""
    atoms = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        try:
            w = Fraction(toks[0])
            word = tuple(int(t) for t in toks[1:])
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
        if w <= 0 or 0 in word:
            raise ConfigError(f"line {lineno}: weights must be positive and indices nonzero")
        atoms.append((w, word))
    if not atoms:
        raise ConfigError("measure file has no atoms")
    total = sum(w for w, _ in atoms)
    return [(w / total, word) for w, word in atoms]


def load_measure(path):
    with open(path) as fh:
        return parse_measure_text(fh.read())


def uniform_word_measure(S: GeneratorSet):
    return [(Fraction(1, len(S)), (i,)) for i in range(1, len(S) + 1)]


def word_matrix(S: GeneratorSet, word) -> np.ndarray:
    out = np.eye(S.d, dtype=int).astype(object)
    for i in word:
        g = S.matrices[abs(i) - 1]
        if abs(i) > len(S):
            raise ConfigError(f"generator index {i} out of range")
        out = out.dot(g if i > 0 else int_inverse_sl(g))
    return out


def word_measure_on_table(atoms, S: GeneratorSet, T: GroupTable) -> SparseMeasure:
    acc: dict[int, Fraction] = {}
    for w, word in atoms:
        k = int(T.index_of(word_matrix(S, word)))
        acc[k] = acc.get(k, Fraction(0)) + w
    return SparseMeasure(acc)


def row_sum_norm(a) -> int:
    return max(sum(abs(int(v)) for v in row) for row in np.asarray(a, dtype=object))


@dataclass
class DiophResult:
    q: int
    n: int
    mass: Fraction
    exact_support: bool | None
    m: int | None
    norm_bound: int
    radius: int | None
    layer_size: int
    partial: bool


def almost_diophantine(atoms, S: GeneratorSet, q: int, n: int, node_cap: int = 2_000_000, table: GroupTable | None = None, group_cap: int = 4_000_000) -> DiophResult:
    """mu^{*n}(Omega_q) on pi_q, plus the exact check that words of length 2m
    (m = floor(log q / (2 log M))) meet Omega_q only at the identity."""
    if n < 0:
        raise DomainError("n must be >= 0")
    mats = [word_matrix(S, word) for _, word in atoms]
    M = max(row_sum_norm(a) for a in mats)
    if q == 1 or n == 0:
        mass = Fraction(1)
    else:
        T = table if table is not None else enumerate_group(S, q, group_cap)
        mu = word_measure_on_table(atoms, S, T)
        vec, den = DensePowers(mu, T).advance_to(n)
        mass = Fraction(int(vec[0]), den)
    if q == 1 or M <= 1:
        return DiophResult(q, n, mass, None, None, M, None, 0, False)
    m = math.floor(math.log(q) / (2 * math.log(M)))
    ok, layer, partial = exact_support_check(mats, q, 2 * m, node_cap)
    return DiophResult(q, n, mass, ok, m, M, 2 * m, layer, partial)


def exact_support_check(mats, q: int, radius: int, node_cap: int = 2_000_000):
    """Does the word ball of the given radius meet Omega_q only at 1?

    Walks the distinct integer matrices reachable in at most ``radius`` steps,
    layer by layer.  Returns ``(ok, last_layer_size, partial)``; ``ok`` is
    None if the node cap was hit first.
    """
    d = mats[0].shape[0]
    eye = np.eye(d, dtype=int).astype(object)
    ident = tuple(eye.ravel())

    def meets(layer):
        return any(
            key != ident and all(int(v) % q == 0 for v in (a - eye).ravel())
            for key, a in layer.items()
        )

    layer = {ident: eye}
    for _ in range(radius):
        nxt = {}
        for a in layer.values():
            for g in mats:
                b = g.dot(a)
                nxt[tuple(b.ravel())] = b
                if len(nxt) > node_cap:
                    return None, len(nxt), True
        layer = nxt
        if meets(layer):
            return False, len(layer), False
    return True, len(layer), False


def fit_decay_exponent(qs, masses) -> float:
    """Least-squares slope c_hat of -log(mass) against log q."""
    x = np.log(np.asarray(qs, dtype=float))
    y = -np.log(np.asarray([float(m) for m in masses]))
    A = np.vstack([x, np.ones_like(x)]).T
    slope, _ = np.linalg.lstsq(A, y, rcond=None)[0]
    return float(slope)


# ---------------------------------------------------------------------------
# approximate subgroups


def product_set(T: GroupTable, A, B) -> np.ndarray:
    A = np.asarray(A, dtype=np.int64)
    B = np.asarray(B, dtype=np.int64)
    return np.unique(T.mul(A[:, None], B[None, :]).ravel())


def power_set(T: GroupTable, A, k: int) -> np.ndarray:
    out = np.unique(np.asarray(A, dtype=np.int64))
    base = out
    for _ in range(k - 1):
        out = product_set(T, out, base)
    return out


def ball(T: GroupTable, radius: int) -> np.ndarray:
    return np.flatnonzero(T.word_length <= radius)


@dataclass
class ApproxStats:
    size: int
    tripling: float
    K_cover: int
    cover: list
    growth_ok: bool


def approx_group_stats(A, T: GroupTable) -> ApproxStats:
    """Tripling |AAA|/|A| and a greedy covering X with AA inside AX."""
    A = np.unique(np.asarray(A, dtype=np.int64))
    if 0 not in A:
        raise DomainError("A must contain the identity")
    if not np.array_equal(np.unique(T.inverse[A]), A):
        raise DomainError("A must be symmetric")
    AA = product_set(T, A, A)
    AAA = product_set(T, AA, A)
    uncovered = set(AA.tolist())
    cover = []
    while uncovered:
        best, best_gain = None, -1
        for x in AA.tolist():
            gain = len(uncovered.intersection(T.mul(A, np.full(len(A), x)).tolist()))
            if gain > best_gain:
                best, best_gain = x, gain
        cover.append(best)
        uncovered -= set(T.mul(A, np.full(len(A), best)).tolist())
    K = len(cover)
    growth_ok = len(AA) <= K * len(A) and len(AAA) <= K * K * len(A)
    return ApproxStats(len(A), len(AAA) / len(A), K, cover, growth_ok)
