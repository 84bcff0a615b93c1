"""Enumeration of the finite quotients pi_q(Gamma) of a finitely generated
subgroup of SL_d(Z), plus the structural checks run on them.

A :class:`GroupTable` stores the elements of the quotient as an ``(N, d, d)``
int64 array in canonical order: breadth-first from the identity, and sorted by
row-major entries inside each BFS layer.  Lookups go through an integer (or
raw-bytes) key whose ordering agrees with that entry order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import CapExceededError, ConfigError, DomainError
from .modq import FactoredModulus, MatModQ, factorize, int_inverse_sl, inv_mod

DEFAULT_CAP = 4_000_000
MAX_TABLE_MODULUS = 1 << 29


class CheckResult(NamedTuple):
    ok: bool
    witness: object = None
    details: dict | None = None


# ---------------------------------------------------------------------------
# generator sets


@dataclass(frozen=True, eq=False)
class GeneratorSet:
    d: int
    matrices: tuple
    symmetric: bool = False

    def __post_init__(self):
        mats = []
        for m in self.matrices:
            a = np.array(m, dtype=object).reshape(self.d, self.d)
            mats.append(a)
        if self.symmetric:
            mats = _with_inverses(mats)
        else:
            for a in mats:
                int_inverse_sl(a)  # determinant check
        object.__setattr__(self, "matrices", tuple(mats))

    def __len__(self):
        return len(self.matrices)

    def inverse_index(self) -> list[int | None]:
        """For each generator, the index of its inverse in the set (or None)."""
        keys = [tuple(a.ravel()) for a in self.matrices]
        out = []
        for a in self.matrices:
            inv = tuple(int_inverse_sl(a).ravel())
            out.append(keys.index(inv) if inv in keys else None)
        return out

    def conjugate(self, h) -> "GeneratorSet":
        h = np.array(h, dtype=object)
        hi = int_inverse_sl(h)
        return GeneratorSet(self.d, tuple(h.dot(a).dot(hi) for a in self.matrices), self.symmetric)


def _with_inverses(originals):
    # order: g1, g1^-1, g2, g2^-1, ...; duplicates dropped
    out = []
    seen = set()
    for a in originals:
        for b in (a, int_inverse_sl(a)):
            k = tuple(b.ravel())
            if k not in seen:
                seen.add(k)
                out.append(b)
    return out


def standard_sl2(symmetric: bool = True) -> GeneratorSet:
    """The elementary generators (1,1;0,1) and (1,0;1,1), with inverses."""
    return GeneratorSet(2, ([[1, 1], [0, 1]], [[1, 0], [1, 1]]), symmetric)


def parse_generator_text(text: str, symmetric: bool = True) -> GeneratorSet:
    d = None
    mats = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        if d is None:
            if toks[0] != "d" or len(toks) != 2:
                raise ConfigError(f"line {lineno}: expected 'd <dimension>'")
            d = int(toks[1])
            continue
        if len(toks) != d * d:
            raise ConfigError(f"line {lineno}: expected {d * d} integers, got {len(toks)}")
        mats.append(np.array([int(t) for t in toks], dtype=object).reshape(d, d))
    if d is None or not mats:
        raise ConfigError("generator file has no dimension line or no matrices")
    try:
        return GeneratorSet(d, tuple(mats), symmetric)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def load_generators(path, symmetric: bool = True) -> GeneratorSet:
    with open(path) as fh:
        return parse_generator_text(fh.read(), symmetric)


def format_generator_text(S: GeneratorSet) -> str:
    lines = [f"d {S.d}"]
    lines += [" ".join(str(int(v)) for v in a.ravel()) for a in S.matrices]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# keys


def encode_keys(X: np.ndarray, q: int) -> np.ndarray:
    """Order-preserving keys for a stack of reduced matrices."""
    n = X.shape[0]
    flat = X.reshape(n, -1)
    width = flat.shape[1]
    if q**width < 2**63:
        key = np.zeros(n, dtype=np.int64)
        for k in range(width):
            key = key * q + flat[:, k]
        return key
    return np.ascontiguousarray(flat.astype(">u8")).view(f"V{8 * width}").ravel()


# ---------------------------------------------------------------------------
# group tables


@dataclass(eq=False)
class GroupTable:
    q: FactoredModulus
    d: int
    generators: np.ndarray  # (s, d, d) reduced mod q
    elements: np.ndarray  # (N, d, d) canonical order
    gen_action: np.ndarray  # (s, N) ordinal of g * x
    word_length: np.ndarray  # (N,)
    keys: np.ndarray = field(repr=False)

    def __post_init__(self):
        self._order = np.argsort(self.keys, kind="stable")
        self._sorted = self.keys[self._order]
        for arr in (self.elements, self.gen_action, self.word_length, self.keys):
            arr.setflags(write=False)

    def __len__(self):
        return self.elements.shape[0]

    @property
    def order(self) -> int:
        return self.elements.shape[0]

    @property
    def modulus(self) -> int:
        return self.q.q

    def element(self, i: int) -> MatModQ:
        return MatModQ(self.q.q, self.elements[i])

    def index_of(self, mats, missing_ok: bool = False) -> np.ndarray:
        """Ordinals of the given matrices (reduced mod q); -1 where absent."""
        mats = np.asarray(mats, dtype=object) % self.q.q
        single = mats.ndim == 2
        mats = mats.reshape(-1, self.d, self.d).astype(np.int64)
        k = encode_keys(mats, self.q.q)
        pos = np.searchsorted(self._sorted, k)
        pos = np.minimum(pos, len(self._sorted) - 1)
        hit = self._sorted[pos] == k
        out = np.where(hit, self._order[pos], -1)
        if not missing_ok and not hit.all():
            raise DomainError("matrix does not belong to the table")
        return out[0] if single else out

    def mul(self, a, b) -> np.ndarray:
        """Ordinals of elements[a] @ elements[b] (broadcast over index arrays)."""
        a, b = np.broadcast_arrays(np.asarray(a), np.asarray(b))
        shape = a.shape
        prod = (self.elements[a.ravel()] @ self.elements[b.ravel()]) % self.q.q
        return self.index_of(prod).reshape(shape)

    @cached_property
    def inverse(self) -> np.ndarray:
        if self.q.q == 1:
            return np.zeros(1, dtype=np.int64)
        inv = _batch_inverse(self.elements, self.q.q)
        return self.index_of(inv)

    @cached_property
    def cayley(self) -> np.ndarray:
        """Full multiplication table ``cayley[i, j] = i * j``; small groups only."""
        n = len(self)
        if n * n > 50_000_000:
            raise CapExceededError(f"multiplication table for order {n} is too large", n)
        idx = np.arange(n)
        rows = [self.mul(np.full(n, i), idx) for i in range(n)]
        return np.array(rows, dtype=np.int64)

    def reduce_keys(self, q2: int) -> np.ndarray:
        if self.q.q % q2:
            raise DomainError(f"{q2} does not divide {self.q.q}")
        return encode_keys(self.elements % q2, q2)

    def generator_ordinals(self) -> np.ndarray:
        return self.gen_action[:, 0]

    def is_symmetric(self) -> bool:
        g = set(self.generator_ordinals().tolist())
        return all(int(self.inverse[x]) in g for x in g)


def _batch_inverse(X: np.ndarray, q: int) -> np.ndarray:
    n, d, _ = X.shape
    if d == 2:
        a, b, c, e = X[:, 0, 0], X[:, 0, 1], X[:, 1, 0], X[:, 1, 1]
        det = (a * e - b * c) % q
        if np.all(det == 1 % q):
            out = np.empty_like(X)
            out[:, 0, 0], out[:, 0, 1], out[:, 1, 0], out[:, 1, 1] = e, (-b) % q, (-c) % q, a
            return out % q
    return np.array([inv_mod(x, q) for x in X], dtype=np.int64).reshape(n, d, d)


def enumerate_group(S: GeneratorSet, q, cap: int = DEFAULT_CAP) -> GroupTable:
    """BFS closure of the identity under left multiplication by S mod q."""
    fm = factorize(q)
    qq = fm.q
    if cap < 1:
        raise ConfigError("cap must be >= 1")
    if qq > MAX_TABLE_MODULUS:
        raise CapExceededError(f"modulus {qq} exceeds the table limit {MAX_TABLE_MODULUS}", qq)
    d = S.d
    gens = np.array([np.asarray(a, dtype=object) % qq for a in S.matrices], dtype=np.int64).reshape(-1, d, d)
    ident = (np.eye(d, dtype=np.int64) % qq)[None]
    layers = [ident]
    layer_keys = [encode_keys(ident, qq)]
    seen = layer_keys[0].copy()
    frontier = ident
    total = 1
    while frontier.shape[0]:
        cand = np.concatenate([(g @ frontier) % qq for g in gens]) if len(gens) else frontier[:0]
        ck = encode_keys(cand, qq)
        uk, first = np.unique(ck, return_index=True)
        pos = np.searchsorted(seen, uk)
        pos = np.minimum(pos, len(seen) - 1)
        fresh = seen[pos] != uk
        uk, first = uk[fresh], first[fresh]
        if not len(uk):
            break
        total += len(uk)
        if total > cap:
            raise CapExceededError(f"group order exceeds cap {cap} (reached at least {total})", total)
        frontier = cand[first]
        layers.append(frontier)
        layer_keys.append(uk)
        seen = np.sort(np.concatenate([seen, uk]), kind="stable")
    elements = np.concatenate(layers)
    keys = np.concatenate(layer_keys)
    word_length = np.concatenate([np.full(len(l), i, dtype=np.int32) for i, l in enumerate(layers)])
    table = GroupTable(fm, d, gens, elements, np.zeros((0, len(elements)), dtype=np.int64), word_length, keys)
    action = np.array([table.index_of((g @ elements) % qq) for g in gens], dtype=np.int64).reshape(len(gens), -1)
    action.setflags(write=False)
    table.gen_action = action
    return table


# ---------------------------------------------------------------------------
# congruence structure


def congruence_index(T: GroupTable, q2: int) -> int:
    """|pi_{q2}(Gamma)|: the number of distinct images of the table mod q2."""
    if q2 < 1 or T.modulus % q2:
        raise DomainError(f"{q2} does not divide {T.modulus}")
    return int(len(np.unique(T.reduce_keys(q2))))


def kernel_ordinals(T: GroupTable, q2: int) -> np.ndarray:
    """Ordinals of the elements congruent to the identity mod q2."""
    if T.modulus % q2:
        raise DomainError(f"{q2} does not divide {T.modulus}")
    ident = np.eye(T.d, dtype=np.int64) % q2
    return np.flatnonzero(np.all((T.elements % q2) == ident, axis=(1, 2)))


def crt_check(T: GroupTable, q1: int, q2: int) -> CheckResult:
    """Is pi_q(Gamma) the full product pi_{q1}(Gamma) x pi_{q2}(Gamma)?

    On failure the witness is a pair of ordinals ``(i, j)`` such that no table
    element reduces to ``elements[i] mod q1`` and ``elements[j] mod q2`` at once.
    """
    if math.gcd(q1, q2) != 1:
        raise DomainError(f"split {q1} * {q2} is not coprime")
    if q1 * q2 != T.modulus:
        raise DomainError(f"{q1} * {q2} != {T.modulus}")
    k1, k2 = T.reduce_keys(q1), T.reduce_keys(q2)
    u1, inv1 = np.unique(k1, return_inverse=True)
    u2, inv2 = np.unique(k2, return_inverse=True)
    pairs = inv1.astype(np.int64) * len(u2) + inv2
    n_pairs = len(np.unique(pairs))
    details = {"order": len(T), "order_q1": len(u1), "order_q2": len(u2)}
    if n_pairs != len(T):
        # CRT makes reduction injective; a collision would mean a corrupt table
        vals, first, counts = np.unique(pairs, return_index=True, return_counts=True)
        dup = vals[counts > 1][0]
        i, j = np.flatnonzero(pairs == dup)[:2]
        return CheckResult(False, ("collision", int(i), int(j)), details)
    if len(T) == len(u1) * len(u2):
        return CheckResult(True, None, details)
    present = set(pairs.tolist())
    rep1 = np.unique(inv1, return_index=True)[1]
    rep2 = np.unique(inv2, return_index=True)[1]
    for a in range(len(u1)):
        for b in range(len(u2)):
            if a * len(u2) + b not in present:
                return CheckResult(False, ("missing", int(rep1[a]), int(rep2[b])), details)
    raise AssertionError("unreachable")


def crt_scan(S: GeneratorSet, q_values, threshold: int = 0, cap: int = DEFAULT_CAP):
    """Run :func:`crt_check` over every coprime split of each q whose primes
    all exceed ``threshold``; returns ``{q: [(q1, q2, ok), ...]}``."""
    out = {}
    for q in q_values:
        fm = factorize(q)
        if len(fm.factors) < 2 or min(fm.primes) <= threshold:
            continue
        T = enumerate_group(S, q, cap)
        pp = fm.prime_powers()
        rows = []
        for mask in range(1, 2 ** (len(pp) - 1)):
            q1 = math.prod(x for i, x in enumerate(pp) if mask >> i & 1)
            rows.append((q1, q // q1, crt_check(T, q1, q // q1).ok))
        out[q] = rows
    return out


# ---------------------------------------------------------------------------
# regularization


def regularize(A, group_orders=None):
    """Extract a fibre-regular subset of a set of m-tuples.

    Returns ``(A_reg, K)`` where ``A_reg`` is a sorted list of tuples and, for
    every level i and every surviving (i-1)-prefix, exactly ``K[i]`` distinct
    i-th coordinates extend that prefix inside ``A_reg``.  Levels are processed
    from the last coordinate inwards; at each level the fibre size K is the
    threshold maximizing ``K * #{prefixes with >= K surviving children}``, which
    keeps at least a ``1/H_N`` share of the mass (``H_N`` the harmonic number of
    the largest fibre, ``N <= |pi_{p_i}|``).
    """
    pts = sorted({tuple(a) for a in A})
    if not pts:
        raise DomainError("cannot regularize an empty set")
    m = len(pts[0])
    if m < 1 or any(len(t) != m for t in pts):
        raise DomainError("all points must be tuples of the same positive length")
    K = [0] * m
    for level in range(m - 1, -1, -1):
        children: dict[tuple, list] = {}
        for t in pts:
            lst = children.setdefault(t[:level], [])
            if not lst or lst[-1] != t[level]:
                if t[level] not in lst:
                    lst.append(t[level])
        sizes = sorted((len(v) for v in children.values()), reverse=True)
        best_k, best_mass = 1, 0
        for rank, f in enumerate(sizes, 1):
            # f is the fibre size of the rank-th largest prefix
            if f * rank > best_mass or (f * rank == best_mass and f > best_k):
                best_k, best_mass = f, f * rank
        keep = {
            prefix: set(sorted(kids)[:best_k])
            for prefix, kids in children.items()
            if len(kids) >= best_k
        }
        pts = [t for t in pts if t[:level] in keep and t[level] in keep[t[:level]]]
        K[level] = best_k
    if group_orders is not None:
        bound = len(set(map(tuple, A))) / math.prod(2 * math.log(n) for n in group_orders)
        if len(pts) < bound:
            raise AssertionError("regularization lost more mass than allowed")
    return pts, tuple(K)


def is_fiber_regular(A, K) -> bool:
    pts = sorted({tuple(a) for a in A})
    if len(pts) != math.prod(K):
        return False
    for level, k in enumerate(K):
        children: dict[tuple, set] = {}
        for t in pts:
            children.setdefault(t[:level], set()).add(t[level])
        if any(len(v) != k for v in children.values()):
            return False
    return True


# ---------------------------------------------------------------------------
# subgroup closures and structural checks


def subgroup_closure(T: GroupTable, gen_ords) -> np.ndarray:
    """Sorted ordinals of the subgroup generated by the given elements."""
    gens = np.unique(np.asarray(gen_ords, dtype=np.int64))
    inside = np.zeros(len(T), dtype=bool)
    inside[0] = True
    frontier = np.array([0], dtype=np.int64)
    use_table = len(T) <= 4096
    cay = T.cayley if use_table else None
    while len(frontier):
        if use_table:
            prod = cay[np.ix_(gens, frontier)].ravel()
        else:
            prod = T.mul(gens[:, None], frontier[None, :]).ravel()
        prod = np.unique(prod)
        prod = prod[~inside[prod]]
        inside[prod] = True
        frontier = prod
    return np.flatnonzero(inside)


def is_prime(n: int) -> bool:
    fm = factorize(n)
    return len(fm.factors) == 1 and fm.factors[0][1] == 1


def unipotent_ordinals(T: GroupTable) -> np.ndarray:
    q = T.modulus
    X = (T.elements - np.eye(T.d, dtype=np.int64)) % q
    P = np.broadcast_to(np.eye(T.d, dtype=np.int64), X.shape).copy()
    for _ in range(T.d):
        P = (P @ X) % q
    return np.flatnonzero(np.all(P == 0, axis=(1, 2)))


def unipotent_span_check(T: GroupTable) -> CheckResult:
    """Do the unipotent elements of pi_p(Gamma) generate it?"""
    if not is_prime(T.modulus):
        raise DomainError(f"modulus {T.modulus} is not prime")
    if T.modulus <= T.d:
        raise DomainError(f"need p > d, got p={T.modulus}, d={T.d}")
    uni = unipotent_ordinals(T)
    span = subgroup_closure(T, uni)
    return CheckResult(len(span) == len(T), None, {"unipotents": len(uni), "span": len(span)})


def lie_kernel_check(S: GeneratorSet, p: int, cap: int = DEFAULT_CAP) -> CheckResult:
    """Check the structure of ker(pi_{p^2} -> pi_p) exhaustively.

    (a) every kernel element is 1 + p*x and g -> x mod p is an injective group
    homomorphism onto trace-zero matrices; (b) for a lift ``a`` of every element
    of pi_p(Gamma), a (1 + p x) a^-1 = 1 + p * (a x a^-1) mod p^2.
    """
    if not is_prime(p):
        raise DomainError(f"{p} is not prime")
    if p <= S.d:
        raise DomainError(f"need p > d, got p={p}, d={S.d}")
    T = enumerate_group(S, p * p, cap)
    return lie_kernel_check_table(T, p)


def lie_kernel_check_table(T: GroupTable, p: int) -> CheckResult:
    p2 = p * p
    d = T.d
    eye = np.eye(d, dtype=np.int64)
    ker = kernel_ordinals(T, p)
    G = T.elements[ker]
    D = (G - eye) % p2
    if np.any(D % p):
        return CheckResult(False, G[np.flatnonzero(np.any(D % p, axis=(1, 2)))[0]], {"kernel_size": len(ker)})
    X = (D // p) % p
    xkeys = encode_keys(X, p)
    details = {"kernel_size": int(len(ker)), "traceless": bool(np.all(np.trace(X, axis1=1, axis2=2) % p == 0))}
    if len(np.unique(xkeys)) != len(ker):
        return CheckResult(False, "x-map not injective", details)
    if not details["traceless"]:
        bad = np.flatnonzero(np.trace(X, axis1=1, axis2=2) % p)[0]
        return CheckResult(False, G[bad], details)
    # additivity over all ordered pairs
    n = len(ker)
    for start in range(0, n, 256):
        blk = slice(start, min(n, start + 256))
        prod = (G[blk, None] @ G[None, :]) % p2
        xp = ((prod - eye) // p) % p
        want = (X[blk, None] + X[None, :]) % p
        if not np.array_equal(xp, want):
            i, j = np.argwhere(np.any(xp != want, axis=(2, 3)))[0]
            return CheckResult(False, (G[start + i], G[j]), details)
    # conjugation against Ad for one lift of every element mod p
    kp = T.reduce_keys(p)
    _, lift = np.unique(kp, return_index=True)
    lifts = T.elements[lift]
    inv = T.elements[T.inverse[lift]]
    details["lifts"] = int(len(lift))
    for a, ai in zip(lifts, inv):
        lhs = (a @ G @ ai) % p2
        rhs = (eye + p * ((a @ X @ ai) % p)) % p2
        if not np.array_equal(lhs, rhs):
            k = np.flatnonzero(np.any(lhs != rhs, axis=(1, 2)))[0]
            return CheckResult(False, (a, G[k]), details)
    return CheckResult(True, None, details)
