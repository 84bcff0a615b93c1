"""Quasi-randomness at desk scale: conjugacy classes, irreducible degrees,
minimal nontrivial degree, Gowers covering, subgroup-index probes and the
search for non-split lifts mod p^2.

Irreducible degrees follow Dixon: the class sums span a commutative algebra
whose structure constants are integers; over a prime field F_l with
l = 1 mod exp(G) the central characters are its joint eigenvectors, and
each one yields chi(1)^2 = |G| / sum_k w_k w_{k*} / |C_k| mod l.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from sympy import isprime

from .errors import CapExceededError, ConvergenceError, DomainError, InvariantViolation
from .grpenum import (
    CheckResult,
    GeneratorSet,
    GroupTable,
    encode_keys,
    enumerate_group,
    is_prime,
    subgroup_closure,
)
from .modq import inv_mod, vp_mat

CLASS_CAP = 100_000
DEGREE_CAP = 20_000
MAX_CLASSES = 64


@dataclass
class ClassData:
    labels: np.ndarray  # class index of every ordinal
    classes: list  # arrays of ordinals, ordered by representative
    sizes: list
    representatives: list

    def __len__(self):
        return len(self.classes)


def conjugacy_classes(T: GroupTable) -> ClassData:
    """Orbits of conjugation by the generators (which generate the table)."""
    n = len(T)
    if n > CLASS_CAP:
        raise CapExceededError(f"order {n} above the class cap {CLASS_CAP}", n)
    idx = np.arange(n)
    inv = T.inverse
    src, dst = [idx], [idx]
    for g in np.unique(T.generator_ordinals()):
        gx = T.mul(np.full(n, g), idx)
        conj = T.mul(gx, np.full(n, inv[g]))
        src.append(idx)
        dst.append(conj)
    src, dst = np.concatenate(src), np.concatenate(dst)
    graph = coo_matrix((np.ones(len(src), dtype=np.int8), (src, dst)), shape=(n, n))
    _, raw = connected_components(graph, directed=False)
    # relabel by least ordinal, so class 0 is the identity
    first = np.full(raw.max() + 1, n)
    np.minimum.at(first, raw, idx)
    order = np.argsort(first)
    relabel = np.empty_like(order)
    relabel[order] = np.arange(len(order))
    labels = relabel[raw]
    classes = [np.flatnonzero(labels == c) for c in range(len(order))]
    return ClassData(labels, classes, [len(c) for c in classes], [int(c[0]) for c in classes])


def element_orders(T: GroupTable, ords) -> list[int]:
    out = []
    for x in np.asarray(ords).tolist():
        k, y = 1, x
        while y != 0:
            y = int(T.mul(y, x))
            k += 1
        out.append(k)
    return out


def class_structure_constants(T: GroupTable, cd: ClassData) -> np.ndarray:
    """a[i, j, k] = #{(x, y) in C_i x C_j : x y = z_k} for a fixed z_k in C_k."""
    r = len(cd)
    a = np.zeros((r, r, r), dtype=np.int64)
    inv = T.inverse
    n = len(T)
    xs = np.arange(n)
    for k, z in enumerate(cd.representatives):
        prod = T.mul(inv[xs], np.full(n, z))
        np.add.at(a, (cd.labels[xs], cd.labels[prod], k), 1)
    return a


def _dixon_prime(exponent: int, order: int, n_classes: int) -> int:
    # l > 2 sqrt|G| pins the degrees down; l >> r^2 keeps a random
    # combination of class sums from merging two eigenvalues
    floor = max(2 * math.isqrt(order) + 2, 100 * n_classes**2)
    ell = exponent + 1
    while not (isprime(ell) and ell > floor):
        ell += exponent
    if ell >= 1 << 26:
        raise CapExceededError(f"Dixon prime {ell} too large for int64 arithmetic", ell)
    return ell


def _charpoly_mod(M: np.ndarray, ell: int) -> list[int]:
    """Faddeev-LeVerrier modulo ell; returns coefficients, leading first."""
    n = M.shape[0]
    coeffs = [1]
    Mk = np.zeros_like(M)
    eye = np.eye(n, dtype=np.int64)
    c = 1
    for k in range(1, n + 1):
        Mk = (M @ Mk + c * eye) % ell
        AM = (M @ Mk) % ell
        c = (-int(np.trace(AM) % ell) * pow(k, -1, ell)) % ell
        coeffs.append(c)
    return coeffs


def _nullspace_mod(A: np.ndarray, ell: int) -> list[np.ndarray]:
    A = A.copy() % ell
    rows, cols = A.shape
    pivots = []
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if A[i, c]), None)
        if piv is None:
            continue
        A[[r, piv]] = A[[piv, r]]
        A[r] = A[r] * pow(int(A[r, c]), -1, ell) % ell
        for i in range(rows):
            if i != r and A[i, c]:
                A[i] = (A[i] - A[i, c] * A[r]) % ell
        pivots.append(c)
        r += 1
        if r == rows:
            break
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for f in free:
        v = np.zeros(cols, dtype=np.int64)
        v[f] = 1
        for i, pc in enumerate(pivots):
            v[pc] = (-A[i, f]) % ell
        basis.append(v)
    return basis


def _joint_eigenvectors(mats: np.ndarray, ell: int, rng) -> list[np.ndarray]:
    r = mats.shape[1]
    lam = np.arange(ell, dtype=np.int64)
    for _ in range(20):
        c = rng.integers(1, ell, size=len(mats))
        M = np.tensordot(c, mats, axes=1) % ell
        poly = _charpoly_mod(M, ell)
        vals = np.zeros(ell, dtype=np.int64)
        for coef in poly:
            vals = (vals * lam + coef) % ell
        roots = np.flatnonzero(vals == 0)
        if len(roots) != r:
            continue
        vecs = []
        for root in roots:
            ns = _nullspace_mod((M - int(root) * np.eye(r, dtype=np.int64)) % ell, ell)
            if len(ns) != 1:
                break
            vecs.append(ns[0])
        if len(vecs) == r:
            return vecs
    raise ConvergenceError("class algebra did not split over F_l after 20 random combinations")


def character_degrees(T: GroupTable, method: str = "modular", seed: int = 0) -> list[int]:
    """Sorted degrees of the complex irreducible representations."""
    n = len(T)
    if n > DEGREE_CAP:
        raise CapExceededError(f"order {n} above the degree cap {DEGREE_CAP}", n)
    if n == 1:
        return [1]
    cd = conjugacy_classes(T)
    r = len(cd)
    if r > MAX_CLASSES:
        raise CapExceededError(f"{r} classes exceed {MAX_CLASSES}", r)
    a = class_structure_constants(T, cd)
    # a[i] as a matrix (j, k) has the central characters as right eigenvectors
    inv_class = cd.labels[T.inverse[cd.representatives]]
    sizes = np.array(cd.sizes, dtype=np.int64)
    rng = np.random.default_rng(seed)
    degrees = []
    if method == "modular":
        exponent = math.lcm(*element_orders(T, cd.representatives))
        ell = _dixon_prime(exponent, n, r)
        for v in _joint_eigenvectors(a % ell, ell, rng):
            v = v * pow(int(v[0]), -1, ell) % ell
            s = 0
            for k in range(r):
                s = (s + int(v[k]) * int(v[inv_class[k]]) * pow(int(sizes[k]), -1, ell)) % ell
            target = n * pow(s, -1, ell) % ell
            d = next((d for d in range(1, math.isqrt(n) + 1) if d * d % ell == target), None)
            if d is None:
                raise InvariantViolation("no integer degree matches a central character")
            degrees.append(d)
    elif method == "complex":
        M = np.tensordot(rng.standard_normal(r), a.astype(float), axes=1)
        _, vecs = np.linalg.eig(M)
        for col in vecs.T:
            w = col / col[0]
            s = np.sum(w * w[inv_class] / sizes)
            degrees.append(int(round(math.sqrt(abs(n / s)))))
        degrees.sort()
        if sum(d * d for d in degrees) != n:
            raise ConvergenceError("complex joint diagonalization failed; use method='modular'")
    else:
        raise DomainError(f"unknown method {method!r}")
    degrees.sort()
    if sum(d * d for d in degrees) != n or len(degrees) != r:
        raise InvariantViolation(f"degrees {degrees} fail sum of squares / class count")
    return degrees


def min_degree(T_or_degrees) -> int:
    """Smallest degree of a nontrivial irreducible representation."""
    degrees = list(T_or_degrees) if not isinstance(T_or_degrees, GroupTable) else character_degrees(T_or_degrees)
    rest = sorted(degrees)[1:]
    if not rest:
        raise DomainError("the trivial group has no nontrivial representation")
    return rest[0]


def frobenius_bound(p: int) -> float:
    return (p - 1) / 2


def qr_report(T: GroupTable) -> dict:
    degrees = character_degrees(T)
    m = min_degree(degrees) if len(T) > 1 else 1
    q = T.modulus
    bound = frobenius_bound(q) if is_prime(q) else None
    return {
        "q": q,
        "classes": len(degrees),
        "degrees": degrees,
        "min_degree": m,
        "frobenius_bound": bound,
        "bound_ok": None if bound is None else m >= bound,
    }


def _product(T: GroupTable, A, B) -> np.ndarray:
    A = np.unique(np.asarray(A, dtype=np.int64))
    B = np.unique(np.asarray(B, dtype=np.int64))
    if len(T) <= 4096:
        return np.unique(T.cayley[np.ix_(A, B)])
    return np.unique(T.mul(A[:, None], B[None, :]))


def gowers_cover_check(A1, A2, A3, T: GroupTable, m: int, strict: bool = True) -> CheckResult:
    """Does A1 A2 A3 cover the group?  When |A1||A2||A3| > |G|^3 / m a miss
    contradicts the covering lemma; with ``strict`` that raises."""
    n = len(T)
    sizes = [len(np.unique(np.asarray(x))) for x in (A1, A2, A3)]
    prod = _product(T, _product(T, A1, A2), A3)
    hyp = math.prod(sizes) * m > n**3
    covered = len(prod) == n
    if hyp and not covered and strict:
        raise InvariantViolation(f"product set of size {len(prod)} misses elements under the size hypothesis")
    return CheckResult(covered, None, {"product_size": int(len(prod)), "hypothesis": hyp, "sizes": sizes})


def min_proper_index_probe(T: GroupTable, trials: int = 500, seed: int = 0):
    """Smallest index of a proper subgroup generated by random 1- or 2-tuples.

    An upper bound on the true minimum.  Returns ``(index, bound_ok)`` where
    index is None when no proper subgroup was met; bound_ok compares against
    (p - 1)/2 for prime moduli (None otherwise).
    """
    n = len(T)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(trials):
        size = int(rng.integers(1, 3))
        gens = rng.integers(0, n, size=size)
        h = len(subgroup_closure(T, gens))
        if h < n:
            idx = n // h
            best = idx if best is None else min(best, idx)
    bound_ok = None
    if best is not None and is_prime(T.modulus):
        bound_ok = best >= frobenius_bound(T.modulus)
    return best, bound_ok


def min_proper_index_exhaustive(T: GroupTable) -> int | None:
    """Minimum index over subgroups generated by at most two elements.

    Pairs are taken up to conjugacy of the first element.
    """
    n = len(T)
    cd = conjugacy_classes(T)
    best = None
    for x in cd.representatives:
        for y in range(n):
            h = len(subgroup_closure(T, [x, y]))
            if h < n and (best is None or n // h < best):
                best = n // h
    return best


@dataclass
class NonsplitResult:
    found: bool
    witness: np.ndarray | None
    pair: tuple | None
    trials_used: int
    valuation: int | None


def section_defect_search(quotient, section, p: int, trials: int, seed: int = 0) -> NonsplitResult:
    """Search random pairs (x, y) of the mod-p group for psi(xy) != psi(x)psi(y).

    ``quotient`` is an array of matrices mod p closed under multiplication and
    ``section`` maps such a matrix to a matrix mod p^2 reducing to it.
    """
    quotient = np.asarray(quotient, dtype=np.int64)
    p2 = p * p
    keys = encode_keys(quotient % p, p)
    lookup = {k: i for i, k in enumerate(keys.tolist())}
    lifts = [np.asarray(section(x), dtype=np.int64) % p2 for x in quotient]
    lift_inv = [inv_mod(l, p2).astype(np.int64) for l in lifts]
    eye = np.eye(quotient.shape[1], dtype=np.int64)
    rng = np.random.default_rng(seed)
    n = len(quotient)
    for t in range(1, trials + 1):
        i, j = (int(v) for v in rng.integers(0, n, size=2))
        xy = (quotient[i] @ quotient[j]) % p
        k = lookup[encode_keys(xy[None], p)[0]]
        z = (lifts[k] @ lift_inv[j] @ lift_inv[i]) % p2
        if not np.array_equal(z, eye % p2):
            v = vp_mat(z - eye, p, 2)
            if np.any((z - eye) % p) or v != 1:
                raise InvariantViolation(f"witness {z.tolist()} is not in ker pi_p minus ker pi_p^2")
            return NonsplitResult(True, z, (i, j), t, int(v))
    return NonsplitResult(False, None, None, trials, None)


def nonsplit_probe(S: GeneratorSet, p: int, trials: int = 1000, seed: int = 0, cap: int = 4_000_000) -> NonsplitResult:
    """Use the BFS-shortest lifts as a section of pi_{p^2} -> pi_p."""
    if not is_prime(p):
        raise DomainError(f"{p} is not prime")
    if p <= 2 * S.d:
        raise DomainError(f"need p > 2d, got p={p}, d={S.d}")
    T2 = enumerate_group(S, p * p, cap)
    kp = T2.reduce_keys(p)
    _, first = np.unique(kp, return_index=True)
    first = np.sort(first)  # canonical (BFS) order of the first lift
    quotient = T2.elements[first] % p
    lift_of = {k: T2.elements[i] for k, i in zip(encode_keys(quotient, p).tolist(), first)}
    return section_defect_search(quotient, lambda x: lift_of[encode_keys(x[None] % p, p)[0]], p, trials, seed)


def teichmuller_torus(p: int):
    """A split control: the diagonal torus mod p with its Teichmuller section."""
    g = next(g for g in range(2, p) if all(pow(g, (p - 1) // f, p) != 1 for f in _prime_factors(p - 1)))
    quotient = np.array([[[pow(g, k, p), 0], [0, pow(g, -k, p)]] for k in range(p - 1)], dtype=np.int64)

    def section(x):
        t = int(x[0, 0])
        w = pow(t, p, p * p)
        return np.array([[w, 0], [0, pow(w, -1, p * p)]], dtype=np.int64)

    return quotient, section


def _prime_factors(n):
    out, f = [], 2
    while f * f <= n:
        if n % f == 0:
            out.append(f)
            while n % f == 0:
                n //= f
        f += 1
    if n > 1:
        out.append(n)
    return out
