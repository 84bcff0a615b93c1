"""Exact modular integer and matrix arithmetic.

Everything here works on Python integers (or numpy arrays of them), so
results are exact for any modulus.  Matrices are small (d <= 6) and are
handled as numpy arrays; the ``object`` dtype is used whenever products could
leave the int64 range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np
from sympy import factorint

from .errors import DomainError, UnsupportedModulusError

#: Valuation reported for zero (or for anything at/above the working cap).
INF_VAL = math.inf

# int64 products of reduced entries stay exact below this modulus for d <= 6
INT64_SAFE_MODULUS = 1 << 29


@dataclass(frozen=True)
class FactoredModulus:
    q: int
    factors: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.q < 1:
            raise DomainError(f"modulus must be positive, got {self.q}")
        prod = 1
        last = 1
        for p, m in self.factors:
            if p <= last or m < 1:
                raise DomainError(f"malformed factorization {self.factors}")
            last = p
            prod *= p**m
        if prod != self.q:
            raise DomainError(f"factors {self.factors} do not multiply to {self.q}")

    @property
    def radical(self) -> int:
        return math.prod(p for p, _ in self.factors)

    @property
    def primes(self) -> tuple[int, ...]:
        return tuple(p for p, _ in self.factors)

    def exponent(self, p: int) -> int:
        for pp, m in self.factors:
            if pp == p:
                return m
        return 0

    def prime_powers(self) -> list[int]:
        return [p**m for p, m in self.factors]

    def __int__(self):
        return self.q


def factorize(q: int) -> FactoredModulus:
    if isinstance(q, FactoredModulus):
        return q
    q = int(q)
    if q < 1:
        raise DomainError(f"cannot factor {q}: modulus must be >= 1")
    return FactoredModulus(q, tuple(sorted(factorint(q).items())))


def delta2(p: int) -> int:
    return 1 if p == 2 else 0


def derived_moduli(fm, I=None, delta=None):
    """Return ``(q_I, r_I, q_delta, r_dot)`` for the modulus ``fm``.

    ``I`` defaults to all primes of ``fm``.  ``q_delta`` is ``None`` when no
    ``delta`` is supplied.  ``r_dot`` needs the exponent of 2 to differ from 1;
    otherwise :class:`UnsupportedModulusError` is raised.
    """
    fm = factorize(fm)
    primes = set(fm.primes)
    I = primes if I is None else set(I)
    if not I <= primes:
        raise DomainError(f"primes {sorted(I - primes)} do not divide {fm.q}")
    q_I = math.prod(p**m for p, m in fm.factors if p in I)
    r_I = math.prod(p for p, _ in fm.factors if p in I)
    q_delta = None
    if delta is not None:
        delta = Fraction(delta)
        if not 0 < delta < 1:
            raise DomainError("delta must lie in (0, 1)")
        q_delta = math.prod(p ** math.floor(delta * m) for p, m in fm.factors)
    return q_I, r_I, q_delta, r_dot(fm)


def r_dot(fm) -> int:
    fm = factorize(fm)
    if fm.exponent(2) == 1:
        raise UnsupportedModulusError(
            f"q = {fm.q} has 2-adic exponent 1; the mod-q exponential is undefined"
        )
    return math.prod(p ** (1 + delta2(p)) for p in fm.primes)


def vp(n: int, p: int, cap: int | None = None):
    """p-adic valuation of an integer; ``INF_VAL`` for 0 (or for >= cap)."""
    n = int(n)
    if cap is not None:
        n %= p**cap
    if n == 0:
        return INF_VAL
    v = 0
    while n % p == 0:
        n //= p
        v += 1
    return v


def vp_mat(x, p: int, cap: int | None = None):
    """Minimum p-adic valuation over the entries of an integer matrix."""
    best = INF_VAL
    for e in np.asarray(x, dtype=object).ravel():
        v = vp(e, p, cap)
        if v < best:
            best = v
    return best


def vp_factorial(n: int, p: int) -> int:
    total, pk = 0, p
    while pk <= n:
        total += n // pk
        pk *= p
    return total


def gcd_shift(q, g) -> int:
    """``prod p^min(m_p, v_p(g - 1))``, i.e. gcd of q with every entry of g - 1."""
    fm = factorize(q)
    a = np.asarray(getattr(g, "entries", g), dtype=object)
    shifted = a - np.eye(a.shape[0], dtype=int).astype(object)
    out = 1
    for p, m in fm.factors:
        v = vp_mat(shifted, p, cap=m)
        out *= p ** (m if v == INF_VAL else min(m, v))
    return out


def crt_pair(r1: int, n1: int, r2: int, n2: int) -> tuple[int, int]:
    g = math.gcd(n1, n2)
    if g != 1:
        raise DomainError(f"moduli {n1} and {n2} are not coprime")
    u = pow(n1, -1, n2)
    n = n1 * n2
    return (r1 + (r2 - r1) * u % n2 * n1) % n, n


def crt(residues, moduli) -> tuple[int, int]:
    return reduce(lambda a, b: crt_pair(a[0], a[1], b[0], b[1]), zip(residues, moduli), (0, 1))


def crt_matrix(mats, moduli) -> np.ndarray:
    """Entrywise CRT recombination of matrices given modulo coprime moduli."""
    mats = [np.asarray(m, dtype=object) for m in mats]
    out = np.empty(mats[0].shape, dtype=object)
    for idx in np.ndindex(out.shape):
        out[idx] = crt([int(m[idx]) for m in mats], moduli)[0]
    return out


def _safe_dtype(q: int):
    return np.int64 if q <= INT64_SAFE_MODULUS else object


def mat_mod(a, q: int) -> np.ndarray:
    arr = np.asarray(a)
    if arr.dtype == object or q > INT64_SAFE_MODULUS:
        arr = np.asarray(a, dtype=object) % q
        return arr if q > INT64_SAFE_MODULUS else arr.astype(np.int64)
    return arr.astype(np.int64) % q


def matmul_mod(a, b, q: int) -> np.ndarray:
    dt = _safe_dtype(q)
    return (np.asarray(a, dtype=dt) @ np.asarray(b, dtype=dt)) % q


def matpow_mod(a, n: int, q: int) -> np.ndarray:
    a = mat_mod(a, q)
    result = mat_mod(np.eye(a.shape[-1], dtype=int), q)
    if n < 0:
        a, n = inv_mod(a, q), -n
    while n:
        if n & 1:
            result = matmul_mod(result, a, q)
        a = matmul_mod(a, a, q)
        n >>= 1
    return result


def _inv_mod_prime_power(a, p: int, n: int) -> np.ndarray:
    d = a.shape[0]
    aug = np.concatenate([np.asarray(a, dtype=object) % n, np.eye(d, dtype=int).astype(object)], axis=1)
    for col in range(d):
        piv = next((r for r in range(col, d) if aug[r, col] % p), None)
        if piv is None:
            raise DomainError("matrix is not invertible")
        aug[[col, piv]] = aug[[piv, col]]
        aug[col] = aug[col] * pow(int(aug[col, col]), -1, n) % n
        for r in range(d):
            if r != col and aug[r, col]:
                aug[r] = (aug[r] - aug[r, col] * aug[col]) % n
    return aug[:, d:]


def inv_mod(a, q: int) -> np.ndarray:
    """Inverse of a square integer matrix modulo q (Gauss-Jordan per prime power)."""
    fm = factorize(q)
    a = np.asarray(a, dtype=object)
    if fm.q == 1:
        return np.zeros(a.shape, dtype=object)
    parts = [_inv_mod_prime_power(a, p, p**m) for p, m in fm.factors]
    inv = parts[0] if len(parts) == 1 else crt_matrix(parts, fm.prime_powers())
    return mat_mod(inv, q)


def int_inverse_sl(a) -> np.ndarray:
    """Exact integer inverse of a determinant-one integer matrix."""
    from sympy import Matrix

    m = Matrix(np.asarray(a, dtype=object).tolist())
    if m.det() != 1:
        raise DomainError("matrix does not have determinant 1")
    return np.array(m.adjugate().tolist(), dtype=object)


def det_mod(a, q: int) -> int:
    from sympy import Matrix

    return int(Matrix(np.asarray(a, dtype=object).tolist()).det()) % q


@dataclass(frozen=True, eq=False)
class MatModQ:
    """A square integer matrix with entries reduced into ``[0, q)``."""

    q: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        e = mat_mod(self.entries, self.q)
        if e.ndim != 2 or e.shape[0] != e.shape[1] or e.shape[0] < 1:
            raise DomainError(f"expected a square matrix, got shape {e.shape}")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @classmethod
    def identity(cls, d: int, q: int) -> "MatModQ":
        return cls(q, np.eye(d, dtype=int))

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    def key(self) -> bytes:
        return canonical_key(self.entries)

    def __matmul__(self, other: "MatModQ") -> "MatModQ":
        if other.q != self.q:
            raise DomainError("moduli differ")
        return MatModQ(self.q, matmul_mod(self.entries, other.entries, self.q))

    def inverse(self) -> "MatModQ":
        return MatModQ(self.q, inv_mod(self.entries, self.q))

    def reduce(self, q2: int) -> "MatModQ":
        if self.q % q2:
            raise DomainError(f"{q2} does not divide {self.q}")
        return MatModQ(q2, self.entries)

    def det(self) -> int:
        return det_mod(self.entries, self.q)

    def is_identity(self) -> bool:
        return bool(np.all(self.entries == np.eye(self.d, dtype=int) % self.q))

    def __eq__(self, other):
        return (
            isinstance(other, MatModQ)
            and other.q == self.q
            and np.array_equal(self.entries, other.entries)
        )

    def __hash__(self):
        return hash((self.q, self.key()))

    def __repr__(self):
        return f"MatModQ(q={self.q}, {self.entries.tolist()})"


def canonical_key(entries) -> bytes:
    """Row-major big-endian uint64 encoding; byte order equals entry order."""
    return np.asarray(entries, dtype=np.uint64).astype(">u8").tobytes()
