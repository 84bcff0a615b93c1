"""Linear random walks on (Z/qZ)^dim and their Fourier coefficients.

A :class:`TorusMeasure` is stored densely: ``weights[i]`` is the mass of the
vector whose row-major multi-index in ``(q,)*dim`` is ``i``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import CapExceededError, DomainError
from .modq import factorize, gcd_shift, inv_mod, vp_mat

MAX_STATES = 1 << 26
ZERO_TOL = 1e-12
CSV_COLUMNS = ("q", "n", "s", "max_abs_coeff", "tau_hat")


@dataclass(frozen=True, eq=False)
class TorusMeasure:
    q: int
    dim: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.shape[0] != self.q**self.dim:
            raise DomainError(f"expected {self.q ** self.dim} weights, got {w.shape[0]}")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
            raise DomainError("weights must be nonnegative with total mass 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def point(cls, q, dim, v) -> "TorusMeasure":
        w = np.zeros(q**dim)
        w[index_of(v, q)] = 1
        return cls(q, dim, w)

    @classmethod
    def uniform(cls, q, dim) -> "TorusMeasure":
        return cls(q, dim, np.full(q**dim, 1.0 / q**dim))

    @classmethod
    def from_support(cls, q, dim, support: dict) -> "TorusMeasure":
        w = np.zeros(q**dim)
        for v, x in support.items():
            w[index_of(v, q)] += float(x)
        return cls(q, dim, w)

    @property
    def support(self) -> dict:
        idx = np.flatnonzero(self.weights)
        coords = np.array(np.unravel_index(idx, (self.q,) * self.dim)).T
        return {tuple(int(c) for c in v): float(self.weights[i]) for v, i in zip(coords, idx)}

    def grid(self) -> np.ndarray:
        return self.weights.reshape((self.q,) * self.dim)


def index_of(v, q) -> int:
    v = [int(x) % q for x in v]
    return int(np.ravel_multi_index(tuple(v), (q,) * len(v)))


def _all_states(q, dim) -> np.ndarray:
    return np.array(np.unravel_index(np.arange(q**dim), (q,) * dim)).T


def state_permutation(g, q, states=None) -> np.ndarray:
    """idx(x) -> idx(g x mod q) on all of (Z/qZ)^dim."""
    g = np.asarray(np.array(g, dtype=object) % q, dtype=np.int64)
    dim = g.shape[0]
    states = _all_states(q, dim) if states is None else states
    img = (states @ g.T) % q
    return np.ravel_multi_index(tuple(img.T), (q,) * dim)


def push_linear(atoms, v, q: int, n: int, cap: int = MAX_STATES) -> TorusMeasure:
    """Exact law of g_n ... g_1 v mod q, the g_i i.i.d. with law ``atoms``.

    ``atoms`` is a sequence of ``(weight, integer matrix)`` pairs.
    """
    v = np.array(v, dtype=object)
    dim = v.shape[0]
    if all(int(x) % q == 0 for x in v):
        raise DomainError("v must be nonzero mod q")
    if q**dim > cap:
        raise CapExceededError(
            f"{q}^{dim} states exceed the DP cap {cap}; use sample_linear instead", q**dim
        )
    states = _all_states(q, dim)
    perms = [state_permutation(g, q, states) for _, g in atoms]
    weights = [float(w) for w, _ in atoms]
    cur = np.zeros(q**dim)
    cur[index_of(v, q)] = 1.0
    for _ in range(n):
        nxt = np.zeros_like(cur)
        for perm, w in zip(perms, weights):
            nxt[perm] += w * cur
        cur = nxt
    return TorusMeasure(q, dim, cur / cur.sum())


def sample_linear(atoms, v, q: int, n: int, samples: int, rng=None):
    """Monte-Carlo version of :func:`push_linear`.

    Returns ``(measure, stderr)`` where ``stderr`` holds the binomial standard
    error of every empirical frequency.
    """
    rng = np.random.default_rng(rng)
    mats = np.array([np.array(g, dtype=object) % q for _, g in atoms], dtype=np.int64)
    p = np.array([float(w) for w, _ in atoms])
    dim = mats.shape[1]
    x = np.tile(np.array([int(c) % q for c in v], dtype=np.int64), (samples, 1))
    for _ in range(n):
        pick = rng.choice(len(mats), size=samples, p=p / p.sum())
        x = np.einsum("nij,nj->ni", mats[pick], x) % q
    idx = np.ravel_multi_index(tuple(x.T), (q,) * dim)
    freq = np.bincount(idx, minlength=q**dim) / samples
    stderr = np.sqrt(freq * (1 - freq) / samples)
    return TorusMeasure(q, dim, freq), stderr


def fourier_coeff(nu: TorusMeasure, b) -> complex:
    """sum_x nu(x) exp(2 pi i <b, x> / q), summed directly over the support."""
    idx = np.flatnonzero(nu.weights)
    coords = np.array(np.unravel_index(idx, (nu.q,) * nu.dim)).T
    b = np.array([int(x) % nu.q for x in b], dtype=np.int64)
    phase = (coords @ b) % nu.q
    return complex(np.sum(nu.weights[idx] * np.exp(2j * np.pi * phase / nu.q)))


def fourier_transform(nu: TorusMeasure) -> np.ndarray:
    """All coefficients at once, shaped ``(q,)*dim`` and indexed by b."""
    return np.fft.ifftn(nu.grid()) * nu.q**nu.dim


def frequency_buckets(q: int, dim: int) -> np.ndarray:
    """s = q / gcd(q, b) for every frequency b, shaped ``(q,)*dim``."""
    coords = np.indices((q,) * dim).reshape(dim, -1)
    g = np.full(coords.shape[1], q, dtype=np.int64)
    for c in coords:
        g = np.gcd(g, c)
    return (q // g).reshape((q,) * dim)


@dataclass
class DecayProfile:
    q: int
    rows: list  # (s, max |nu_hat(b)| over b with q/gcd(q,b) = s)
    tau_hat: float

    def bucket(self, s):
        return dict(self.rows)[s]


def decay_profile(nu: TorusMeasure) -> DecayProfile:
    """Max Fourier modulus per level s = q/gcd(q,b) and the fitted exponent.

    tau_hat is the least-squares slope through the origin of -log(max) against
    log(s) over the levels s > 1; it is +inf when some such level vanishes.
    """
    coeffs = np.abs(fourier_transform(nu)).ravel()
    s = frequency_buckets(nu.q, nu.dim).ravel()
    levels = np.unique(s)
    rows = [(int(t), float(coeffs[s == t].max())) for t in levels]
    fit = [(t, c) for t, c in rows if t > 1]
    if not fit:
        tau = math.nan
    elif any(c <= ZERO_TOL for _, c in fit):
        tau = math.inf
    else:
        x = np.log([t for t, _ in fit])
        y = -np.log([c for _, c in fit])
        tau = float(np.dot(x, y) / np.dot(x, x))
    return DecayProfile(nu.q, rows, tau)


def profile_csv(profiles) -> str:
    """CSV with columns q, n, s, max_abs_coeff, tau_hat for ``(n, profile)`` pairs."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for n, prof in profiles:
        for s, c in prof.rows:
            w.writerow([prof.q, n, s, f"{c:.17g}", f"{prof.tau_hat:.17g}"])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# counting


def orbit_vectors(A, v, q: int) -> np.ndarray:
    """Distinct vectors a v mod q for the matrices a in A."""
    A = np.asarray(np.array(A, dtype=object) % q, dtype=np.int64)
    v = np.array([int(x) % q for x in v], dtype=np.int64)
    return np.unique((A @ v) % q, axis=0)


def _is_power_of_two(q):
    return q & (q - 1) == 0


def sumset_count(A, v, q: int, C: int, method: str = "auto", cap: int = MAX_STATES) -> int:
    """|{a_1 v + ... + a_C v mod q : a_i in A}| by iterated indicator convolution."""
    if C < 1:
        raise DomainError("C must be >= 1")
    vecs = orbit_vectors(A, v, q)
    dim = vecs.shape[1]
    if q**dim > cap:
        raise CapExceededError(f"{q}^{dim} states exceed the cap {cap}", q**dim)
    if method == "auto":
        method = "fft" if _is_power_of_two(q) else "naive"
    base = np.zeros((q,) * dim, dtype=bool)
    base[tuple(vecs.T)] = True
    cur = base
    if method == "fft":
        fb = np.fft.fftn(base.astype(float))
        for _ in range(C - 1):
            conv = np.fft.ifftn(np.fft.fftn(cur.astype(float)) * fb).real
            cur = conv > 0.5
    elif method == "naive":
        for _ in range(C - 1):
            nxt = np.zeros_like(cur)
            for w in vecs:
                nxt |= np.roll(cur, shift=tuple(int(x) for x in w), axis=tuple(range(dim)))
            cur = nxt
    else:
        raise DomainError(f"unknown method {method!r}")
    return int(cur.sum())


@dataclass
class OrbitCount:
    count: int
    benchmark: int
    precondition_ok: bool
    warning: str | None


def adjoint_orbit_count(A, g, q_I: int, C: int, dim: int = 3, delta=None, cumulative: bool = False) -> OrbitCount:
    """Distinct residues mod q_I of C-fold products of the conjugates a g a^-1.

    With ``cumulative`` the products of 1..C conjugates are pooled.  The
    benchmark is ``(q_I / gcd(q_I, g - 1)) ** dim``.
    """
    if C < 1:
        raise DomainError("C must be >= 1")
    fm = factorize(q_I)
    g = np.array(np.asarray(getattr(g, "entries", g), dtype=object) % q_I, dtype=object)
    d = g.shape[0]
    warning = None
    ok = True
    shifted = g - np.eye(d, dtype=int)
    for p, m in fm.factors:
        need = 1 + (p == 2)
        if delta is not None:
            need = max(need, math.floor(Fraction(delta) * m))
        if vp_mat(shifted, p, m) < need:
            ok = False
            warning = f"v_{p}(g - 1) < {need}; precondition fails"
    conj = []
    for a in A:
        a = np.array(a, dtype=object)
        conj.append(a.dot(g).dot(inv_mod(a, q_I)) % q_I)
    conj = np.unique(np.array(conj, dtype=np.int64).reshape(-1, d, d), axis=0)
    cur = conj
    pool = [conj]
    for _ in range(C - 1):
        cur = np.unique((cur[:, None] @ conj[None, :]).reshape(-1, d, d) % q_I, axis=0)
        pool.append(cur)
    result = np.unique(np.concatenate(pool), axis=0) if cumulative else cur
    bench = (q_I // gcd_shift(q_I, g)) ** dim
    return OrbitCount(int(len(result)), int(bench), ok, warning)
