"""Second eigenvalue, diameter and Cheeger bounds for Cayley graphs of the
finite quotients.

The walk operator is applied matrix-free through the generator permutations of
the table.  Three eigensolvers are available: a dense symmetric solve
(``dense``), ARPACK's implicitly restarted Lanczos on a deflated operator
(``lanczos``), and a plain power iteration with mean subtraction (``power``).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .errors import CapExceededError, ConvergenceError, DomainError, ExpanderLabError
from .grpenum import DEFAULT_CAP, GeneratorSet, GroupTable, enumerate_group
from .walk import SparseMeasure, left_actions

log = logging.getLogger(__name__)

DENSE_LIMIT = 4096
DEFAULT_TOL = 1e-10
DEFAULT_SEED = 20240101
REPORT_FIELDS = ("q", "order", "lambda2", "opnorm0", "gap", "diameter", "method", "residual", "cheeger", "seed")


class WalkOperator:
    """(T_mu f)(x) = sum_g mu(g) f(g^-1 x) on functions indexed by the table."""

    def __init__(self, T: GroupTable, mu: SparseMeasure):
        self.n = len(T)
        self.perms = left_actions(T, mu.ordinals())
        self.weights = np.array([float(w) for w in mu.weights()])
        self.symmetric = mu.is_symmetric(T)

    def apply(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        out = np.zeros_like(f)
        for perm, w in zip(self.perms, self.weights):
            out[perm] += w * f
        return out

    __call__ = apply

    def sparse_matrix(self) -> sp.csr_matrix:
        rows = np.concatenate(self.perms)
        cols = np.tile(np.arange(self.n), len(self.perms))
        vals = np.repeat(self.weights, self.n)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def dense_matrix(self) -> np.ndarray:
        return self.sparse_matrix().toarray()

    def components(self) -> int:
        return int(connected_components(self.sparse_matrix(), directed=False)[0])


def walk_operator_apply(T: GroupTable, mu: SparseMeasure, f) -> np.ndarray:
    return WalkOperator(T, mu).apply(f)


@dataclass
class EigenResult:
    lambda2: float
    lambda_min: float
    residual: float
    method: str
    components: int

    @property
    def opnorm0(self) -> float:
        return max(abs(self.lambda_min), self.lambda2)


def _residual(op, v, lam):
    return float(np.linalg.norm(op(v) - lam * v) / np.linalg.norm(v))


def _lambda_dense(op: WalkOperator) -> EigenResult:
    M = op.dense_matrix()
    vals, vecs = np.linalg.eigh((M + M.T) / 2)
    drop = int(np.argmin(np.abs(vals - 1.0)))
    keep = np.delete(np.arange(len(vals)), drop)
    top = keep[np.argmax(vals[keep])]
    bottom = keep[np.argmin(vals[keep])]
    lam2 = float(vals[top])
    res = _residual(op, vecs[:, top], lam2)
    return EigenResult(lam2, float(vals[bottom]), res, "dense", 0)


def _lambda_lanczos(op: WalkOperator, tol: float, seed: int, maxiter: int | None) -> EigenResult:
    n = op.n
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    v0 -= v0.mean()

    def shifted(sign):
        # constants sent to -2 (sign=+1) or +4 (sign=-1), away from the target end
        def mv(f):
            f = np.asarray(f, dtype=float).ravel()
            return op(f) - sign * 3.0 * f.mean() * np.ones(n)

        return LinearOperator((n, n), matvec=mv, dtype=float)

    out = []
    for which, sign in (("LA", 1), ("SA", -1)):
        try:
            vals, vecs = eigsh(shifted(sign), k=1, which=which, v0=v0, tol=tol * 1e-2, maxiter=maxiter)
        except ArpackNoConvergence as exc:
            best = exc.eigenvalues[0] if len(exc.eigenvalues) else None
            raise ConvergenceError("Lanczos did not converge", best) from exc
        out.append((float(vals[0]), vecs[:, 0]))
    (lam2, v2), (lmin, _) = out
    return EigenResult(lam2, lmin, _residual(op, v2, lam2), "lanczos", 0)


def _power_top(apply, n, rng, tol, maxiter):
    v = rng.standard_normal(n)
    v -= v.mean()
    v /= np.linalg.norm(v)
    lam = 0.0
    res = math.inf
    for _ in range(maxiter):
        w = apply(v)
        w -= w.mean()
        lam = float(v @ w)
        res = float(np.linalg.norm(w - lam * v))
        if res <= tol:
            return lam, v, res
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0, v, 0.0
        v = w / norm
    raise ConvergenceError(f"power iteration stalled at residual {res:.3g}", (lam, v))


def _lambda_power(op: WalkOperator, tol: float, seed: int, maxiter: int) -> EigenResult:
    rng = np.random.default_rng(seed)
    # shifts keep the wanted end of the spectrum dominant in modulus
    top, v, _ = _power_top(lambda f: (op(f) + f) / 2, op.n, rng, tol / 2, maxiter)
    bot, _, _ = _power_top(lambda f: (f - op(f)) / 2, op.n, rng, tol / 2, maxiter)
    lam2 = 2 * top - 1
    return EigenResult(lam2, 1 - 2 * bot, _residual(op, v, lam2), "power", 0)


def lambda2(T: GroupTable, mu: SparseMeasure, tol: float = DEFAULT_TOL, method: str = "auto", seed: int = DEFAULT_SEED, maxiter: int | None = None) -> EigenResult:
    """Largest eigenvalue of T_mu on mean-zero functions (and the smallest)."""
    op = WalkOperator(T, mu)
    if not op.symmetric:
        raise DomainError("measure is not symmetric")
    comps = op.components()
    if op.n == 1:
        return EigenResult(0.0, 0.0, 0.0, "dense", 1)
    if method == "auto":
        method = "dense" if op.n <= DENSE_LIMIT else "lanczos"
    if method == "dense":
        if op.n > 4 * DENSE_LIMIT:
            raise CapExceededError(f"dense solve refused for order {op.n}", op.n)
        res = _lambda_dense(op)
    elif method == "lanczos":
        if op.n < 4:
            res = _lambda_dense(op)
        else:
            res = _lambda_lanczos(op, tol, seed, maxiter)
    elif method == "power":
        res = _lambda_power(op, tol, seed, maxiter or 200_000)
    else:
        raise DomainError(f"unknown method {method!r}")
    res.components = comps
    if res.residual > max(tol, 1e-8) * 10:
        raise ConvergenceError(f"{res.method} residual {res.residual:.3g} above tolerance", res)
    return res


def bfs_distances(T: GroupTable, gen_ords) -> np.ndarray:
    """Word lengths from the identity using left multiplication by ``gen_ords``."""
    acts = left_actions(T, np.asarray(gen_ords))
    dist = np.full(len(T), -1, dtype=np.int64)
    dist[0] = 0
    frontier = np.array([0])
    k = 0
    while len(frontier):
        k += 1
        nxt = np.unique(acts[:, frontier].ravel())
        nxt = nxt[dist[nxt] < 0]
        dist[nxt] = k
        frontier = nxt
    return dist


def diameter(T: GroupTable, S=None) -> int:
    """Diameter of the Cayley graph; by vertex transitivity, the BFS depth
    from the identity.  ``S`` may be a GeneratorSet or an array of ordinals;
    it defaults to the table's own generators."""
    if S is None:
        if not T.is_symmetric():
            raise DomainError("generating set is not symmetric")
        return int(T.word_length.max())
    if isinstance(S, GeneratorSet):
        ords = T.index_of(np.array([np.asarray(a, dtype=object) for a in S.matrices]))
    else:
        ords = np.asarray(S, dtype=np.int64)
    if not set(T.inverse[ords].tolist()) <= set(ords.tolist()):
        raise DomainError("generating set is not symmetric")
    dist = bfs_distances(T, ords)
    if np.any(dist < 0):
        raise DomainError("S does not generate the table")
    return int(dist.max())


def cheeger_bounds(lam2: float) -> tuple[float, float]:
    if abs(lam2) > 1 + 1e-12:
        raise DomainError(f"|lambda2| = {abs(lam2)} exceeds 1")
    gap = max(0.0, 1.0 - lam2)
    return gap / 2, math.sqrt(2 * gap)


def edge_expansion_exhaustive(T: GroupTable, mu: SparseMeasure) -> float:
    """min over 0 < |X| <= n/2 of mu-weighted boundary / |X| (tiny groups only)."""
    n = len(T)
    if n > 24:
        raise CapExceededError("exhaustive expansion is limited to order 24", n)
    perms = left_actions(T, mu.ordinals())
    w = np.array([float(x) for x in mu.weights()])
    best = math.inf
    chunk = 1 << 14
    bits_idx = np.arange(n)
    for start in range(1, 1 << n, chunk):
        masks = np.arange(start, min(1 << n, start + chunk), dtype=np.int64)
        member = (masks[:, None] >> bits_idx) & 1
        size = member.sum(axis=1)
        ok = size <= n // 2
        if not ok.any():
            continue
        member = member[ok].astype(bool)
        size = size[ok]
        boundary = np.zeros(len(member))
        for perm, wt in zip(perms, w):
            moved = np.zeros_like(member)
            moved[:, perm] = member
            boundary += wt * (moved & ~member).sum(axis=1)
        best = min(best, float((boundary / size).min()))
    return best


@dataclass
class SpectralReport:
    q: int
    order: int
    lambda2: float
    opnorm0: float
    gap: float
    diameter: int
    method: str
    residual: float
    cheeger: tuple
    seed: int
    components: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cheeger"] = list(self.cheeger)
        return {k: d[k] for k in REPORT_FIELDS}


def spectral_report(T: GroupTable, mu: SparseMeasure, tol=DEFAULT_TOL, method="auto", seed=DEFAULT_SEED) -> SpectralReport:
    res = lambda2(T, mu, tol=tol, method=method, seed=seed)
    lam = min(1.0, max(-1.0, res.lambda2))
    return SpectralReport(
        q=T.modulus,
        order=len(T),
        lambda2=res.lambda2,
        opnorm0=res.opnorm0,
        gap=1 - res.lambda2,
        diameter=int(T.word_length.max()),
        method=res.method,
        residual=res.residual,
        cheeger=cheeger_bounds(lam),
        seed=seed,
        components=res.components,
    )


def uniform_on_generators(T: GroupTable) -> SparseMeasure:
    return SparseMeasure.on_generators(T)


def uniform_on_group(T: GroupTable) -> SparseMeasure:
    return SparseMeasure.uniform(np.arange(len(T)))


@dataclass
class FamilyScan:
    reports: list
    failures: dict = field(default_factory=dict)
    C_hat: float = math.nan
    max_residual: float = math.nan
    ratio_band: tuple = (math.nan, math.nan)
    min_gap: float = math.nan


def fit_diameter_law(pairs):
    """Least squares of diameter against log q through the origin."""
    pts = [(math.log(q), d) for q, d in pairs if q > 1]
    if not pts:
        return math.nan, math.nan, (math.nan, math.nan)
    sxx = sum(x * x for x, _ in pts)
    c = sum(x * d for x, d in pts) / sxx
    resid = max(abs(d - c * x) for x, d in pts)
    ratios = [d / x for x, d in pts]
    return c, resid, (min(ratios), max(ratios))


def family_scan(S: GeneratorSet, q_list, measure=uniform_on_generators, tol=DEFAULT_TOL, method="auto", seed=DEFAULT_SEED, cap=DEFAULT_CAP, strict=False) -> FamilyScan:
    """Spectral reports over ``q_list``; per-q errors are recorded in
    ``failures`` unless ``strict``, which re-raises them."""
    scan = FamilyScan([])
    for q in q_list:
        try:
            T = enumerate_group(S, q, cap)
            scan.reports.append(spectral_report(T, measure(T), tol=tol, method=method, seed=seed))
        except ExpanderLabError as exc:
            if strict:
                raise
            log.warning("q=%s failed: %s", q, exc)
            scan.failures[q] = f"{type(exc).__name__}: {exc}"
    if scan.reports:
        scan.C_hat, scan.max_residual, scan.ratio_band = fit_diameter_law([(r.q, r.diameter) for r in scan.reports])
        scan.min_gap = min(r.gap for r in scan.reports)
    return scan


def reports_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2)


def reports_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for r in reports:
        d = r.to_dict()
        w.writerow([_fmt(d[k]) if k != "cheeger" else ";".join(_fmt(x) for x in d[k]) for k in REPORT_FIELDS])
    return buf.getvalue()


def _fmt(x):
    return f"{x:.17g}" if isinstance(x, float) else str(x)
