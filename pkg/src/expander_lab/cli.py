"""``expander-lab`` command line: reproducible experiment reports.

Settings come from an INI file (section ``[experiment]``, optionally refined
by a section named after the command), then ``--set KEY=VALUE`` pairs, then
the dedicated flags; later sources win.  Every report embeds the config hash,
the seed, the package version and an experiment tag, and floats are written
with 17 significant digits so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import re
import sys
import zlib
from fractions import Fraction
from pathlib import Path

import numpy as np
from sympy import primerange

from . import __version__
from .errors import ConfigError, ExpanderLabError, InvariantViolation
from .fourier import decay_profile, push_linear
from .grpenum import enumerate_group, is_prime, load_generators, standard_sl2
from .modq import factorize, gcd_shift, vp_mat
from .padic import property_sweep
from .qr import qr_report
from .spectral import family_scan, fit_diameter_law
from .walk import (
    SparseMeasure,
    almost_diophantine,
    flattening_curve,
    load_measure,
    uniform_word_measure,
    word_matrix,
    word_measure_on_table,
)

DEFAULTS = {
    "generators": "",
    "q": "5,7,11,13",
    "measure": "uniform-on-S",
    "seed": "20240101",
    "max_order": "4000000",
    "max_states": "67108864",
    "node_cap": "2000000",
    "tol": "1e-10",
    "method": "auto",
    "n": "10",
    "tau": "",
    "v": "1,0",
    "primes": "2,3,5,7,11",
    "m_max": "10",
    "dims": "2,3",
    "samples": "1000",
    "g": "",
    "delta": "1/2",
    "C": "1",
    "format": "json",
    "out": "",
}

TAGS = {
    "gap": "expander-family-gap",
    "diameter": "diameter-log-law",
    "flatten": "l2-flattening",
    "dioph": "almost-diophantine",
    "fourier": "torus-fourier-decay",
    "exp": "padic-exp-log",
    "qr": "quasirandom-degree-bound",
    "profile": "valuation-profile",
}

WINDOW_NOTE = "gap bounded away from zero on the tested window only"


# ---------------------------------------------------------------------------
# configuration


def parse_q_list(text: str) -> list[int]:
    """Comma list of integers, ranges ``a-b`` and prime ranges ``primes:a-b``."""
    out = []
    for tok in str(text).replace(" ", "").split(","):
        if not tok:
            continue
        try:
            if tok.startswith("primes:"):
                a, b = tok[len("primes:"):].split("-")
                out.extend(int(p) for p in primerange(int(a), int(b) + 1))
            elif "-" in tok[1:]:
                a, b = tok.split("-")
                out.extend(range(int(a), int(b) + 1))
            else:
                out.append(int(tok))
        except ValueError as exc:
            raise ConfigError(f"bad q token {tok!r}") from exc
    if not out or any(q < 1 for q in out):
        raise ConfigError(f"q list {text!r} must be nonempty and positive")
    return out


def _int_list(text, key):
    try:
        return [int(t) for t in str(text).replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a comma list of integers") from exc


def parse_matrix(text: str) -> np.ndarray:
    """``"a b; c d"`` -> integer matrix."""
    try:
        rows = [[int(x) for x in r.replace(",", " ").split()] for r in text.split(";") if r.strip()]
        a = np.array(rows, dtype=object)
    except ValueError as exc:
        raise ConfigError(f"bad matrix {text!r}") from exc
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError(f"matrix {text!r} is not square")
    return a


class Config(dict):
    """Resolved settings as strings, with typed accessors."""

    def int(self, key):
        try:
            return int(self[key])
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {self[key]!r}") from exc

    def positive(self, key):
        v = self.int(key)
        if v <= 0:
            raise ConfigError(f"{key} must be positive")
        return v

    def float(self, key):
        try:
            return float(Fraction(self[key]))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"{key}: expected a number, got {self[key]!r}") from exc

    def fraction(self, key):
        try:
            return Fraction(self[key])
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"{key}: expected a rational, got {self[key]!r}") from exc

    def digest(self) -> str:
        body = json.dumps({k: v for k, v in sorted(self.items()) if k != "out"}, sort_keys=True)
        return hashlib.sha256(body.encode()).hexdigest()[:16]


def load_config(command: str, path=None, overrides=None) -> Config:
    cfg = Config(DEFAULTS)
    if path:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for section in ("experiment", command):
            if parser.has_section(section):
                cfg.update(parser.items(section))
    cfg.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("max_order", "max_states", "node_cap", "m_max", "samples"):
        cfg.positive(key)
    cfg.int("seed")
    if cfg["format"] not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    return cfg


def command_seed(seed: int, command: str) -> np.random.SeedSequence:
    """One seed stream, separated per command by a fixed tag."""
    return np.random.SeedSequence([seed, zlib.crc32(command.encode())])


def _generators(cfg):
    return load_generators(cfg["generators"]) if cfg["generators"] else standard_sl2()


def _measure(cfg, S, T):
    if cfg["measure"] == "uniform-on-S":
        return SparseMeasure.on_generators(T)
    return word_measure_on_table(load_measure(cfg["measure"]), S, T)


def _atoms(cfg, S):
    if cfg["measure"] == "uniform-on-S":
        return uniform_word_measure(S)
    return load_measure(cfg["measure"])


# ---------------------------------------------------------------------------
# commands: each returns (rows, summary)


def cmd_gap(cfg):
    S = _generators(cfg)
    seed = int(command_seed(cfg.int("seed"), "gap").generate_state(1)[0])
    scan = family_scan(
        S, parse_q_list(cfg["q"]), lambda T: _measure(cfg, S, T),
        tol=cfg.float("tol"), method=cfg["method"], seed=seed, cap=cfg.int("max_order"), strict=True,
    )
    rows = [r.to_dict() for r in scan.reports]
    for r in scan.reports:
        if r.components == 1 and r.order > 1 and not r.gap > 0:
            raise InvariantViolation(f"connected quotient q={r.q} has no spectral gap")
    summary = {"min_gap": scan.min_gap, "note": WINDOW_NOTE}
    return rows, summary


def cmd_diameter(cfg):
    S = _generators(cfg)
    rows = []
    for q in parse_q_list(cfg["q"]):
        T = enumerate_group(S, q, cfg.int("max_order"))
        diam = int(T.word_length.max())
        rows.append({"q": q, "order": len(T), "diameter": diam, "ratio": diam / math.log(q) if q > 1 else math.nan})
    c_hat, resid, band = fit_diameter_law([(r["q"], r["diameter"]) for r in rows])
    return rows, {"C_hat": c_hat, "max_residual": resid, "ratio_min": band[0], "ratio_max": band[1]}


def cmd_flatten(cfg):
    S = _generators(cfg)
    tau = cfg.float("tau") if cfg["tau"] else None
    n_max = max(_int_list(cfg["n"], "n"))
    rows, summary = [], {}
    for q in parse_q_list(cfg["q"]):
        T = enumerate_group(S, q, cfg.int("max_order"))
        mu = _measure(cfg, S, T)
        curve = flattening_curve(mu, T, q, n_max, tau)
        if mu.is_symmetric(T) and curve.exact and not curve.monotone:
            raise InvariantViolation(f"flatness increased under doubling at q={q}")
        rows += [{"q": q, "n": n, "flatness": f, "ratio": r} for n, f, r in curve.rows]
        summary[str(q)] = {"monotone": curve.monotone, "crossing": curve.crossing, "exact": curve.exact}
    return rows, summary


def cmd_dioph(cfg):
    S = _generators(cfg)
    atoms = _atoms(cfg, S)
    rows = []
    for q in parse_q_list(cfg["q"]):
        for n in _int_list(cfg["n"], "n"):
            res = almost_diophantine(atoms, S, q, n, cfg.int("node_cap"), group_cap=cfg.int("max_order"))
            if res.exact_support is False:
                raise InvariantViolation(f"a short word lies in the congruence kernel at q={q}")
            rows.append({
                "q": q, "n": n, "mass": float(res.mass), "mass_exact": str(res.mass),
                "m": res.m, "M": res.norm_bound, "radius": res.radius,
                "exact_support": res.exact_support, "partial": res.partial,
            })
    return rows, {}


def cmd_fourier(cfg):
    S = _generators(cfg)
    atoms = [(float(w), word_matrix(S, word)) for w, word in _atoms(cfg, S)]
    v = _int_list(cfg["v"], "v")
    v = (v + [0] * S.d)[: S.d]
    rows, summary = [], {}
    for q in parse_q_list(cfg["q"]):
        for n in _int_list(cfg["n"], "n"):
            prof = decay_profile(push_linear(atoms, v, q, n, cfg.int("max_states")))
            rows += [{"q": q, "n": n, "s": s, "max_abs_coeff": c, "tau_hat": prof.tau_hat} for s, c in prof.rows]
            summary[f"{q}/{n}"] = prof.tau_hat
    return rows, {"tau_hat": summary}


def cmd_exp(cfg):
    ss = command_seed(cfg.int("seed"), "exp")
    rows = []
    total = 0
    for p in _int_list(cfg["primes"], "primes"):
        if not is_prime(p):
            raise ConfigError(f"{p} is not prime")
        for d in _int_list(cfg["dims"], "dims"):
            for m in range(1, cfg.int("m_max") + 1):
                rng = np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=(p, d, m)))
                res = property_sweep(p, m, d, cfg.int("samples"), rng)
                rows.append({"p": p, "d": d, "m": m} | res)
                total += res["roundtrip_failures"] + res["isometry_failures"] + res["bch_failures"]
    if total:
        raise InvariantViolation(f"{total} exp/log property failures")
    return rows, {"cases": len(rows), "failures": total}


def cmd_qr(cfg):
    S = _generators(cfg)
    rows = []
    for q in parse_q_list(cfg["q"]):
        rep = qr_report(enumerate_group(S, q, cfg.int("max_order")))
        if rep["bound_ok"] is False:
            raise InvariantViolation(f"minimal degree {rep['min_degree']} below (q-1)/2 at q={q}")
        rows.append(rep)
    return rows, {}


def valuation_profile(q: int, g, tau, delta, C) -> tuple[list, dict]:
    """Per-prime (m_p, v_p(g - 1)) and the two congruence conditions on g.

    The set I collects primes with v_p(g - 1) >= max(1, floor(delta m_p));
    the conditions read gcd(q, g - 1) <= q^(C tau) r and q_I >= q^(1 - C tau).
    """
    fm = factorize(q)
    g = np.asarray(g, dtype=object)
    shifted = (g - np.eye(g.shape[0], dtype=int)) % q
    rows, q_I = [], 1
    for p, m in fm.factors:
        v = vp_mat(shifted, p, m)
        v = m if v == math.inf else int(v)
        in_I = v >= max(1, math.floor(Fraction(delta) * m))
        if in_I:
            q_I *= p**m
        rows.append({"p": p, "m_p": m, "v_p": v, "in_I": in_I})
    gcd = gcd_shift(q, g % q)
    big_bound = q ** (C * tau) * fm.radical
    small_bound = q ** (1 - C * tau)
    summary = {
        "q": q, "r": fm.radical, "gcd": gcd, "gcd_bound": big_bound, "gcd_ok": gcd <= big_bound,
        "q_I": q_I, "q_I_bound": small_bound, "q_I_ok": q_I >= small_bound,
    }
    return rows, summary


def cmd_profile(cfg):
    if not cfg["g"] or not cfg["tau"]:
        raise ConfigError("profile needs g and tau")
    g = parse_matrix(cfg["g"])
    tau, C, delta = cfg.float("tau"), cfg.float("C"), cfg.fraction("delta")
    if not 0 < delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    rows, summaries = [], []
    for q in parse_q_list(cfg["q"]):
        r, s = valuation_profile(q, g, tau, delta, C)
        rows += [{"q": q} | x for x in r]
        summaries.append(s)
    return rows, {"conditions": summaries}


COMMANDS = {
    "gap": cmd_gap,
    "diameter": cmd_diameter,
    "flatten": cmd_flatten,
    "dioph": cmd_dioph,
    "fourier": cmd_fourier,
    "exp": cmd_exp,
    "qr": cmd_qr,
    "profile": cmd_profile,
}


# ---------------------------------------------------------------------------
# serialization


def _scalar(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            return f"{x:.17g}"
        return json.dumps(str(x))
    return json.dumps(str(x))


def dumps(obj, indent=0) -> str:
    """JSON with floats at 17 significant digits; inf and nan become strings."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        body = ",\n".join(f"{inner}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items())
        return "{\n" + body + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(x, (dict, list, tuple)) for x in obj):
            return "[" + ", ".join(_scalar(x) for x in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps(x, indent + 1) for x in obj) + "\n" + pad + "]"
    return _scalar(obj)


def _csv_cell(x) -> str:
    if isinstance(x, (list, tuple)):
        return ";".join(_csv_cell(v) for v in x)
    s = _scalar(x)
    return s[1:-1] if s.startswith('"') else s


def render(meta: dict, rows: list, summary: dict, fmt: str) -> str:
    if fmt == "json":
        return dumps({"meta": meta, "summary": summary, "rows": rows}) + "\n"
    lines = [f"# {k}: {_csv_cell(v)}" for k, v in meta.items()]
    lines.append("# summary: " + re.sub(r"\n\s*", " ", dumps(summary)))
    if rows:
        cols = list(rows[0])
        for r in rows[1:]:
            cols += [c for c in r if c not in cols]
        lines.append(",".join(cols))
        lines += [",".join(_csv_cell(r.get(c, "")) for c in cols) for r in rows]
    return "\n".join(lines) + "\n"


def run(command: str, cfg: Config) -> str:
    rows, summary = COMMANDS[command](cfg)
    meta = {
        "command": command,
        "experiment": TAGS[command],
        "version": __version__,
        "seed": cfg.int("seed"),
        "config_hash": cfg.digest(),
    }
    return render(meta, rows, summary, cfg["format"])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="expander-lab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="INI file with an [experiment] section")
    ap.add_argument("--q", help="moduli, e.g. 5,7 or 2-10 or primes:5-61")
    ap.add_argument("--seed")
    ap.add_argument("--out", help="output directory (default: stdout)")
    ap.add_argument("--format", choices=("csv", "json"))
    ap.add_argument("--generators", help="generator file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v.strip()
        overrides.update({"q": args.q, "seed": args.seed, "out": args.out, "format": args.format, "generators": args.generators})
        cfg = load_config(args.command, args.config, overrides)
        text = run(args.command, cfg)
        if cfg["out"]:
            out = Path(cfg["out"])
            out.mkdir(parents=True, exist_ok=True)
            (out / f"{args.command}.{cfg['format']}").write_text(text)
        else:
            sys.stdout.write(text)
        return 0
    except ExpanderLabError as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code, "command": args.command}
        sys.stderr.write(json.dumps(record) + "\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
