"""Run configuration: a line-oriented ``key = value`` format with sections.

Example::

    [map]
    kind = matrix            # matrix | cp | relu
    [regularizer]
    kind = norm_product      # norm_product | power_sum | conic_norm_product
    norms = l2 l2
    cones = none none        # none | nonneg | support:N | eq:FILE | ineq:FILE
    lambda = 1.5
    [loss]
    kind = squared           # squared | logistic
    data = Y.txt
    q = absent               # absent | l1 W | squared_l2 W
    [solver]
    r_init = 2
    seed = 0
    out = out

Relative paths resolve against the config file's directory.  Every
referenced file is loaded and every shape is checked before a Problem is
built, and all errors carry ``file:line`` anchors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .descent import DescentConfig
from .io import FormatError, read_tensor
from .maps import CPOuterProduct, MatrixProduct, ReLUNetwork
from .meta import MetaConfig
from .problem import LogisticLoss, Problem, QTerm, SquaredLoss
from .regularizers import (ConicNormProduct, ElementalPair, LinearEquality, LinearInequality,
                           NonNegOrthant, NormProduct, PowerSum, SupportBound, validate_pair)

SCHEMA = {
    "map": {"kind", "data", "hidden", "d_out"},
    "regularizer": {"kind", "norms", "cones", "lambda", "power"},
    "loss": {"kind", "data", "q"},
    "solver": {"r_init", "max_iters", "tol", "cert_tol", "max_outer", "seed", "out",
               "polar_restarts", "polar_iters", "null_tol", "path_tol", "escape_eps"},
}
REQUIRED = {("map", "kind"), ("regularizer", "kind"), ("regularizer", "lambda"),
            ("loss", "kind"), ("loss", "data")}


class ConfigError(ValueError):
    pass


@dataclass
class Entry:
    value: str
    line: int


@dataclass
class RunConfig:
    path: Path
    sections: dict
    problem: Problem
    meta: MetaConfig
    out: Path
    seed: int
    data: dict = field(default_factory=dict)

    def at(self, section, key) -> str:
        e = self.sections.get(section, {}).get(key)
        return f"{self.path}:{e.line}" if e else str(self.path)


def parse_sections(text: str, source: str = "<config>") -> dict:
    sections: dict[str, dict[str, Entry]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{source}:{lineno}: malformed section header {raw.strip()!r}")
            current = line[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigError(f"{source}:{lineno}: unknown section [{current}]")
            if current in sections:
                raise ConfigError(f"{source}:{lineno}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if current is None:
            raise ConfigError(f"{source}:{lineno}: key outside of any section")
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA[current]:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r} in [{current}]")
        if key in sections[current]:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"{source}:{lineno}: empty value for {key!r}")
        sections[current][key] = Entry(value, lineno)
    for sec, key in sorted(REQUIRED):
        if key not in sections.get(sec, {}):
            raise ConfigError(f"{source}: missing required key {key!r} in [{sec}]")
    return sections


class _Reader:
    def __init__(self, sections, source, base):
        self.s, self.source, self.base = sections, source, base

    def err(self, sec, key, msg):
        e = self.s.get(sec, {}).get(key)
        where = f"{self.source}:{e.line}" if e else self.source
        return ConfigError(f"{where}: {msg}")

    def get(self, sec, key, default=None):
        e = self.s.get(sec, {}).get(key)
        return default if e is None else e.value

    def num(self, sec, key, default, typ=float):
        v = self.get(sec, key)
        if v is None:
            return default
        try:
            return typ(v)
        except ValueError:
            raise self.err(sec, key, f"{key} must be {typ.__name__}, got {v!r}") from None

    def file(self, sec, key, value=None):
        value = value if value is not None else self.get(sec, key)
        p = Path(value)
        p = p if p.is_absolute() else self.base / p
        if not p.exists():
            raise self.err(sec, key, f"file not found: {p}")
        try:
            return read_tensor(p)
        except FormatError as e:
            raise self.err(sec, key, str(e)) from None


def _make_cone(rd, tok, K_idx):
    if tok == "none":
        return None
    if tok == "nonneg":
        return NonNegOrthant()
    kind, _, arg = tok.partition(":")
    if kind == "support":
        try:
            return SupportBound(int(arg))
        except ValueError:
            raise rd.err("regularizer", "cones", f"bad support bound {tok!r}") from None
    if kind in ("eq", "ineq") and arg:
        A = rd.file("regularizer", "cones", arg)
        if A.ndim != 2:
            raise rd.err("regularizer", "cones", f"cone matrix for factor {K_idx + 1} must be 2-D")
        return LinearEquality(A) if kind == "eq" else LinearInequality(A)
    raise rd.err("regularizer", "cones", f"unknown cone {tok!r}")


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse, load data files and validate; raise ConfigError on any problem."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    sections = parse_sections(path.read_text(), str(path))
    rd = _Reader(sections, str(path), path.parent)
    overrides = overrides or {}

    # data first, so missing files fail before anything else is built
    Y = rd.file("loss", "data")
    data = {"Y": Y}
    mkind = rd.get("map", "kind")
    if mkind == "matrix":
        if Y.ndim != 2:
            raise rd.err("loss", "data", f"matrix map needs 2-D data, got shape {Y.shape}")
        mp = MatrixProduct(*Y.shape)
    elif mkind == "cp":
        if Y.ndim < 2:
            raise rd.err("loss", "data", f"cp map needs data of order >= 2, got shape {Y.shape}")
        mp = CPOuterProduct(Y.shape)
    elif mkind == "relu":
        if rd.get("map", "data") is None:
            raise rd.err("map", "kind", "relu map needs 'data' (the input matrix V)")
        V = rd.file("map", "data")
        data["V"] = V
        if V.ndim != 2:
            raise rd.err("map", "data", f"V must be 2-D, got shape {V.shape}")
        try:
            hidden = tuple(int(t) for t in rd.get("map", "hidden", "1").split())
        except ValueError:
            raise rd.err("map", "hidden", "hidden widths must be integers") from None
        d_out = rd.num("map", "d_out", 1, int)
        if Y.shape != (V.shape[0], d_out):
            raise rd.err("loss", "data", f"data shape {Y.shape} does not match "
                                         f"(rows of V, d_out) = {(V.shape[0], d_out)}")
        mp = ReLUNetwork(V, d_out, hidden)
    else:
        raise rd.err("map", "kind", f"unknown map kind {mkind!r}")

    norms = rd.get("regularizer", "norms", " ".join(["l2"] * mp.K)).split()
    if len(norms) != mp.K:
        raise rd.err("regularizer", "norms", f"need {mp.K} norms (one per factor), got {len(norms)}")
    for n in norms:
        if n not in ("l1", "l2", "linf", "none"):
            raise rd.err("regularizer", "norms", f"unknown norm {n!r}")
    cone_toks = rd.get("regularizer", "cones", " ".join(["none"] * mp.K)).split()
    if len(cone_toks) != mp.K:
        raise rd.err("regularizer", "cones", f"need {mp.K} cones, got {len(cone_toks)}")
    cones = [_make_cone(rd, t, k) for k, t in enumerate(cone_toks)]
    for k, (c, s) in enumerate(zip(cones, mp.input_shapes)):
        A = getattr(c, "A", None)
        if A is not None and A.shape[1] != int(np.prod(s)):
            raise rd.err("regularizer", "cones",
                         f"cone matrix for factor {k + 1} has {A.shape[1]} columns, "
                         f"factor slices have {s}")
    rkind = rd.get("regularizer", "kind")
    try:
        if rkind == "norm_product":
            reg = NormProduct(norms, cones)
        elif rkind == "conic_norm_product":
            reg = ConicNormProduct(norms, cones)
        elif rkind == "power_sum":
            reg = PowerSum(norms, rd.num("regularizer", "power", None), cones)
        else:
            raise rd.err("regularizer", "kind", f"unknown regularizer kind {rkind!r}")
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise rd.err("regularizer", "kind", str(e)) from None
    lam = rd.num("regularizer", "lambda", None)
    if not lam > 0:
        raise rd.err("regularizer", "lambda", f"lambda must be positive, got {lam}")

    pair = ElementalPair(mp, reg)
    report = validate_pair(pair)
    if not report.valid:
        raise rd.err("regularizer", "kind", report.message)

    lkind = rd.get("loss", "kind")
    try:
        if lkind == "squared":
            loss = SquaredLoss(Y)
        elif lkind == "logistic":
            loss = LogisticLoss(Y)
        else:
            raise rd.err("loss", "kind", f"unknown loss kind {lkind!r}")
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise rd.err("loss", "data", str(e)) from None
    qtok = rd.get("loss", "q", "absent").split()
    try:
        h = QTerm() if qtok == ["absent"] else QTerm(qtok[0], float(qtok[1]))
        if len(qtok) > 2 or (qtok[0] != "absent" and len(qtok) != 2):
            raise ValueError("expected 'absent', 'l1 W' or 'squared_l2 W'")
    except (ValueError, IndexError) as e:
        raise rd.err("loss", "q", f"bad q term: {e}") from None

    seed = overrides.get("seed")
    seed = rd.num("solver", "seed", 0, int) if seed is None else int(seed)
    r_init = rd.num("solver", "r_init", 1, int)
    if r_init < 1:
        raise rd.err("solver", "r_init", "r_init must be >= 1")
    tol = overrides.get("tol")
    tol = rd.num("solver", "tol", 1e-8) if tol is None else float(tol)
    try:
        dcfg = DescentConfig(max_iters=rd.num("solver", "max_iters", 20000, int),
                             stationarity_tol=tol, seed=seed)
    except ValueError as e:
        raise rd.err("solver", "max_iters", str(e)) from None
    meta = MetaConfig(
        max_outer=rd.num("solver", "max_outer", 50, int),
        cert_tol=rd.num("solver", "cert_tol", 1e-6),
        null_tol=rd.num("solver", "null_tol", 1e-10),
        path_tol=rd.num("solver", "path_tol", 1e-8),
        escape_eps=rd.num("solver", "escape_eps", 1e-3),
        polar_restarts=rd.num("solver", "polar_restarts", 20, int),
        polar_iters=rd.num("solver", "polar_iters", 500, int),
        seed=seed, descent=dcfg,
    )
    if meta.max_outer < 1 or meta.polar_restarts < 1 or meta.polar_iters < 1:
        raise rd.err("solver", "max_outer", "iteration caps must be positive")
    out = overrides.get("out")
    out = Path(out) if out is not None else path.parent / rd.get("solver", "out", "out")
    prob = Problem(pair, loss, lam, h, r_init)
    return RunConfig(path, sections, prob, meta, out, seed, data)
