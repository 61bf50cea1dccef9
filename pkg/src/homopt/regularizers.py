"""Elemental regularization functions, conic constraints and pair validation.

Regularizers act column-wise: every factor is viewed as a
``(card(D^k), r)`` matrix and ``g`` is evaluated for all ``r`` slices at
once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .tensor import ShapeError


def _cols(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(-1, x.shape[-1])


def _proj_l1_ball(X, rad):
    """Project each column of ``X`` onto the l1 ball of radius ``rad[j]``."""
    A = np.abs(X)
    n, r = X.shape
    rad = np.broadcast_to(np.asarray(rad, dtype=np.float64), (r,))
    out = np.array(X)
    inside = A.sum(axis=0) <= rad
    todo = ~inside & (rad > 0)
    out[:, ~inside & (rad <= 0)] = 0.0
    if np.any(todo):
        S = -np.sort(-A[:, todo], axis=0)
        cs = np.cumsum(S, axis=0)
        j = np.arange(1, n + 1)[:, None]
        cond = S - (cs - rad[todo]) / j > 0
        rho = n - 1 - np.argmax(cond[::-1], axis=0)
        cols = np.arange(S.shape[1])
        tau = np.maximum((cs[rho, cols] - rad[todo]) / (rho + 1), 0.0)
        out[:, todo] = np.sign(X[:, todo]) * np.maximum(A[:, todo] - tau, 0.0)
    return out


class Norm:
    """One of the built-in norms ``l1``, ``l2``, ``linf`` on flattened slices."""

    names = ("l1", "l2", "linf")

    def __init__(self, name: str):
        name = {"inf": "linf", "l_inf": "linf", "max": "linf"}.get(name, name)
        if name not in self.names:
            raise ValueError(f"unknown norm {name!r}; choose from {self.names}")
        self.name = name

    def __repr__(self):
        return f"Norm({self.name!r})"

    def __eq__(self, other):
        return isinstance(other, Norm) and other.name == self.name

    def __hash__(self):
        return hash(self.name)

    def value(self, X) -> np.ndarray:
        X = _cols(X)
        if self.name == "l1":
            return np.abs(X).sum(axis=0)
        if self.name == "l2":
            return np.sqrt(np.einsum("ij,ij->j", X, X))
        return np.abs(X).max(axis=0) if X.shape[0] else np.zeros(X.shape[1])

    def prox(self, X, w) -> np.ndarray:
        """Column-wise prox of ``w[j] * ||.||`` (``w`` broadcast to r)."""
        X = _cols(X)
        w = np.broadcast_to(np.asarray(w, dtype=np.float64), (X.shape[1],))
        if self.name == "l2":
            nrm = self.value(X)
            with np.errstate(divide="ignore", invalid="ignore"):
                s = np.where(nrm > w, 1.0 - w / np.where(nrm > 0, nrm, 1.0), 0.0)
            return X * s
        if self.name == "l1":
            return np.sign(X) * np.maximum(np.abs(X) - w, 0.0)
        # Moreau: prox of w*linf is the residual of projecting onto the l1 ball
        return X - _proj_l1_ball(X, w)

    def prox_power(self, X, w, a: float) -> np.ndarray:
        """Column-wise prox of ``w[j] * ||.||**a`` for ``a >= 1``."""
        X = _cols(X)
        w = np.broadcast_to(np.asarray(w, dtype=np.float64), (X.shape[1],))
        if a == 1:
            return self.prox(X, w)
        if a == 2 and self.name == "l2":
            return X / (1.0 + 2.0 * w)
        # y = prox_{mu ||.||}(x) with mu = w a ||y||^(a-1); bisection on mu
        lo = np.zeros_like(w)
        hi = w * a * self.value(X) ** (a - 1)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            y = self.prox(X, mid)
            up = mid - w * a * self.value(y) ** (a - 1) > 0
            hi = np.where(up, mid, hi)
            lo = np.where(up, lo, mid)
        return self.prox(X, 0.5 * (lo + hi))

    def lmo(self, C) -> np.ndarray:
        """Column-wise maximizer of ``<c, z>`` over the unit ball."""
        C = _cols(C)
        if self.name == "l2":
            nrm = self.value(C)
            return C / np.where(nrm > 0, nrm, 1.0)
        if self.name == "linf":
            return np.sign(C)
        Z = np.zeros_like(C)
        idx = np.argmax(np.abs(C), axis=0)
        cols = np.arange(C.shape[1])
        Z[idx, cols] = np.sign(C[idx, cols])
        return Z


class Cone:
    """A closed cone; membership is invariant to nonnegative scaling."""

    kind = "cone"

    def contains(self, X) -> np.ndarray:
        raise NotImplementedError

    def project(self, X) -> np.ndarray:
        raise NotImplementedError

    def lmo(self, C, norm: Norm) -> np.ndarray:
        # exact for l2 on closed convex cones (Moreau decomposition), a
        # feasible heuristic otherwise
        C = _cols(C)
        if norm.name == "l2":
            Z = self.project(C)
        else:
            Z = self.project(norm.lmo(self.project(C)))
        nrm = norm.value(Z)
        return Z / np.where(nrm > 0, nrm, 1.0)


class NonNegOrthant(Cone):
    kind = "nonneg"

    def contains(self, X):
        return np.all(_cols(X) >= 0, axis=0)

    def project(self, X):
        return np.maximum(_cols(X), 0.0)

    def lmo(self, C, norm):
        return norm.lmo(np.maximum(_cols(C), 0.0))

    def __repr__(self):
        return "NonNegOrthant()"


class LinearEquality(Cone):
    """The kernel ``{x : A x = 0}``."""

    kind = "eq"

    def __init__(self, A, tol: float = 1e-9):
        self.A = np.atleast_2d(np.array(A, dtype=np.float64))
        self._pinv = np.linalg.pinv(self.A)
        self._scale = np.linalg.norm(self.A, 2)
        self.tol = tol

    def contains(self, X):
        X = _cols(X)
        res = np.linalg.norm(self.A @ X, axis=0)
        return res <= self.tol * self._scale * (1.0 + np.linalg.norm(X, axis=0))

    def project(self, X):
        X = _cols(X)
        return X - self._pinv @ (self.A @ X)

    def __repr__(self):
        return f"LinearEquality(A{self.A.shape})"


class LinearInequality(Cone):
    """The polyhedral cone ``{x : A x >= 0}``."""

    kind = "ineq"

    def __init__(self, A, tol: float = 1e-9):
        self.A = np.atleast_2d(np.array(A, dtype=np.float64))
        self._scale = np.linalg.norm(self.A, 2)
        self.tol = tol

    def contains(self, X):
        X = _cols(X)
        if X.shape[1] == 0:
            return np.ones(0, dtype=bool)
        worst = (self.A @ X).min(axis=0)
        return worst >= -self.tol * self._scale * (1.0 + np.linalg.norm(X, axis=0))

    def project(self, X):
        # y = x + A^T mu with mu >= 0 minimizing ||x + A^T mu||: an NNLS problem
        X = _cols(X)
        out = np.array(X)
        inside = self.contains(X)
        for j in np.flatnonzero(~inside):
            mu, _ = nnls(self.A.T, -X[:, j])
            out[:, j] = X[:, j] + self.A.T @ mu
        return out

    def __repr__(self):
        return f"LinearInequality(A{self.A.shape})"


class SupportBound(Cone):
    """``{x : ||x||_0 <= n}``; projection keeps the n largest magnitudes."""

    kind = "support"

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("support bound must be a positive integer")
        self.n = int(n)

    def contains(self, X):
        return np.count_nonzero(_cols(X), axis=0) <= self.n

    def project(self, X):
        X = _cols(X)
        if X.shape[0] <= self.n:
            return np.array(X)
        # stable sort: ties go to the lowest index
        order = np.argsort(-np.abs(X), axis=0, kind="stable")
        keep = np.zeros(X.shape, dtype=bool)
        np.put_along_axis(keep, order[: self.n], True, axis=0)
        return np.where(keep, X, 0.0)

    def lmo(self, C, norm):
        return norm.lmo(self.project(C))

    def __repr__(self):
        return f"SupportBound({self.n})"


def make_norm(name):
    if name is None or isinstance(name, Norm):
        return name
    if name in ("none", "None", ""):
        return None
    return Norm(name)


class Regularizer:
    """Base class; subclasses define per-slice values and block proxes."""

    kind = "abstract"
    norms: tuple
    cones: tuple
    degree: float

    @property
    def K(self) -> int:
        return len(self.norms)

    def _check(self, factors):
        factors = list(factors)
        if len(factors) != self.K:
            raise ShapeError(
                f"{self.kind} regularizer takes {self.K} factors, got {len(factors)}"
            )
        return factors

    def _feasible(self, factors):
        ok = None
        for f, c in zip(factors, self.cones):
            if c is not None:
                m = c.contains(f)
                ok = m if ok is None else ok & m
        return ok

    def _raw(self, factors) -> np.ndarray:
        raise NotImplementedError

    def slice_values(self, factors) -> np.ndarray:
        """g of every slice, +inf where a cone constraint is violated."""
        factors = self._check(factors)
        g = self._raw(factors)
        ok = self._feasible(factors)
        if ok is not None:
            g = np.where(ok, g, np.inf)
        return g

    def total(self, factors) -> float:
        g = self.slice_values(factors)
        return float(g.sum())

    def eval_g(self, slices) -> float:
        slices = [np.asarray(s, dtype=np.float64)[..., None] for s in slices]
        return float(self.slice_values(slices)[0])

    def prox_block(self, factors, k: int, Xk, t: float) -> np.ndarray:
        """Prox of ``t * sum_i g(slice_i)`` in factor ``k`` (others fixed)."""
        raise NotImplementedError

    def _conic(self, k, Xk, prox):
        cone = self.cones[k]
        shape = np.shape(Xk)
        if cone is None:
            return prox(_cols(Xk)).reshape(shape)
        Y = prox(cone.project(_cols(Xk)))
        bad = ~cone.contains(Y)
        if np.any(bad):
            Y[:, bad] = cone.project(Y[:, bad])
        return Y.reshape(shape)

    def prox_or_subgrad(self, slices, stepsize: float):
        """Block prox of ``stepsize * g`` on one slice set, factor by factor."""
        if stepsize <= 0:
            raise ValueError("stepsize must be positive")
        cur = [np.asarray(s, dtype=np.float64)[..., None] for s in self._check(slices)]
        for k in range(self.K):
            cur[k] = self.prox_block(cur, k, cur[k], stepsize)
        return [c[..., 0] for c in cur]

    def project_cones(self, factors):
        out = []
        for f, c in zip(factors, self.cones):
            f = np.asarray(f, dtype=np.float64)
            out.append(f if c is None else c.project(f).reshape(f.shape))
        return out

    def polar_lmo(self, k: int, C) -> np.ndarray:
        """Maximize ``<C_j, z_j>`` for each column over the factor-k unit set."""
        shape = np.shape(C)
        norm, cone = self.norms[k], self.cones[k]
        if norm is None:
            raise ValueError("polar search needs a norm on every factor")
        Z = norm.lmo(C) if cone is None else cone.lmo(C, norm)
        return Z.reshape(shape)

    @property
    def unit_ball_polar(self) -> bool:
        """Whether the polar reduces to maximizing over per-factor unit balls."""
        return False

    def describe(self) -> str:
        norms = ",".join("none" if n is None else n.name for n in self.norms)
        cones = ",".join("none" if c is None else c.kind for c in self.cones)
        return f"{self.kind}(norms={norms}; cones={cones}; degree={self.degree:g})"


class NormProduct(Regularizer):
    """g = prod_k ||x^k||_(k)^a_k, plus cone indicators when cones are given.

    A factor with norm ``None`` contributes no norm term, which lowers the
    degree; exponents ``powers`` default to 1.
    """

    kind = "norm_product"

    def __init__(self, norms, cones=None, powers=None):
        self.norms = tuple(make_norm(n) for n in norms)
        K = len(self.norms)
        self.cones = tuple(cones) if cones is not None else (None,) * K
        self.powers = tuple(float(a) for a in powers) if powers is not None else (1.0,) * K
        if len(self.cones) != K or len(self.powers) != K:
            raise ValueError("norms, cones and powers must have one entry per factor")
        if any(a < 1 for a, n in zip(self.powers, self.norms) if n is not None):
            raise ValueError("norm exponents must be >= 1")
        self.degree = sum(a for a, n in zip(self.powers, self.norms) if n is not None)
        if self.degree == int(self.degree):
            self.degree = int(self.degree)

    def _terms(self, factors):
        r = np.shape(factors[0])[-1]
        out = []
        for f, n, a in zip(factors, self.norms, self.powers):
            out.append(np.ones(r) if n is None else n.value(f) ** a)
        return out

    def _raw(self, factors):
        return np.prod(self._terms(factors), axis=0)

    def prox_block(self, factors, k, Xk, t):
        norm = self.norms[k]
        if norm is None:
            return self._conic(k, Xk, lambda X: np.array(X))
        terms = self._terms(factors)
        w = t * np.prod([terms[j] for j in range(self.K) if j != k], axis=0)
        return self._conic(k, Xk, lambda X: norm.prox_power(X, w, self.powers[k]))

    @property
    def unit_ball_polar(self):
        return all(n is not None for n in self.norms) and all(a == 1 for a in self.powers)


class ConicNormProduct(NormProduct):
    """g = prod_k (||x^k||_(k) + indicator of C_k at x^k)."""

    kind = "conic_norm_product"

    def __init__(self, norms, cones):
        super().__init__(norms, cones=cones)


class PowerSum(Regularizer):
    """g = (1/a) sum_k ||x^k||_(k)^a, with ``a`` defaulting to K."""

    kind = "power_sum"

    def __init__(self, norms, power=None, cones=None):
        self.norms = tuple(make_norm(n) for n in norms)
        if any(n is None for n in self.norms):
            raise ValueError("power_sum needs a norm on every factor")
        K = len(self.norms)
        self.power = float(K if power is None else power)
        if self.power < 1:
            raise ValueError("power must be >= 1")
        self.cones = tuple(cones) if cones is not None else (None,) * K
        self.degree = int(self.power) if self.power == int(self.power) else self.power

    def _raw(self, factors):
        a = self.power
        return sum(n.value(f) ** a for f, n in zip(factors, self.norms)) / a

    def prox_block(self, factors, k, Xk, t):
        a = self.power
        return self._conic(k, Xk, lambda X: self.norms[k].prox_power(X, t / a, a))

    @property
    def unit_ball_polar(self):
        return self.power == self.K


@dataclass
class ElementalPair:
    """A mapping phi together with its regularizer g."""

    map: object
    reg: Regularizer

    def __post_init__(self):
        if self.map.K != self.reg.K:
            raise ShapeError(
                f"map takes {self.map.K} factors but regularizer has {self.reg.K}"
            )


@dataclass
class PairReport:
    valid: bool
    map_degree: float
    reg_degree: float
    message: str
    violation: dict = field(default_factory=dict)

    def __bool__(self):
        return self.valid


def validate_pair(pair: ElementalPair, n_samples: int = 20, seed: int = 0) -> PairReport:
    """Check degree agreement and probe the rescaling degeneracy.

    The probe takes random slices ``z``, rescales two factors by ``c`` and
    ``1/c`` (which leaves phi unchanged for multilinear maps) over
    ``c = 2**-30 .. 2**30`` and rejects the pair when g keeps decreasing
    toward the extreme rescalings, i.e. no minimal-g factorization of
    ``phi(z)`` is attained.  This is a randomized heuristic, not a proof.
    """
    p, q = pair.map.degree, pair.reg.degree
    if p != q:
        return PairReport(False, p, q,
                          f"degree mismatch: map has degree {p}, regularizer has degree {q}")
    if p == 0:
        return PairReport(False, p, q, "degree must be nonzero")
    rng = np.random.default_rng(seed)
    K = pair.map.K
    if K < 2:
        return PairReport(True, p, q, "ok")
    exps = np.arange(-30, 31, dtype=np.float64)
    c = 2.0 ** exps
    interior = np.abs(exps) <= 20
    for _ in range(n_samples):
        z = [rng.standard_normal(s) for s in pair.map.input_shapes]
        z = [f[..., 0] for f in pair.reg.project_cones([s[..., None] for s in z])]
        out = pair.map.eval_elemental(z)
        scale = np.linalg.norm(out)
        if scale == 0:
            continue
        a, b = rng.choice(K, size=2, replace=False)
        batch = [np.repeat(s[..., None], len(c), axis=-1) for s in z]
        batch[a] = batch[a] * c
        batch[b] = batch[b] / c
        same = np.linalg.norm(
            pair.map.vec_phi_matrix(batch) - out.reshape(-1, 1), axis=0
        ) <= 1e-9 * scale
        g = pair.reg.slice_values(batch)
        keep = same & np.isfinite(g)
        if not np.any(keep & interior):
            continue
        m = g[keep & interior].min()
        if m <= 0:
            bad = int(np.flatnonzero(keep & interior & (g <= 0))[0])
            return PairReport(False, p, q,
                              "regularizer vanishes on a nonzero output",
                              {"factor_up": int(a), "factor_down": int(b), "scale": float(c[bad])})
        low = keep & ~interior & (g < m * (1 - 1e-9))
        if np.any(low):
            bad = int(np.flatnonzero(low)[np.argmin(g[low])])
            return PairReport(
                False, p, q,
                f"g decreases without bound under rescaling: factor {a} by "
                f"{c[bad]:.3g}, factor {b} by {1 / c[bad]:.3g} leaves phi fixed "
                f"and gives g = {g[bad] / m:.3g} of the interior minimum",
                {"factor_up": int(a), "factor_down": int(b), "scale": float(c[bad])},
            )
    return PairReport(True, p, q, "ok")
