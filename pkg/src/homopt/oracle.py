"""Independent reference solvers for verification.

* ``solve_convex_nuclear``: proximal gradient with singular value
  thresholding on ``0.5 ||Y - X||^2 + lam ||X||_*``, cross-checked
  against the closed-form thresholding of Y's singular values.
* ``brute_polar``: exhaustive grid search of the polar on tiny instances.
* ``degree_mismatch_probe``: local behaviour at the origin when the
  regularizer's degree is lower than the map's.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .maps import MatrixProduct
from .regularizers import ElementalPair, NormProduct, PowerSum
from .tensor import FactorSet


@dataclass
class OracleResult:
    Xstar: np.ndarray
    objective: float
    iterations: int
    converged: bool
    closed_form_gap: float


def svt(X, tau: float):
    """Singular value soft-thresholding (prox of ``tau * ||.||_*``)."""
    P, s, Rt = np.linalg.svd(X, full_matrices=False)
    return (P * np.maximum(s - tau, 0.0)) @ Rt


def nuclear_objective(Y, lam: float, X) -> float:
    R = np.asarray(Y) - X
    return 0.5 * float(np.vdot(R, R)) + lam * float(np.linalg.svd(X, compute_uv=False).sum())


def solve_convex_nuclear(Y, lam: float, tol: float = 1e-12, step: float = 1.0,
                         max_iter: int = 100000) -> OracleResult:
    """Minimize ``0.5 ||Y - X||_F^2 + lam ||X||_*`` by proximal gradient.

    The loss gradient is 1-Lipschitz so any ``step`` in (0, 1] converges;
    iteration stops once ``||X_next - X|| <= tol * (1 + ||X||)``.  The
    returned ``closed_form_gap`` is the distance to ``svt(Y, lam)``.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ValueError("the nuclear-norm oracle needs a matrix")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not 0 < step <= 1:
        raise ValueError("step must lie in (0, 1]")
    X = np.zeros_like(Y)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Xn = svt(X - step * (X - Y), step * lam)
        delta = np.linalg.norm(Xn - X)
        X = Xn
        if delta <= tol * (1.0 + np.linalg.norm(X)):
            converged = True
            break
    gap = float(np.linalg.norm(X - svt(Y, lam)))
    return OracleResult(X, nuclear_objective(Y, lam, X), it, converged, gap)


def factor_oracle_solution(Xstar, rank_tol: float = 1e-12) -> FactorSet:
    """Balanced SVD factorization ``U = P S^(1/2)``, ``V = R S^(1/2)``."""
    Xstar = np.asarray(Xstar, dtype=np.float64)
    m, n = Xstar.shape
    P, s, Rt = np.linalg.svd(Xstar, full_matrices=False)
    keep = s > rank_tol * max(1.0, s[0] if s.size else 0.0)
    if not np.any(keep):
        return FactorSet.zeros([(m,), (n,)], 1)
    root = np.sqrt(s[keep])
    return FactorSet([P[:, keep] * root, Rt[keep].T * root])


# -- brute-force polar ----------------------------------------------------

def _sphere_grid(d: int, n: int) -> np.ndarray:
    """Unit directions in R^d (as columns) on a grid nested under doubling n."""
    if d == 1:
        pts = np.array([[1.0, -1.0]])
    elif d == 2:
        a = 2 * np.pi * np.arange(n) / n
        pts = np.vstack([np.cos(a), np.sin(a)])
    elif d == 3:
        m = max(n // 2, 1)
        th = np.pi * np.arange(m + 1) / m
        ph = 2 * np.pi * np.arange(n) / n
        T, F = np.meshgrid(th, ph, indexing="ij")
        pts = np.vstack([(np.sin(T) * np.cos(F)).ravel(),
                         (np.sin(T) * np.sin(F)).ravel(),
                         np.cos(T).ravel()])
    else:
        raise ValueError("brute-force grids support factor dimensions up to 3")
    axes = np.hstack([np.eye(d), -np.eye(d)])
    return np.hstack([pts, axes])


def _angles_to_dir(d, ang):
    if d == 1:
        return np.array([1.0])
    if d == 2:
        return np.array([np.cos(ang[0]), np.sin(ang[0])])
    t, f = ang
    return np.array([np.sin(t) * np.cos(f), np.sin(t) * np.sin(f), np.cos(t)])


def _dir_to_angles(d, x):
    if d == 1:
        return []
    if d == 2:
        return [np.arctan2(x[1], x[0])]
    return [np.arccos(np.clip(x[2], -1, 1)), np.arctan2(x[1], x[0])]


def brute_polar(pair: ElementalPair, W, resolution: int = 100, refine: bool = False,
                max_dims: int = 6, chunk: int = 20000) -> float:
    """Grid-search the polar: max of ``<W, phi(z)> / g(z)`` over grid directions.

    Dividing by g is the same as rescaling z so that ``g(z) = 1``.  The
    grid is nested when ``resolution`` doubles, so the value is
    nondecreasing along such refinements.  With ``refine=True`` the best
    grid points are polished by Nelder-Mead over the direction angles.
    The zero point is always feasible, so the result is at least 0.
    """
    m, reg = pair.map, pair.reg
    W = np.asarray(W, dtype=np.float64)
    dims = [int(np.prod(s)) for s in m.input_shapes]
    if sum(dims) > max_dims:
        raise ValueError(f"brute-force polar is limited to {max_dims} total factor dimensions")
    grids = []
    for k, (d, s) in enumerate(zip(dims, m.input_shapes)):
        G = _sphere_grid(d, resolution)
        cone = reg.cones[k]
        if cone is not None:
            G = cone.project(G)
            G = G[:, np.any(G != 0, axis=0)]
        grids.append(G)
    w = W.ravel()

    def score(factors):
        vals = w @ m.vec_phi_matrix(factors)
        g = reg.slice_values(factors)
        ok = np.isfinite(g) & (g > 0)
        return np.where(ok, vals / np.where(ok, g, 1.0), -np.inf)

    counts = [G.shape[1] for G in grids]
    total = int(np.prod(counts))
    best = 0.0
    top = []
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        sub = np.unravel_index(idx, counts)
        factors = [grids[k][:, sub[k]].reshape(*m.input_shapes[k], len(idx))
                   for k in range(m.K)]
        vals = score(factors)
        if vals.size:
            j = np.argsort(-vals, kind="stable")[:5]
            top.extend((float(vals[t]), [sub[k][t] for k in range(m.K)]) for t in j)
            best = max(best, float(vals.max()))
    if not refine or not top:
        return best

    def unpack(x, signs):
        out, pos = [], 0
        for k, d in enumerate(dims):
            na = 0 if d == 1 else (1 if d == 2 else 2)
            z = _angles_to_dir(d, x[pos:pos + na]) * signs[k]
            pos += na
            if reg.cones[k] is not None:
                z = reg.cones[k].project(z[:, None])[:, 0]
            out.append(z.reshape(*m.input_shapes[k], 1))
        return out

    top.sort(key=lambda t: -t[0])
    for val, picks in top[:5]:
        if not np.isfinite(val):
            continue
        x0, signs = [], []
        for k, d in enumerate(dims):
            z = grids[k][:, picks[k]]
            signs.append(np.sign(z[0]) if d == 1 and z[0] != 0 else 1.0)
            x0 += _dir_to_angles(d, z / np.linalg.norm(z))
        if not x0:
            continue
        res = minimize(lambda x: -score(unpack(x, signs))[0], np.array(x0), method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
        v = -float(res.fun)
        if np.isfinite(v):
            best = max(best, v)
    return best


# -- degree mismatch --------------------------------------------------------

@dataclass
class DegreeMismatchReport:
    eps: np.ndarray
    mismatched_diffs: np.ndarray     # (directions, eps) values of f(eps X) - f(0)
    matched_top_diffs: np.ndarray    # (eps,) along the top singular direction
    matched_random_diffs: np.ndarray
    duplication_ratio: float         # regularizer after / before duplicate-and-scale
    duplication_phi_error: float
    map_degree: float
    reg_degree: float

    @property
    def mismatched_all_increase(self) -> bool:
        return bool(np.all(self.mismatched_diffs > 0))

    @property
    def matched_descent(self) -> bool:
        return bool(np.any(self.matched_top_diffs < 0))


def degree_mismatch_probe(Y, lam: float, eps_grid=None, n_directions: int = 100,
                          seed: int = 0, reg_mismatched=None, dup_power: float = 3.0,
                          dup_rank: int = 3) -> DegreeMismatchReport:
    """Compare mismatched and matched regularizer degrees near the origin.

    With ``phi(u, v) = u v^T`` (degree 2) and the degree-1 default
    ``g = ||u|| + ||v||``, ``f(eps X) - f(0)`` is evaluated for random unit
    directions.  The matched companion uses ``g = ||u|| ||v||`` along Y's top
    singular pair.  The duplication check evaluates
    ``sum_i ||u_i||^a + ||v_i||^a`` before and after replacing (U, V) by
    ``(c[U U], c[V V])`` with ``c = sqrt(2)/2``.
    """
    Y = np.asarray(Y, dtype=np.float64)
    mp = MatrixProduct(*Y.shape)
    reg = reg_mismatched if reg_mismatched is not None else PowerSum(["l2", "l2"], power=1)
    if not reg.degree < mp.degree:
        raise ValueError(
            f"probe needs regularizer degree < map degree, got {reg.degree} vs {mp.degree}"
        )
    eps = np.logspace(-4, -2, 9) if eps_grid is None else np.asarray(eps_grid, dtype=float)
    rng = np.random.default_rng(seed)

    def f(U, V, g):
        R = Y - U @ V.T
        return 0.5 * float(np.vdot(R, R)) + lam * g.total([U, V])

    U = rng.standard_normal((Y.shape[0], n_directions))
    V = rng.standard_normal((Y.shape[1], n_directions))
    U /= np.linalg.norm(U, axis=0)
    V /= np.linalg.norm(V, axis=0)
    f0 = 0.5 * float(np.vdot(Y, Y))
    mis = np.array([[f(e * U[:, [j]], e * V[:, [j]], reg) - f0 for e in eps]
                    for j in range(n_directions)])

    matched = NormProduct(["l2", "l2"])
    P, s, Rt = np.linalg.svd(Y)
    u1, v1 = P[:, [0]], Rt[[0]].T
    top = np.array([f(e * u1, e * v1, matched) - f0 for e in eps])
    rnd = np.array([[f(e * U[:, [j]], e * V[:, [j]], matched) - f0 for e in eps]
                    for j in range(n_directions)])

    A = rng.standard_normal((Y.shape[0], dup_rank))
    B = rng.standard_normal((Y.shape[1], dup_rank))
    c = np.sqrt(2) / 2
    A2, B2 = c * np.hstack([A, A]), c * np.hstack([B, B])

    def colpow(M):
        return float((np.linalg.norm(M, axis=0) ** dup_power).sum())

    ratio = (colpow(A2) + colpow(B2)) / (colpow(A) + colpow(B))
    err = float(np.linalg.norm(A2 @ B2.T - A @ B.T))
    return DegreeMismatchReport(eps, mis, top, rnd, ratio, err, mp.degree, reg.degree)


__all__ = [
    "OracleResult", "svt", "nuclear_objective", "solve_convex_nuclear",
    "factor_oracle_solution", "brute_polar", "DegreeMismatchReport",
    "degree_mismatch_probe",
]
