"""Polar problem and global-optimality certificates.

The polar of ``W`` is ``sup <W, phi(z)>`` subject to ``g(z) <= 1``.  For
the matrix product with the l2 norm product it is the spectral norm and
is solved exactly by SVD; every other pair uses a multi-start
alternating maximization whose value is only a lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .regularizers import ElementalPair, NormProduct, PowerSum
from .tensor import inner

CERTIFIED = "CertifiedGlobal"
LIKELY = "LikelyGlobal"
ESCAPE = "EscapeFound"
INDETERMINATE = "Indeterminate"

STATIONARITY_CAVEAT = (
    "The certificate treats the supplied point as a local minimum; it was only "
    "checked to be approximately first-order stationary, which does not by itself "
    "establish local minimality."
)
HEURISTIC_CAVEAT = (
    "The polar value was found by heuristic local search and is only a lower bound "
    "on the true polar, so no global optimality claim is made."
)


@dataclass
class PolarResult:
    value: float
    maximizer: list
    exact: bool


def exact_polar_available(pair: ElementalPair) -> bool:
    reg = pair.reg
    if pair.map.kind != "matrix" or any(c is not None for c in reg.cones):
        return False
    if not all(n is not None and n.name == "l2" for n in reg.norms):
        return False
    if isinstance(reg, NormProduct):
        return all(a == 1 for a in reg.powers)
    return isinstance(reg, PowerSum) and reg.power == 2


def _spectral(W):
    P, s, Rt = np.linalg.svd(W)
    u, v = P[:, 0], Rt[0]
    # fix the SVD sign ambiguity: largest-magnitude entry of u positive
    if u[np.argmax(np.abs(u))] < 0:
        u, v = -u, -v
    return float(s[0]), [u, v]


def polar(pair: ElementalPair, W, restarts: int = 20, max_iter: int = 500,
          tol: float = 1e-12, seed: int = 0) -> PolarResult:
    """Solve (or heuristically maximize) the polar problem at ``W``."""
    W = np.asarray(W, dtype=np.float64)
    m, reg = pair.map, pair.reg
    if W.shape != tuple(m.output_shape):
        raise ValueError(f"W has shape {W.shape}, expected {tuple(m.output_shape)}")
    if exact_polar_available(pair):
        value, z = _spectral(W)
        return PolarResult(value, z, True)
    if not reg.unit_ball_polar:
        raise ValueError(f"no polar solver for regularizer {reg.describe()}")

    rng = np.random.default_rng(seed)
    shapes = m.input_shapes
    Z = [rng.standard_normal((*s, restarts)) for s in shapes]
    Z = reg.project_cones(Z)
    for k in range(m.K):
        Z[k] = reg.polar_lmo(k, Z[k])
    w = W.ravel()

    def values(Z):
        return w @ m.vec_phi_matrix(Z)

    best = values(Z)
    for _ in range(max_iter):
        prev = best
        for k in range(m.K):
            C = m._grad(Z, W)[k]
            Zk = reg.polar_lmo(k, C)
            dead = ~np.any(Zk.reshape(-1, restarts) != 0, axis=0)
            if np.any(dead):
                Zk = Zk.reshape(-1, restarts)
                Zk[:, dead] = Z[k].reshape(-1, restarts)[:, dead]
                Zk = Zk.reshape(C.shape)
            Z[k] = Zk
        best = values(Z)
        if np.all(best - prev <= tol * (1.0 + np.abs(prev))):
            break

    # rescale each restart onto g = 1 (degree-p homogeneity of phi and g)
    g = reg.slice_values(Z)
    vals = np.where((g > 0) & np.isfinite(g), best / np.where(g > 0, g, 1.0), -np.inf)
    i = int(np.argmax(vals))
    if not vals[i] > 0:
        return PolarResult(0.0, [np.zeros(s) for s in shapes], False)
    scale = g[i] ** (-1.0 / m.degree)
    z = [Zk[..., i] * scale for Zk in Z]
    return PolarResult(inner(W, m.eval_elemental(z)), z, False)


def per_slice_alignment(pair: ElementalPair, fs, W) -> np.ndarray:
    """``g(slice_i) - <W, phi(slice_i)>`` for every slice."""
    P = pair.map.vec_phi_matrix(fs)
    return pair.reg.slice_values(fs) - np.asarray(W).ravel() @ P


@dataclass
class Certificate:
    status: str
    polar_value: float
    alignment_residual: float
    exact: bool
    sum_g: float
    slice_residuals: np.ndarray
    escape_direction: list | None = None
    q_residual: float = 0.0
    has_zero_slice: bool = False
    caveat: str = STATIONARITY_CAVEAT
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status in (CERTIFIED, LIKELY)

    def to_text(self) -> str:
        lines = [
            f"status: {self.status}",
            f"polar_value: {self.polar_value!r}",
            f"polar_exact: {str(self.exact).lower()}",
            f"alignment_residual: {self.alignment_residual!r}",
            f"sum_g: {self.sum_g!r}",
            f"q_residual: {self.q_residual!r}",
            f"zero_slice: {str(self.has_zero_slice).lower()}",
            "slice_residuals: " + " ".join(repr(float(x)) for x in self.slice_residuals),
        ]
        lines += [f"note: {n}" for n in self.notes]
        lines.append(f"caveat: {self.caveat}")
        return "\n".join(lines) + "\n"


def check_global(prob, fs, Q=None, cert_tol: float = 1e-6, **polar_kw) -> Certificate:
    """Test the polar and alignment conditions for global optimality at (fs, Q).

    EscapeFound carries a slice set ``z`` with ``<W, phi(z)> > g(z) + cert_tol``;
    appending it (suitably scaled) as a new slice decreases the objective.
    """
    Q = prob._q(Q)
    W = prob.dual_variable(fs, Q)
    res = per_slice_alignment(prob.pair, fs, W)
    sum_g = float(prob.reg.total(fs))
    alignment = abs(inner(W, prob.map.eval_full(fs)) - sum_g)
    pol = polar(prob.pair, W, **polar_kw)
    q_res = 0.0
    if prob.h.active:
        X = prob.map.eval_full(fs) + Q
        q_res = float(np.linalg.norm(Q - prob.h.prox(Q - prob.loss.grad(X), 1.0)))
    zero = len(fs.zero_slices()) > 0
    caveat = STATIONARITY_CAVEAT if pol.exact else STATIONARITY_CAVEAT + " " + HEURISTIC_CAVEAT
    notes = []
    if pol.value > 1 + cert_tol:
        status, direction = ESCAPE, pol.maximizer
        notes.append("polar exceeds 1: appending the escape direction as a new slice decreases the objective")
    else:
        direction = None
        if alignment > cert_tol * (1 + sum_g):
            status = INDETERMINATE
            notes.append("alignment condition fails: the point is not stationary along slice rescalings")
        elif q_res > cert_tol * (1 + float(np.linalg.norm(Q))):
            status = INDETERMINATE
            notes.append("optimality condition in Q fails")
        else:
            status = CERTIFIED if pol.exact else LIKELY
    return Certificate(status, float(pol.value), float(alignment), pol.exact, sum_g, res,
                       direction, q_res, zero, caveat, notes)
