"""The local descent meta-algorithm.

Descend to a stationary point; certify when a zero slice exists; else
move along an objective-preserving null-space path that zeroes a slice;
else append a zero slice and test it with the polar.  Slices are rescaled
along the path by ``(1 + theta_i)**(1/p)`` with ``min theta = -1``, which
is the convention that actually zeroes a slice.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .certificate import (CERTIFIED, ESCAPE, INDETERMINATE, LIKELY, Certificate,
                          check_global)
from .descent import DescentConfig, DescentResult, descend
from .tensor import FactorSet

log = logging.getLogger(__name__)

PATH_CONVENTION = "collapse scaling (1+theta_i)^(1/p), min theta = -1"


@dataclass
class ThetaDirection:
    theta: np.ndarray
    null_residual: float
    g_residual: float


@dataclass
class Event:
    iteration: int
    kind: str
    r: int
    objective: float
    detail: str = ""

    def to_line(self) -> str:
        line = f"{self.iteration} {self.kind} {self.r} {self.objective!r}"
        return f"{line} {self.detail}" if self.detail else line


@dataclass
class MetaConfig:
    max_outer: int = 50
    cert_tol: float = 1e-6
    null_tol: float = 1e-10
    path_tol: float = 1e-8
    escape_eps: float = 1e-3
    polar_restarts: int = 20
    polar_iters: int = 500
    seed: int = 0
    descent: DescentConfig = field(default_factory=DescentConfig)


@dataclass
class MetaResult:
    factors: FactorSet
    Q: np.ndarray
    certificate: Certificate
    r_final: int
    outer_iterations: int
    events: list
    descents: list

    @property
    def objective(self) -> float:
        return self.events[-1].objective

    def event_log(self) -> str:
        return "\n".join(e.to_line() for e in self.events) + "\n"


def find_null_theta(pair, fs, null_tol: float = 1e-10) -> ThetaDirection | None:
    """Find theta != 0 with ``sum_i theta_i phi(slice_i) = 0``, scaled to min -1.

    Zero or duplicated phi columns give an exact integer theta.  Otherwise
    the smallest right singular vector of the phi-column matrix is used.  Of
    the two signs, the one with a negative entry and the smaller
    ``sum_i theta_i g_i`` is returned, so the path never raises the
    regularizer.
    """
    M = pair.map.vec_phi_matrix(fs)
    g = pair.reg.slice_values(fs)
    exact = _exact_null_theta(M, g)
    if exact is not None:
        return exact
    card, r = M.shape
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    smax = float(s[0]) if s.size else 0.0
    smin = 0.0 if r > card else float(s[-1])
    if smin > null_tol * (smax + 1.0):
        return None
    v = Vt[-1]
    best = None
    for cand in (v, -v):
        lo = cand.min()
        if not lo < 0:
            continue
        theta = cand / -lo
        theta[np.abs(theta) <= 1e-14] = 0.0
        theta[np.argmin(theta)] = -1.0
        gres = float(theta @ g)
        if best is None or gres < best.g_residual:
            best = ThetaDirection(theta, float(np.linalg.norm(M @ theta)), gres)
    return best


def _exact_null_theta(M, g) -> ThetaDirection | None:
    """Integer null directions: a zero column, or two identical columns."""
    r = M.shape[1]
    zero = np.flatnonzero(~np.any(M != 0, axis=0))
    if len(zero):
        theta = np.zeros(r)
        theta[zero[0]] = -1.0
        return ThetaDirection(theta, 0.0, float(-g[zero[0]]))
    _, first, inverse = np.unique(M.T, axis=0, return_index=True, return_inverse=True)
    inverse = np.ravel(inverse)
    for j in range(r):
        i = first[inverse[j]]
        if i != j:
            # drop the copy with the larger g so the regularizer cannot grow
            keep, drop = (i, j) if g[i] <= g[j] else (j, i)
            theta = np.zeros(r)
            theta[keep], theta[drop] = 1.0, -1.0
            return ThetaDirection(theta, 0.0, float(g[keep] - g[drop]))
    return None


def collapse_slice(pair, fs, theta) -> FactorSet:
    """Rescale slice i by ``(1 + theta_i)**(1/p)``; slices at theta = -1 become zero."""
    theta = np.asarray(getattr(theta, "theta", theta), dtype=np.float64)
    base = 1.0 + theta
    if np.any(base < -1e-12):
        raise RuntimeError("collapse needs min theta >= -1")
    base = np.maximum(base, 0.0)
    coef = base ** (1.0 / pair.map.degree)
    coef[theta <= -1.0] = 0.0
    return fs.scale_slices(coef)


def append_zero_slice(fs) -> FactorSet:
    return fs.concat(FactorSet.zeros(fs.slice_shapes, 1))


def path_objectives(prob, fs, Q, theta, gammas):
    """Objective along ``(1 + gamma * theta_i)**(1/p)`` rescalings."""
    theta = np.asarray(getattr(theta, "theta", theta), dtype=np.float64)
    out = []
    for gam in gammas:
        coef = np.maximum(1.0 + gam * theta, 0.0) ** (1.0 / prob.map.degree)
        out.append(prob.objective(fs.scale_slices(coef), Q))
    return np.array(out)


def seed_escape(prob, fs, Q, i: int, direction, eps: float = 1e-3):
    """Place ``t**(1/p) * direction`` in (zero) slice i, choosing t by grid search.

    Returns the new factor set, or None if no tested t lowers the objective.
    """
    p = prob.map.degree
    F0 = prob.objective(fs, Q)
    best, best_F = None, F0
    for k in range(-40, 21):
        t = eps**p * 2.0**k
        cand = fs.with_slice(i, [t ** (1.0 / p) * z for z in direction])
        F = prob.objective(cand, Q)
        if F < best_F:
            best, best_F = cand, F
    return best


def run_meta(prob, init: FactorSet | None = None, Qinit=None,
             cfg: MetaConfig | None = None) -> MetaResult:
    """Run the meta-algorithm and return factors, certificate and event log."""
    cfg = cfg or MetaConfig()
    rng = np.random.default_rng(cfg.seed)
    fs = init if init is not None else prob.random_init(prob.r_init, rng)
    Q = prob._q(Qinit)
    if not np.isfinite(prob.objective(fs, Q)):
        raise ValueError("objective is not finite at the initial point")
    r_init = fs.r
    events: list[Event] = []
    descents: list[DescentResult] = []
    pkw = dict(restarts=cfg.polar_restarts, max_iter=cfg.polar_iters, seed=cfg.seed)

    def emit(it, kind, detail=""):
        ev = Event(it, kind, fs.r, float(prob.objective(fs, Q)), detail)
        events.append(ev)
        log.info("outer %d %s r=%d f=%.12g %s", it, kind, ev.r, ev.objective, detail)

    def escape_into(it, i, cert):
        nonlocal fs
        seeded = seed_escape(prob, fs, Q, i, cert.escape_direction, cfg.escape_eps)
        if seeded is None:
            return False
        fs = seeded
        emit(it, "escaped", f"slice={i} polar={cert.polar_value!r}")
        return True

    emit(0, "initialized", PATH_CONVENTION)
    cert = None
    for it in range(1, cfg.max_outer + 1):
        d = descend(prob, fs, Q, cfg.descent)
        descents.append(d)
        fs, Q = d.factors, d.Q
        emit(it, "descended",
             f"reason={d.reason} iterations={d.iterations} residual={d.stationarity_residual:.3e}")

        zero = fs.zero_slices()
        if len(zero):
            cert = check_global(prob, fs, Q, cfg.cert_tol, **pkw)
            if cert.status in (CERTIFIED, LIKELY):
                emit(it, "certified", cert.status)
                return MetaResult(fs, Q, cert, fs.r, it, events, descents)
            if cert.status == ESCAPE and not escape_into(it, int(zero[0]), cert):
                break
            continue

        theta = find_null_theta(prob.pair, fs, cfg.null_tol)
        if theta is not None:
            fs = collapse_slice(prob.pair, fs, theta)
            emit(it, "collapsed",
                 f"null_residual={theta.null_residual:.3e} g_residual={theta.g_residual:.3e}")
            continue

        fs = append_zero_slice(fs)
        emit(it, "appended")
        cert = check_global(prob, fs, Q, cfg.cert_tol, **pkw)
        if cert.status in (CERTIFIED, LIKELY):
            emit(it, "certified", cert.status)
            return MetaResult(fs, Q, cert, fs.r, it, events, descents)
        if cert.status == ESCAPE and not escape_into(it, fs.r - 1, cert):
            break

    final = check_global(prob, fs, Q, cfg.cert_tol, **pkw)
    final.notes.append(f"outer budget of {cfg.max_outer} exhausted or no escape step found "
                       f"(last check: {final.status})")
    final.status = INDETERMINATE
    emit(len(descents), "indeterminate")
    return MetaResult(fs, Q, final, fs.r, len(descents), events, descents)


__all__ = [
    "ThetaDirection", "Event", "MetaConfig", "MetaResult", "find_null_theta",
    "collapse_slice", "append_zero_slice", "path_objectives", "seed_escape", "run_meta",
    "r_bound",
]


def r_bound(r_init: int, card: int) -> int:
    return max(r_init, card + 1)
