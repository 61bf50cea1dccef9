"""Cyclic block proximal-gradient descent on the factored objective.

One block per factor tensor plus one for Q (when the Q term is active).
Each block takes a prox-gradient step with Armijo backtracking on the
loss; a step is only accepted if the full objective does not increase
by more than a few ulps, so traces are monotone up to rounding even where
the block prox is inexact.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .problem import Problem
from .tensor import FactorSet

log = logging.getLogger(__name__)


@dataclass
class DescentConfig:
    max_iters: int = 20000
    stationarity_tol: float = 1e-8
    backtrack_shrink: float = 0.5
    initial_step: float = 1.0
    min_objective_decrease: float = 1e-12
    stall_window: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not self.stationarity_tol > 0:
            raise ValueError("stationarity_tol must be positive")
        if not 0 < self.backtrack_shrink < 1:
            raise ValueError("backtrack_shrink must lie in (0, 1)")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be positive")
        if self.min_objective_decrease < 0:
            raise ValueError("min_objective_decrease must be nonnegative")


@dataclass
class DescentResult:
    factors: FactorSet
    Q: np.ndarray
    objective: float
    iterations: int
    stationarity_residual: float
    reason: str
    trace: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.reason == "stationary"


class _State:
    """Mutable working copy of the iterate with cached loss pieces."""

    def __init__(self, prob: Problem, factors, Q):
        self.prob = prob
        self.factors = [np.array(f, dtype=np.float64) for f in factors]
        self.Q = np.array(Q, dtype=np.float64)
        self.refresh()

    def refresh(self):
        p = self.prob
        self.X = p.map.eval_full(self.factors) + self.Q
        self.loss = p.loss.value(self.X)
        self.greg = p.reg.total(self.factors)
        self.hq = p.h.value(self.Q)

    @property
    def objective(self):
        return self.loss + self.prob.lam * self.greg + self.hq


def _block_grad(prob, factors, G, k):
    m = prob.map
    if m.kind == "matrix":
        U, V = factors
        return G @ V if k == 0 else G.T @ U
    return m._grad(factors, G)[k]


def _prox_point(prob, st, k, x, grad, t):
    """Candidate for block k (k == K means the Q block)."""
    p = prob
    if k == len(st.factors):
        return p.h.prox(x - t * grad, t)
    return p.reg.prox_block(st.factors, k, x - t * grad, t * p.lam)


STEP_FLOOR = 1e-14
ROUNDING_SLACK = 8 * np.finfo(np.float64).eps


def _step_block(prob: Problem, st: _State, k: int, t: float, shrink: float, t_ref: float):
    """Backtracking prox-gradient step on one block.

    Returns ``(r2, t, backtracked)`` where ``r2`` is the squared
    gradient-mapping norm of the step taken.  A null move at a step below
    ``t_ref`` may just be rounding, so it is re-tested at ``t_ref``.  When
    no step down to ``STEP_FLOOR * t_ref`` is accepted (rounding noise near
    a stationary point), ``r2`` is measured at ``t_ref`` and the step resets
    to ``t_ref``: dividing a rounding-level move by a tiny step squared
    would report a spurious residual.
    """
    K = len(st.factors)
    G = prob.loss.grad(st.X)
    is_q = k == K
    x = st.Q if is_q else st.factors[k]
    grad = G if is_q else _block_grad(prob, st.factors, G, k)
    F0 = st.objective
    # a few ulps: objective differences this small are rounding, not ascent
    slack = ROUNDING_SLACK * max(abs(F0), 1.0)
    backtracked = False
    while t > STEP_FLOOR * t_ref:
        cand = _prox_point(prob, st, k, x, grad, t)
        d = cand - x
        dd = float(np.vdot(d, d))
        if dd == 0.0:
            if backtracked:
                break
            if t < t_ref:
                t = t_ref
                continue
            return 0.0, t, False
        if is_q:
            Xc = st.X + d
            regc = st.greg
            hq = prob.h.value(cand)
        else:
            trial = list(st.factors)
            trial[k] = cand
            Xc = prob.map.eval_full(trial) + st.Q
            regc = prob.reg.total(trial)
            hq = st.hq
        lc = prob.loss.value(Xc)
        armijo = lc <= st.loss + float(np.vdot(grad, d)) + dd / (2 * t) + 1e-15 * abs(st.loss)
        Fc = lc + prob.lam * regc + hq
        if armijo and Fc <= F0 + slack:
            if is_q:
                st.Q = cand
                st.hq = hq
            else:
                st.factors[k] = cand
                st.greg = regc
            st.X = Xc
            st.loss = lc
            return dd / t**2, t, backtracked
        t *= shrink
        backtracked = True
    d = _prox_point(prob, st, k, x, grad, t_ref) - x
    return float(np.vdot(d, d)) / t_ref**2, t_ref, True


def gradient_mapping_norm(prob: Problem, factors, Q, steps) -> float:
    """Norm of the composite gradient mapping at a point (all blocks Jacobi)."""
    st = _State(prob, factors, prob._q(Q))
    G = prob.loss.grad(st.X)
    K = len(st.factors)
    total = 0.0
    for k, t in zip(range(K + prob.h.active), steps):
        x = st.Q if k == K else st.factors[k]
        grad = G if k == K else _block_grad(prob, st.factors, G, k)
        d = _prox_point(prob, st, k, x, grad, t) - x
        total += float(np.vdot(d, d)) / t**2
    return float(np.sqrt(total))


def descend(prob: Problem, init, Qinit=None, cfg: DescentConfig | None = None) -> DescentResult:
    """Run block proximal gradient from ``init`` until approximately stationary.

    Stops with reason ``stationary`` when the gradient-mapping norm of a
    full sweep falls below ``cfg.stationarity_tol``; ``stalled`` when the
    objective has decreased by less than ``min_objective_decrease`` (relative)
    over ``stall_window`` sweeps; otherwise ``max_iters``.
    """
    cfg = cfg or DescentConfig()
    Q = prob._q(Qinit)
    st = _State(prob, init, Q)
    F = st.objective
    if not np.isfinite(F):
        raise ValueError("objective is not finite at the initial point")
    nblocks = len(st.factors) + prob.h.active
    steps = [cfg.initial_step] * nblocks
    ref_steps = list(steps)
    res = gradient_mapping_norm(prob, st.factors, st.Q, ref_steps)
    trace = [(0, F, res)]
    it = 0
    reason = "stationary" if res <= cfg.stationarity_tol else "max_iters"
    window_start = F
    while reason != "stationary" and it < cfg.max_iters:
        it += 1
        sq = 0.0
        t_min = np.inf
        for k in range(nblocks):
            moved, t, backtracked = _step_block(prob, st, k, steps[k], cfg.backtrack_shrink,
                                               cfg.initial_step)
            sq += moved
            t_min = min(t_min, t)
            steps[k] = t if backtracked else t / cfg.backtrack_shrink
        F_new = st.objective
        if not np.isfinite(F_new):
            raise FloatingPointError(f"objective became {F_new} at iteration {it}")
        res = float(np.sqrt(sq))
        if res > cfg.stationarity_tol and t_min < cfg.initial_step:
            # small steps amplify rounding in the displacement; re-measure at the reference step
            res = min(res, gradient_mapping_norm(prob, st.factors, st.Q, ref_steps))
        trace.append((it, F_new, res))
        F = F_new
        if res <= cfg.stationarity_tol:
            reason = "stationary"
        elif it % cfg.stall_window == 0:
            if window_start - F <= cfg.min_objective_decrease * max(1.0, abs(F)):
                reason = "stalled"
                break
            window_start = F
    return DescentResult(FactorSet(st.factors), st.Q, F, it, res, reason, trace)
