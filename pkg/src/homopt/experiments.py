"""Reproducible numerical experiments, each producing a CSV table.

* ``degree-mismatch``: objective change near the origin for a degree-1
  regularizer on the degree-2 matrix product, next to the matched pair.
* ``omega-equivalence``: meta-solves with the product-of-norms and the
  power-sum regularizer on the same data; final objectives should agree.
* ``path-sweep``: objective along the null-space collapse path at a
  stationary point with more slices than the output has entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .maps import MatrixProduct
from .meta import MetaConfig, find_null_theta, path_objectives, run_meta
from .descent import descend
from .oracle import degree_mismatch_probe
from .problem import Problem, SquaredLoss
from .regularizers import ElementalPair, NormProduct, PowerSum

GAMMAS = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass
class Table:
    name: str
    header: list
    rows: list
    summary: dict

    def summary_lines(self):
        return [f"{k}: {v!r}" for k, v in self.summary.items()]


def degree_mismatch(Y, lam: float, seed: int = 0, n_directions: int = 100, eps_grid=None) -> Table:
    rep = degree_mismatch_probe(Y, lam, eps_grid=eps_grid, n_directions=n_directions, seed=seed)
    rows = []
    for j, e in enumerate(rep.eps):
        col = rep.mismatched_diffs[:, j]
        rows.append([float(e), float(col.min()), float(col.max()),
                     float(rep.matched_top_diffs[j]), float(rep.matched_random_diffs[:, j].min())])
    header = ["eps", "mismatched_min_diff", "mismatched_max_diff", "matched_top_diff",
              "matched_random_min_diff"]
    summary = {
        "map_degree": rep.map_degree,
        "reg_degree": rep.reg_degree,
        "mismatched_all_increase": rep.mismatched_all_increase,
        "matched_descent_found": rep.matched_descent,
        "duplication_ratio": rep.duplication_ratio,
        "duplication_phi_error": rep.duplication_phi_error,
    }
    return Table("degree-mismatch", header, rows, summary)


def omega_equivalence(Y, lam: float, r_init: int = 1, cfg: MetaConfig | None = None) -> Table:
    """Meta-solve the matrix problem under both l2 regularizer forms."""
    Y = np.asarray(Y, dtype=np.float64)
    mp = MatrixProduct(*Y.shape)
    cfg = cfg or MetaConfig()
    rows = []
    objs = []
    for reg in (NormProduct(["l2", "l2"]), PowerSum(["l2", "l2"])):
        prob = Problem(ElementalPair(mp, reg), SquaredLoss(Y), lam, r_init=r_init)
        res = run_meta(prob, cfg=cfg)
        objs.append(res.objective)
        rows.append([reg.kind, res.objective, res.certificate.status, res.r_final,
                     res.outer_iterations])
    rel = abs(objs[0] - objs[1]) / max(abs(objs[0]), abs(objs[1]), 1e-300)
    header = ["regularizer", "objective", "status", "r_final", "outer_iterations"]
    return Table("omega-equivalence", header, rows, {"relative_difference": float(rel)})


def path_sweep(prob: Problem, cfg: MetaConfig | None = None, gammas=GAMMAS) -> Table:
    """Descend with ``card(D) + 1`` slices, then walk the collapse path."""
    cfg = cfg or MetaConfig()
    rng = np.random.default_rng(cfg.seed)
    r = max(prob.r_init, prob.map.card + 1)
    d = descend(prob, prob.random_init(r, rng), None, cfg.descent)
    theta = find_null_theta(prob.pair, d.factors, cfg.null_tol)
    if theta is None:
        raise RuntimeError("no null-space direction found at the stationary point")
    vals = path_objectives(prob, d.factors, d.Q, theta, gammas)
    spread = float(vals.max() - vals.min()) / max(abs(float(vals[0])), 1e-300)
    rows = [[float(gm), float(v)] for gm, v in zip(gammas, vals)]
    summary = {
        "r": r,
        "descent_reason": d.reason,
        "stationarity_residual": d.stationarity_residual,
        "null_residual": theta.null_residual,
        "g_residual": theta.g_residual,
        "relative_spread": spread,
    }
    return Table("path-sweep", ["gamma", "objective"], rows, summary)


EXPERIMENTS = ("degree-mismatch", "omega-equivalence", "path-sweep")
