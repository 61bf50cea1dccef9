"""The factored objective and its smooth-part gradient.

``f_r(X, Q) = loss(Phi_r(X) + Q) + lam * sum_i g(slice_i) + H(Q)``.
The loss sees ``Phi_r(X) + Q`` (additive coupling); when the Q term is
absent, Q is held at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .regularizers import ElementalPair
from .tensor import FactorSet, ShapeError, inner


class DegreeMismatchError(ValueError):
    pass


class SquaredLoss:
    """0.5 * ||X - Y||_F^2."""

    kind = "squared"

    def __init__(self, Y):
        self.Y = np.asarray(Y, dtype=np.float64)

    def value(self, X) -> float:
        R = X - self.Y
        return 0.5 * float(np.vdot(R, R))

    def grad(self, X) -> np.ndarray:
        return X - self.Y


class LogisticLoss:
    """sum log(1 + exp(-Y * X)) with labels Y in {-1, +1}."""

    kind = "logistic"

    def __init__(self, Y):
        Y = np.asarray(Y, dtype=np.float64)
        if not np.all(np.isin(Y, (-1.0, 1.0))):
            raise ValueError("logistic labels must be -1 or +1")
        self.Y = Y

    def value(self, X) -> float:
        return float(np.logaddexp(0.0, -self.Y * X).sum())

    def grad(self, X) -> np.ndarray:
        # d/dx log(1 + e^{-yx}) = -y * sigmoid(-yx)
        return -self.Y * np.exp(-np.logaddexp(0.0, self.Y * X))


@dataclass(frozen=True)
class QTerm:
    """H(Q): ``absent``, ``l1`` (w * ||Q||_1) or ``squared_l2`` (w/2 * ||Q||^2)."""

    kind: str = "absent"
    weight: float = 0.0

    def __post_init__(self):
        if self.kind not in ("absent", "l1", "squared_l2"):
            raise ValueError(f"unknown Q term {self.kind!r}")
        if self.kind != "absent" and self.weight < 0:
            raise ValueError("Q weight must be nonnegative")

    @property
    def active(self) -> bool:
        return self.kind != "absent"

    def value(self, Q) -> float:
        if self.kind == "l1":
            return self.weight * float(np.abs(Q).sum())
        if self.kind == "squared_l2":
            return 0.5 * self.weight * float(np.vdot(Q, Q))
        return 0.0

    def prox(self, Q, t: float):
        if self.kind == "l1":
            return np.sign(Q) * np.maximum(np.abs(Q) - t * self.weight, 0.0)
        if self.kind == "squared_l2":
            return Q / (1.0 + t * self.weight)
        return np.zeros_like(Q)


@dataclass(frozen=True)
class Problem:
    pair: ElementalPair
    loss: object
    lam: float
    h: QTerm = QTerm()
    r_init: int = 1

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.pair.map.degree != self.pair.reg.degree:
            raise DegreeMismatchError(
                f"map degree {self.pair.map.degree} != regularizer degree "
                f"{self.pair.reg.degree}"
            )
        if tuple(self.loss.Y.shape) != tuple(self.pair.map.output_shape):
            raise ShapeError(
                f"data shape {self.loss.Y.shape} does not match map output "
                f"{self.pair.map.output_shape}"
            )
        if self.r_init < 1:
            raise ValueError("r_init must be >= 1")

    @property
    def map(self):
        return self.pair.map

    @property
    def reg(self):
        return self.pair.reg

    @property
    def output_shape(self):
        return tuple(self.pair.map.output_shape)

    def zero_q(self):
        return np.zeros(self.output_shape)

    def _q(self, Q):
        if Q is None or not self.h.active:
            return self.zero_q()
        Q = np.asarray(Q, dtype=np.float64)
        if Q.shape != self.output_shape:
            raise ShapeError(f"Q has shape {Q.shape}, expected {self.output_shape}")
        return Q

    def smooth(self, fs, Q=None) -> float:
        """The loss term alone."""
        return self.loss.value(self.map.eval_full(fs) + self._q(Q))

    def objective(self, fs, Q=None) -> float:
        Q = self._q(Q)
        g = self.reg.total(fs)
        if not np.isfinite(g):
            return np.inf
        return self.loss.value(self.map.eval_full(fs) + Q) + self.lam * g + self.h.value(Q)

    def grad(self, fs, Q=None):
        """Gradient of the loss term w.r.t. every factor and Q."""
        Q = self._q(Q)
        G = self.loss.grad(self.map.eval_full(fs) + Q)
        gq = G if self.h.active else np.zeros_like(G)
        return self.map.adjoint_grad(fs, G), gq

    def dual_variable(self, fs, Q=None) -> np.ndarray:
        """W = -(1/lam) * grad_X loss at (Phi_r(fs), Q)."""
        return -self.loss.grad(self.map.eval_full(fs) + self._q(Q)) / self.lam

    def random_init(self, r: int, rng: np.random.Generator) -> FactorSet:
        """Uniform [-0.5, 0.5] entries, projected onto cones, scaled so sum g = 1."""
        fs = FactorSet.random(self.map.input_shapes, r, rng)
        fs = FactorSet(self.reg.project_cones(fs))
        g = self.reg.total(fs)
        if np.isfinite(g) and g > 0:
            fs = FactorSet(f * g ** (-1.0 / self.map.degree) for f in fs)
        return fs


def theta_identity_gap(prob: Problem, fs, Q, theta) -> float:
    """``|<W, sum theta_i phi_i> - sum theta_i g_i|`` at (fs, Q)."""
    W = prob.dual_variable(fs, Q)
    P = prob.map.vec_phi_matrix(fs)
    g = prob.reg.slice_values(fs)
    theta = np.asarray(theta, dtype=np.float64)
    return abs(inner(W.ravel(), P @ theta) - float(theta @ g))
