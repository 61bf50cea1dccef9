"""Elemental mappings and the r-element factorization mapping.

Each map works on factor tensors whose last axis indexes the ``r`` slices;
evaluating a single slice set is the ``r = 1`` case.
"""

from __future__ import annotations

import string

import numpy as np

from .tensor import FactorSet, ShapeError, cardinality


class HomogeneousMap:
    """Base class for positively homogeneous elemental mappings.

    Subclasses set ``input_shapes``, ``output_shape`` and ``degree`` and
    implement :meth:`eval_slices` and :meth:`_grad`.
    """

    kind = "abstract"
    input_shapes: tuple
    output_shape: tuple
    degree: int

    @property
    def K(self) -> int:
        return len(self.input_shapes)

    @property
    def card(self) -> int:
        return cardinality(self.output_shape)

    def _check(self, factors):
        factors = list(factors)
        if len(factors) != self.K:
            raise ShapeError(f"{self.kind} takes {self.K} factors, got {len(factors)}")
        r = None
        for k, (f, s) in enumerate(zip(factors, self.input_shapes)):
            f = np.asarray(f)
            if f.shape[:-1] != tuple(s) or f.ndim != len(s) + 1:
                raise ShapeError(
                    f"factor {k} has shape {f.shape}, expected {tuple(s)} + (r,)"
                )
            if r is None:
                r = f.shape[-1]
            elif f.shape[-1] != r:
                raise ShapeError("factors disagree on r")
        return factors

    def eval_slices(self, factors) -> np.ndarray:
        """Return phi of every slice stacked on a trailing axis, shape ``D + (r,)``."""
        raise NotImplementedError

    def eval_full(self, factors) -> np.ndarray:
        """Phi_r: the sum of phi over the r slices."""
        return self.eval_slices(factors).sum(axis=-1)

    def eval_elemental(self, slices) -> np.ndarray:
        slices = [np.asarray(s, dtype=np.float64) for s in slices]
        if len(slices) != self.K:
            raise ShapeError(f"{self.kind} takes {self.K} slices, got {len(slices)}")
        for k, (s, shape) in enumerate(zip(slices, self.input_shapes)):
            if s.shape != tuple(shape):
                raise ShapeError(f"slice {k} has shape {s.shape}, expected {tuple(shape)}")
        return self.eval_slices([s[..., None] for s in slices])[..., 0]

    def adjoint_grad(self, fs, W) -> FactorSet:
        """Gradient of ``<W, Phi_r(fs)>`` with respect to every factor."""
        W = np.asarray(W, dtype=np.float64)
        if W.shape != tuple(self.output_shape):
            raise ShapeError(f"W has shape {W.shape}, expected {tuple(self.output_shape)}")
        return FactorSet(self._grad(self._check(fs), W))

    def _grad(self, factors, W):
        raise NotImplementedError

    def vec_phi_matrix(self, fs) -> np.ndarray:
        """``card(D) x r`` matrix whose column i is vec(phi(slice i))."""
        P = self.eval_slices(fs)
        return P.reshape(self.card, P.shape[-1])


class MatrixProduct(HomogeneousMap):
    """phi(u, v) = u v^T, so Phi_r(U, V) = U V^T."""

    kind = "matrix"

    def __init__(self, m: int, n: int):
        self.input_shapes = ((m,), (n,))
        self.output_shape = (m, n)
        self.degree = 2

    def eval_slices(self, factors):
        U, V = self._check(factors)
        return U[:, None, :] * V[None, :, :]

    def eval_full(self, factors):
        U, V = self._check(factors)
        return U @ V.T

    def _grad(self, factors, W):
        U, V = factors
        return [W @ V, W.T @ U]


class CPOuterProduct(HomogeneousMap):
    """phi(x^1, ..., x^K) = x^1 (outer) ... (outer) x^K, the CP model."""

    kind = "cp"

    def __init__(self, dims):
        dims = tuple(int(d) for d in dims)
        if len(dims) < 2:
            raise ValueError("CP outer product needs K >= 2 factors")
        if len(dims) > 20:
            raise ValueError("CP outer product supports at most 20 factors")
        self.input_shapes = tuple((d,) for d in dims)
        self.output_shape = dims
        self.degree = len(dims)
        letters = string.ascii_lowercase[: len(dims)]
        self._letters = letters
        ops = ",".join(f"{c}z" for c in letters)
        self._slices_expr = f"{ops}->{letters}z"
        self._full_expr = f"{ops}->{letters}"

    def eval_slices(self, factors):
        return np.einsum(self._slices_expr, *self._check(factors))

    def eval_full(self, factors):
        return np.einsum(self._full_expr, *self._check(factors), optimize=True)

    def _grad(self, factors, W):
        L = self._letters
        out = []
        for k in range(self.K):
            others = [f"{c}z" for j, c in enumerate(L) if j != k]
            expr = f"{L}," + ",".join(others) + f"->{L[k]}z"
            out.append(
                np.einsum(expr, W, *[f for j, f in enumerate(factors) if j != k],
                          optimize=True)
            )
        return out


class ReLUNetwork(HomogeneousMap):
    """Parallel ReLU subnetworks on a fixed data matrix ``V`` (N x d_in).

    One slice is one subnetwork with weight groups ``x^1, ..., x^K``;
    ``x^k`` maps width ``w_k`` to ``w_{k+1}`` where
    ``w = (d_in, *hidden, d_out)``.  Rectification follows every hidden
    linear layer and the final layer is linear.  Slice axes of hidden
    width 1 are dropped, so ``hidden=(1,)`` gives the three-layer form
    ``phi(x^1, x^2) = relu(V x^1) (x^2)^T`` with vector slices.
    The subgradient of the rectifier at 0 is taken as 0.
    """

    kind = "relu"

    def __init__(self, V, d_out: int, hidden=(1,)):
        V = np.array(V, dtype=np.float64)
        if V.ndim != 2:
            raise ShapeError("data matrix V must be 2-D")
        hidden = tuple(int(h) for h in hidden)
        if not hidden or any(h < 1 for h in hidden):
            raise ValueError("hidden widths must be positive")
        V.flags.writeable = False
        self.V = V
        self.hidden = hidden
        self.widths = (V.shape[1], *hidden, int(d_out))
        K = len(hidden) + 1
        shapes = []
        for k in range(K):
            full = (self.widths[k], self.widths[k + 1])
            keep = [
                d for ax, d in enumerate(full)
                if not (d == 1 and (k + ax) in range(1, K))
            ]
            shapes.append(tuple(keep))
        self._full_shapes = [(self.widths[k], self.widths[k + 1]) for k in range(K)]
        self.input_shapes = tuple(shapes)
        self.output_shape = (V.shape[0], int(d_out))
        self.degree = K

    def _mats(self, factors):
        r = np.asarray(factors[0]).shape[-1]
        return [np.asarray(f).reshape(*s, r) for f, s in zip(factors, self._full_shapes)]

    def _forward(self, mats):
        pre = []
        H = np.einsum("nd,dhr->nhr", self.V, mats[0])
        for X in mats[1:]:
            pre.append(H)
            H = np.einsum("nhr,hgr->ngr", np.maximum(H, 0.0), X)
        return H, pre

    def eval_slices(self, factors):
        out, _ = self._forward(self._mats(self._check(factors)))
        return out

    def _grad(self, factors, W):
        mats = self._mats(factors)
        _, pre = self._forward(mats)
        grads = [None] * len(mats)
        # upstream gradient with respect to each layer output, per slice
        G = np.broadcast_to(W[:, :, None], (*W.shape, mats[0].shape[-1]))
        for k in range(len(mats) - 1, 0, -1):
            A = np.maximum(pre[k - 1], 0.0)
            grads[k] = np.einsum("nhr,ngr->hgr", A, G)
            G = np.einsum("ngr,hgr->nhr", G, mats[k]) * (pre[k - 1] > 0)
        grads[0] = np.einsum("nd,nhr->dhr", self.V, G)
        return [g.reshape(np.asarray(f).shape) for g, f in zip(grads, factors)]
