import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from homopt import io
from homopt.certificate import polar
from homopt.maps import CPOuterProduct, MatrixProduct, ReLUNetwork
from homopt.oracle import nuclear_objective, svt
from homopt.regularizers import (ElementalPair, LinearEquality, LinearInequality, NonNegOrthant,
                                 NormProduct, PowerSum, SupportBound)
from homopt.tensor import FactorSet, inner

SETTINGS = settings(max_examples=60, deadline=None)

any_finite = st.floats(allow_nan=False, allow_infinity=False)
seeds = st.integers(0, 2**32 - 1)
alphas = st.floats(0.01, 20.0)


def _map(kind, rng):
    if kind == "matrix":
        return MatrixProduct(3, 4)
    if kind == "cp":
        return CPOuterProduct((2, 3, 2))
    if kind == "relu":
        return ReLUNetwork(rng.standard_normal((5, 3)), 2)
    return ReLUNetwork(rng.standard_normal((4, 2)), 1, hidden=(3, 2))


MAP_KINDS = st.sampled_from(["matrix", "cp", "relu", "deep_relu"])


@SETTINGS
@given(arr=hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=4, max_side=5),
                      elements=any_finite))
def test_text_round_trip_is_bit_exact(arr):
    back = io.parse_tensor(io.format_tensor(arr))
    assert back.shape == arr.shape
    assert back.tobytes() == np.ascontiguousarray(arr).tobytes()


@SETTINGS
@given(arr=hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=4, max_side=5),
                      elements=any_finite))
def test_binary_round_trip(tmp_path_factory, arr):
    p = tmp_path_factory.mktemp("bin") / "x.bin"
    io.write_tensor_binary(p, arr)
    back = io.read_tensor(p)
    assert back.shape == arr.shape and np.array_equal(back, arr)


@SETTINGS
@given(kind=MAP_KINDS, seed=seeds, alpha=alphas)
def test_map_positive_homogeneity(kind, seed, alpha):
    rng = np.random.default_rng(seed)
    m = _map(kind, rng)
    z = [rng.standard_normal(s) for s in m.input_shapes]
    base = m.eval_elemental(z)
    scaled = m.eval_elemental([alpha * x for x in z])
    assert np.allclose(scaled, alpha ** m.degree * base, rtol=1e-10, atol=1e-12 * alpha ** m.degree)


@SETTINGS
@given(kind=MAP_KINDS, seed=seeds, r1=st.integers(1, 4), r2=st.integers(1, 4))
def test_concatenation_adds_outputs_and_regularizers(kind, seed, r1, r2):
    rng = np.random.default_rng(seed)
    m = _map(kind, rng)
    reg = NormProduct(["l2"] * m.K)
    A = FactorSet.random(m.input_shapes, r1, rng)
    B = FactorSet.random(m.input_shapes, r2, rng)
    C = A.concat(B)
    assert np.allclose(m.eval_full(C), m.eval_full(A) + m.eval_full(B), rtol=1e-10, atol=1e-13)
    assert np.isclose(reg.total(C), reg.total(A) + reg.total(B), rtol=1e-10)


@SETTINGS
@given(seed=seeds, alpha=alphas,
       reg=st.sampled_from([NormProduct(["l1", "l2"]), NormProduct(["linf", "l2"]),
                            PowerSum(["l2", "l2"]), PowerSum(["l1", "l2"]),
                            NormProduct(["l2", "l2"], powers=[2, 1])]))
def test_regularizer_positive_homogeneity(seed, alpha, reg):
    rng = np.random.default_rng(seed)
    z = [rng.standard_normal(3), rng.standard_normal(4)]
    assert np.isclose(reg.eval_g([alpha * x for x in z]), alpha ** reg.degree * reg.eval_g(z),
                      rtol=1e-10)


def _block_prox_objective(reg, factors, k, Y, X, t):
    cur = list(factors)
    cur[k] = Y
    return 0.5 * float(np.sum((Y - X) ** 2)) + t * reg.total(cur)


@SETTINGS
@given(seed=seeds, t=st.floats(0.01, 5.0), k=st.integers(0, 1),
       reg=st.sampled_from([NormProduct(["l1", "l2"]), NormProduct(["l2", "l2"]),
                            PowerSum(["l2", "l2"]), PowerSum(["l1", "linf"], power=2),
                            NormProduct(["l2", "l2"], [NonNegOrthant(), None])]))
def test_block_prox_beats_perturbations(seed, t, k, reg):
    rng = np.random.default_rng(seed)
    factors = [rng.standard_normal((3, 2)), rng.standard_normal((4, 2))]
    X = rng.standard_normal(factors[k].shape)
    P = reg.prox_block(factors, k, X, t)
    best = _block_prox_objective(reg, factors, k, P, X, t)
    cone = reg.cones[k]
    for _ in range(20):
        Yp = P + 1e-3 * rng.standard_normal(P.shape)
        if cone is not None:
            Yp = cone.project(Yp).reshape(P.shape)
        assert best <= _block_prox_objective(reg, factors, k, Yp, X, t) + 1e-12


CONES = st.sampled_from([NonNegOrthant(), SupportBound(2),
                         LinearEquality(np.array([[1.0, -1.0, 0.5, 0.0]])),
                         LinearInequality(np.array([[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, -1.0, 0.0]]))])


@SETTINGS
@given(cone=CONES, seed=seeds, alpha=alphas)
def test_cone_projection_commutes_with_scaling(cone, seed, alpha):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((4, 3))
    P = cone.project(X)
    assert np.all(cone.contains(P))
    assert np.all(cone.contains(alpha * P))
    assert np.allclose(cone.project(alpha * X), alpha * P, rtol=1e-9, atol=1e-11)


@SETTINGS
@given(seed=seeds, kind=st.sampled_from(["matrix", "cp", "relu"]))
def test_polar_value_is_attained_by_its_maximizer(seed, kind):
    rng = np.random.default_rng(seed)
    m = _map(kind, rng)
    reg = NormProduct(["l2"] * m.K) if kind != "matrix" else NormProduct(["l1", "l2"])
    pair = ElementalPair(m, reg)
    W = rng.standard_normal(m.output_shape)
    pol = polar(pair, W, restarts=5, max_iter=100, seed=seed)
    if pol.value > 0:
        z = pol.maximizer
        assert np.isclose(reg.eval_g(z), 1.0, rtol=1e-9)
        assert np.isclose(inner(W, m.eval_elemental(z)), pol.value, rtol=1e-9)


@SETTINGS
@given(seed=seeds, lam=st.floats(0.01, 3.0))
def test_svt_minimizes_nuclear_objective(seed, lam):
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((4, 3))
    X = svt(Y, lam)
    best = nuclear_objective(Y, lam, X)
    for _ in range(10):
        assert best <= nuclear_objective(Y, lam, X + 1e-4 * rng.standard_normal(X.shape)) + 1e-12
