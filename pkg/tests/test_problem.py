import numpy as np
import pytest

from homopt.maps import CPOuterProduct, MatrixProduct, ReLUNetwork
from homopt.oracle import nuclear_objective
from homopt.problem import (DegreeMismatchError, LogisticLoss, Problem, QTerm, SquaredLoss,
                            theta_identity_gap)
from homopt.regularizers import ElementalPair, NormProduct, PowerSum
from homopt.tensor import FactorSet, ShapeError

from conftest import central_diff, matrix_problem


def test_zero_factors_objective(rng):
    Y = rng.standard_normal((4, 3))
    p = matrix_problem(Y, 0.7)
    assert p.objective(FactorSet.zeros(p.map.input_shapes, 2)) == 0.5 * np.sum(Y**2)


def test_rank_one_exact_fit_objective(rng):
    u = rng.standard_normal(5)
    v = rng.standard_normal(4)
    u, v, sigma, lam = u / np.linalg.norm(u), v / np.linalg.norm(v), 2.5, 0.3
    p = matrix_problem(sigma * np.outer(u, v), lam)
    fs = FactorSet([np.sqrt(sigma) * u[:, None], np.sqrt(sigma) * v[:, None]])
    assert p.objective(fs) == pytest.approx(lam * sigma, rel=1e-12)


def test_objective_at_least_loss(rng):
    p = matrix_problem(rng.standard_normal((4, 3)), 0.5)
    for _ in range(10):
        fs = FactorSet.random(p.map.input_shapes, 3, rng)
        assert p.objective(fs) >= p.smooth(fs)


def test_degree_mismatch_rejected(rng):
    with pytest.raises(DegreeMismatchError):
        matrix_problem(np.ones((2, 2)), 1.0, reg=NormProduct(["l2", None]))


def test_parameter_validation():
    with pytest.raises(ValueError):
        matrix_problem(np.ones((2, 2)), 0.0)
    with pytest.raises(ShapeError):
        Problem(ElementalPair(MatrixProduct(2, 3), NormProduct(["l2", "l2"])),
                SquaredLoss(np.zeros((3, 2))), 1.0)
    with pytest.raises(ValueError):
        LogisticLoss(np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        QTerm("huber", 1.0)


def _problems(rng):
    V = rng.standard_normal((5, 2))
    Ylab = np.sign(rng.standard_normal((5, 1)))
    return [
        matrix_problem(rng.standard_normal((4, 3)), 0.5),
        Problem(ElementalPair(MatrixProduct(4, 3), NormProduct(["l2", "l2"])),
                SquaredLoss(rng.standard_normal((4, 3))), 0.5, QTerm("l1", 0.2)),
        Problem(ElementalPair(CPOuterProduct((2, 3, 2)), PowerSum(["l2"] * 3)),
                SquaredLoss(rng.standard_normal((2, 3, 2))), 0.3),
        Problem(ElementalPair(ReLUNetwork(V, 1), NormProduct(["l2", "l2"])),
                LogisticLoss(Ylab), 0.1, QTerm("squared_l2", 1.0)),
    ]


def test_grad_matches_finite_differences(rng):
    for p in _problems(rng):
        fs = FactorSet.random(p.map.input_shapes, 2, rng, scale=1.0)
        Q = rng.standard_normal(p.output_shape) if p.h.active else None
        G, gq = p.grad(fs, Q)
        for k in range(p.map.K):
            def f(x, k=k):
                fac = list(fs)
                fac[k] = x
                return p.smooth(fac, Q)
            assert np.max(np.abs(central_diff(f, np.array(fs[k])) - G[k])) <= 1e-5
        if p.h.active:
            assert np.max(np.abs(central_diff(lambda q: p.smooth(fs, q), Q) - gq)) <= 1e-5


def test_grad_zero_at_exact_fit(rng):
    U, V = rng.standard_normal((4, 2)), rng.standard_normal((3, 2))
    p = matrix_problem(U @ V.T, 0.5)
    G, _ = p.grad(FactorSet([U, V]))
    assert max(np.max(np.abs(g)) for g in G) <= 1e-14


def test_grad_independent_of_lambda(rng):
    Y = rng.standard_normal((4, 3))
    fs = FactorSet.random(((4,), (3,)), 2, rng)
    G1, _ = matrix_problem(Y, 0.5).grad(fs)
    G2, _ = matrix_problem(Y, 1.0).grad(fs)
    assert all(np.array_equal(a, b) for a, b in zip(G1, G2))


def test_dual_variable(rng):
    Y = rng.standard_normal((4, 3))
    zeros = FactorSet.zeros(((4,), (3,)), 1)
    assert np.allclose(matrix_problem(Y, 0.5).dual_variable(zeros), Y / 0.5)
    fs = FactorSet.random(((4,), (3,)), 2, rng)
    W1 = matrix_problem(Y, 0.5).dual_variable(fs)
    W2 = matrix_problem(Y, 1.0).dual_variable(fs)
    assert np.allclose(W2, W1 / 2, rtol=1e-15)
    exact = matrix_problem(fs[0] @ fs[1].T, 0.5)
    assert np.max(np.abs(exact.dual_variable(fs))) <= 1e-14


def test_factored_objective_bounds_convex_objective(rng):
    Y = rng.standard_normal((5, 4))
    lam = 0.6
    p = matrix_problem(Y, lam)
    for _ in range(50):
        fs = FactorSet.random(p.map.input_shapes, int(rng.integers(1, 6)), rng, scale=2.0)
        assert p.objective(fs) - nuclear_objective(Y, lam, p.map.eval_full(fs)) >= -1e-9


def test_losses_are_midpoint_convex(rng):
    Y = rng.standard_normal((3, 3))
    for loss in (SquaredLoss(Y), LogisticLoss(np.sign(Y))):
        for _ in range(20):
            a, b = rng.standard_normal((2, 3, 3)) * 3
            assert loss.value((a + b) / 2) <= (loss.value(a) + loss.value(b)) / 2 + 1e-12


def test_logistic_gradient_bounded(rng):
    Y = np.sign(rng.standard_normal((4, 4)))
    g = LogisticLoss(Y).grad(rng.standard_normal((4, 4)) * 5)
    assert np.all(np.abs(g) < 1)
    assert np.all(np.abs(LogisticLoss(Y).grad(np.full((4, 4), 1e3))) <= 1)


def test_qterm_values_and_prox():
    Q = np.array([[1.5, -0.2]])
    assert QTerm("l1", 2.0).value(Q) == pytest.approx(3.4)
    assert QTerm("squared_l2", 2.0).value(Q) == pytest.approx(1.5**2 + 0.04)
    assert np.allclose(QTerm("l1", 1.0).prox(Q, 0.5), [[1.0, 0.0]])
    assert np.allclose(QTerm("squared_l2", 1.0).prox(Q, 1.0), Q / 2)
    assert not QTerm().active and QTerm().value(Q) == 0.0


def test_random_init_has_unit_regularizer(rng):
    for p in _problems(rng):
        fs = p.random_init(3, rng)
        assert p.reg.total(fs) == pytest.approx(1.0, rel=1e-12)
        assert fs.r == 3


def test_theta_identity_gap_zero_for_null_theta(rng):
    p = matrix_problem(rng.standard_normal((3, 2)), 0.5)
    fs = FactorSet.random(p.map.input_shapes, 2, rng)
    dup = fs.concat(fs.take([0]))
    assert theta_identity_gap(p, dup, None, [1.0, 0.0, -1.0]) <= 1e-12
