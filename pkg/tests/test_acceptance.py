"""Acceptance suite: one PASS/FAIL line per criterion, at fixed tolerances."""

import time

import numpy as np
import pytest

from homopt.certificate import CERTIFIED, HEURISTIC_CAVEAT, LIKELY, polar
from homopt.descent import DescentConfig
from homopt.experiments import degree_mismatch, omega_equivalence
from homopt.maps import CPOuterProduct, MatrixProduct, ReLUNetwork
from homopt.meta import MetaConfig, r_bound, run_meta
from homopt.oracle import brute_polar, solve_convex_nuclear
from homopt.problem import LogisticLoss, Problem, SquaredLoss, theta_identity_gap
from homopt.regularizers import (ConicNormProduct, ElementalPair, NonNegOrthant, NormProduct,
                                 PowerSum, SupportBound)
from homopt.tensor import FactorSet, inner

from conftest import central_diff, matrix_problem, record


def _monotone(events, rtol=1e-8):
    f = [e.objective for e in events]
    return all(b <= a + rtol * max(abs(a), 1.0) for a, b in zip(f, f[1:]))


# -- shared runs --------------------------------------------------------------

@pytest.fixture(scope="module")
def oracle_runs():
    rng = np.random.default_rng(2024)
    lam_fracs, r_inits = (0.2, 0.4, 0.8), (1, 2, 5)
    runs = []
    t0 = time.perf_counter()
    for j in range(25):
        m, n = int(rng.integers(2, 21)), int(rng.integers(2, 16))
        if j == 0:
            m, n = 20, 15
        Y = rng.standard_normal((m, n))
        lam = lam_fracs[j % 3] * np.linalg.norm(Y, 2)
        r_init = r_inits[(j // 3) % 3]
        prob = matrix_problem(Y, lam, r_init=r_init)
        res = run_meta(prob, cfg=MetaConfig(seed=j))
        runs.append((prob, res, solve_convex_nuclear(Y, lam).objective))
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def collapse_runs():
    runs = []
    for j in range(6):
        rng = np.random.default_rng(500 + j)
        Y = rng.standard_normal((4, 3))
        prob = matrix_problem(Y, 0.3 * np.linalg.norm(Y, 2), r_init=13)
        runs.append((prob, run_meta(prob, cfg=MetaConfig(seed=j))))
    return runs


def _relu_toy():
    rng = np.random.default_rng(7)
    X = rng.uniform(-1, 1, (40, 2))
    y = np.sign(X[:, 0] + 0.5 * X[:, 1] + 0.1)
    V = np.hstack([X, np.ones((40, 1))])
    pair = ElementalPair(ReLUNetwork(V, 1), NormProduct(["l2", "l2"]))
    return Problem(pair, LogisticLoss(y[:, None]), 0.1, r_init=2)


@pytest.fixture(scope="module")
def relu_run():
    prob = _relu_toy()
    cfg = MetaConfig(max_outer=10, descent=DescentConfig(max_iters=2000))
    return prob, run_meta(prob, cfg=cfg)


# -- criteria -----------------------------------------------------------------

def test_ac01_oracle_equivalence(oracle_runs):
    runs, elapsed = oracle_runs
    errs = [abs(res.objective - f) / abs(f) for _, res, f in runs]
    certified = sum(res.certificate.status == CERTIFIED for _, res, _ in runs)
    ok = max(errs) <= 1e-6 and certified == len(runs) and elapsed < 10.0
    assert record("AC-1", ok, f"{len(runs)} problems, max rel err {max(errs):.2e}, "
                              f"{certified}/{len(runs)} CertifiedGlobal, {elapsed:.2f} s")


def test_ac02_zero_slice_at_certified_exit(oracle_runs):
    runs, _ = oracle_runs
    bad = 0
    for _, res, _ in runs:
        c = res.certificate
        if c.status != CERTIFIED:
            continue
        has_zero = len(res.factors.zero_slices()) > 0
        bound = c.polar_value <= 1 + 1e-6 and c.alignment_residual <= 1e-6
        bad += not (has_zero or bound)
    assert record("AC-2", bad == 0, f"{bad} certified exits without a zero slice or polar bound")


def test_ac03_non_increasing_collapse_path(collapse_runs):
    mono = all(_monotone(res.events) for _, res in collapse_runs)
    collapses = [sum(e.kind == "collapsed" for e in res.events) for _, res in collapse_runs]
    appends = sum(e.kind == "appended" for _, res in collapse_runs for e in res.events)
    ok = mono and min(collapses) >= 1 and appends == 0
    assert record("AC-3", ok, f"{len(collapse_runs)} runs at r=13, monotone={mono}, "
                              f"collapses per run {collapses}, appends {appends}")


def test_ac04_size_bound(oracle_runs, collapse_runs, relu_run):
    pairs = [(p, r) for p, r, _ in oracle_runs[0]] + list(collapse_runs) + [relu_run]
    worst = max(res.r_final - r_bound(p.r_init, p.map.card) for p, res in pairs)
    assert record("AC-4", worst <= 0, f"{len(pairs)} runs, max r_final - bound = {worst}")


def _homogeneity_cases(rng):
    V = rng.standard_normal((4, 3))
    maps = [MatrixProduct(3, 4), CPOuterProduct((2, 3, 2)), ReLUNetwork(V, 2),
            ReLUNetwork(V, 1, hidden=(2, 3))]
    regs2 = [NormProduct(["l1", "l2"]), PowerSum(["l2", "linf"]),
             ConicNormProduct(["l2", "l2"], [NonNegOrthant(), SupportBound(2)])]
    return maps, regs2


def test_ac05_homogeneity_and_concatenation():
    rng = np.random.default_rng(5)
    maps, regs2 = _homogeneity_cases(rng)
    checks = fails = 0
    worst = 0.0
    while checks < 1000:
        m = maps[checks % len(maps)]
        a = float(rng.uniform(0.05, 10.0))
        z = [rng.standard_normal(s) for s in m.input_shapes]
        lhs = m.eval_elemental([a * x for x in z])
        rhs = a ** m.degree * m.eval_elemental(z)
        e1 = np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-300)
        reg = regs2[checks % 3] if m.K == 2 else NormProduct(["l2"] * m.K)
        zr = reg.project_cones([x[..., None] for x in z])
        g0 = reg.total(zr)
        e2 = abs(reg.total([a * x for x in zr]) - a ** reg.degree * g0) / max(g0, 1e-300)
        A = FactorSet.random(m.input_shapes, int(rng.integers(1, 4)), rng)
        B = FactorSet.random(m.input_shapes, int(rng.integers(1, 4)), rng)
        full = m.eval_full(A.concat(B))
        e3 = np.linalg.norm(full - m.eval_full(A) - m.eval_full(B)) / max(np.linalg.norm(full), 1e-300)
        worst = max(worst, e1, e2, e3)
        fails += max(e1, e2, e3) > 1e-10
        checks += 1
    assert record("AC-5", fails == 0, f"{checks} randomized checks, {fails} failures, "
                                      f"worst rel err {worst:.1e}")


def _smooth_point(m, rng, margin=0.1):
    for _ in range(10000):
        fs = FactorSet.random(m.input_shapes, 2, rng, scale=1.0)
        if m.kind != "relu":
            return fs
        _, pre = m._forward(m._mats(list(fs)))
        if all(np.min(np.abs(p)) >= margin for p in pre):
            return fs
    raise RuntimeError("no smooth point found")


def test_ac06_gradients_match_finite_differences():
    rng = np.random.default_rng(6)
    V = rng.standard_normal((3, 2))
    maps = {"matrix": MatrixProduct(3, 2), "cp": CPOuterProduct((2, 2, 2)),
            "relu": ReLUNetwork(V, 2), "deep_relu": ReLUNetwork(V, 1, hidden=(2,))}
    worst = {}
    for name, m in maps.items():
        err = 0.0
        reg = NormProduct(["l2"] * m.K)
        for j in range(200):
            fs = _smooth_point(m, rng)
            W = rng.standard_normal(m.output_shape)
            Y = rng.standard_normal(m.output_shape)
            loss = SquaredLoss(Y) if j % 2 else LogisticLoss(np.sign(Y))
            prob = Problem(ElementalPair(m, reg), loss, 1.0)
            G = m.adjoint_grad(fs, W)
            Gf, _ = prob.grad(fs)
            for k in range(m.K):
                def lin(x, k=k):
                    fac = list(fs)
                    fac[k] = x
                    return inner(W, m.eval_full(fac))

                def smooth(x, k=k):
                    fac = list(fs)
                    fac[k] = x
                    return prob.smooth(FactorSet(fac))
                x0 = np.array(fs[k])
                err = max(err, np.max(np.abs(central_diff(lin, x0) - G[k])),
                          np.max(np.abs(central_diff(smooth, x0) - Gf[k])))
        worst[name] = err
    ok = max(worst.values()) <= 1e-5
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert record("AC-6", ok, f"200 points per map, max abs err: {detail}")


def _tiny_pairs(rng):
    V = rng.standard_normal((3, 2))
    return [
        ElementalPair(MatrixProduct(2, 2), NormProduct(["l1", "l2"])),
        ElementalPair(MatrixProduct(3, 2), NormProduct(["linf", "l1"])),
        ElementalPair(MatrixProduct(2, 3), NormProduct(["l2", "l2"], [NonNegOrthant(), None])),
        ElementalPair(CPOuterProduct((2, 2, 2)), NormProduct(["l2", "l2", "l2"])),
        ElementalPair(ReLUNetwork(V, 1), NormProduct(["l2", "l2"])),
    ]


def test_ac07_polar_soundness():
    rng = np.random.default_rng(7)
    pairs = _tiny_pairs(rng)
    gaps = []
    for j in range(50):
        pair = pairs[j % len(pairs)]
        W = rng.standard_normal(pair.map.output_shape)
        h = polar(pair, W, seed=j).value
        b = brute_polar(pair, W, resolution=40, refine=True)
        gaps.append(h - b)
    sound = max(gaps) <= 1e-6
    mono_ok, grid_ok = True, True
    for shape in ((2, 2), (3, 2)):
        pair = ElementalPair(MatrixProduct(*shape), NormProduct(["l2", "l2"]))
        for _ in range(3):
            W = rng.standard_normal(shape)
            exact = polar(pair, W).value
            res = (12, 24, 48, 96)
            vals = [brute_polar(pair, W, resolution=n) for n in res]
            mono_ok &= all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
            grid_ok &= all(0 <= exact - v <= exact * (1 - np.cos(4 * np.pi / n)) + 1e-12
                           for v, n in zip(vals, res))
    ok = sound and mono_ok and grid_ok
    assert record("AC-7", ok, f"50 instances, max heuristic - brute = {max(gaps):.1e}; "
                              f"spectral within grid error {grid_ok}, monotone {mono_ok}")


def test_ac08_theta_identity(oracle_runs, collapse_runs):
    rng = np.random.default_rng(8)
    points = 0
    worst = 0.0
    pairs = [(p, r) for p, r, _ in oracle_runs[0]] + list(collapse_runs)
    for prob, res in pairs:
        for d in res.descents:
            if d.reason != "stationary":
                continue
            points += 1
            for _ in range(20):
                theta = rng.standard_normal(d.factors.r)
                gap = theta_identity_gap(prob, d.factors, d.Q, theta)
                worst = max(worst, gap / np.linalg.norm(theta))
    ok = points > 0 and worst <= 1e-6
    assert record("AC-8", ok, f"{points} stationary points x 20 theta, "
                              f"max gap/|theta| = {worst:.1e}")


def test_ac09_degree_mismatch():
    rng = np.random.default_rng(9)
    results = []
    for j in range(5):
        Y = rng.standard_normal((4, 3))
        lam = 0.5 * np.linalg.norm(Y, 2)
        s = degree_mismatch(Y, lam, seed=j, n_directions=100).summary
        results.append(s["mismatched_all_increase"] and s["matched_descent_found"])
    ok = all(results)
    assert record("AC-9", ok, f"{sum(results)}/5 instances: f(eps X) > f(0) on all 100 "
                              f"directions and eps <= 1e-2, matched descent found")


def test_ac10_omega_equivalence():
    diffs = []
    for j in range(10):
        rng = np.random.default_rng(1000 + j)
        Y = rng.standard_normal((6, 5))
        lam = 0.4 * np.linalg.norm(Y, 2)
        diffs.append(omega_equivalence(Y, lam, r_init=2, cfg=MetaConfig(seed=j))
                     .summary["relative_difference"])
    ok = max(diffs) <= 1e-4
    assert record("AC-10", ok, f"10 instances, max relative difference {max(diffs):.1e}")


def test_ac11_relu_smoke(relu_run):
    _, res = relu_run
    kinds = [e.kind for e in res.events]
    improved = False
    if "escaped" in kinds:
        i = kinds.index("escaped")
        improved = res.events[-1].objective < res.events[i - 1].objective
    status_ok = res.certificate.status == LIKELY or improved
    mono = _monotone(res.events)
    caveat = HEURISTIC_CAVEAT in res.certificate.caveat and not res.certificate.exact
    ok = status_ok and mono and caveat
    assert record("AC-11", ok, f"status {res.certificate.status}, escapes {kinds.count('escaped')}, "
                               f"monotone {mono}, heuristic caveat {caveat}, "
                               f"objective {res.events[0].objective:.4g} -> {res.objective:.4g}")
