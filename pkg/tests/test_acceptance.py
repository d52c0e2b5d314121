"""
Acceptance gate: eight criteria, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v`` (lines appear in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""

import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
import yaml
from scipy.integrate import quad
from scipy.linalg import expm

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE_LINES, random_system  # noqa: E402

from hcarma.carma import (EXACT_GAUSSIAN, LEFT_POINT, CarmaSystem, char_functional,  # noqa: E402
                          coarsen_increments, empirical_char_function, semimartingale_check,
                          simulate_ensemble, simulate_path, simulate_paths, stationary_covariance,
                          wave_exact_modewise)
from hcarma.cli import main as cli_main  # noqa: E402
from hcarma.discretize import (far_coefficients, far_innovations, far_residual,  # noqa: E402
                               far_simulate, innovation_covariance)
from hcarma.noise import CovarianceSpec, JumpSpec, LevyModel, sample_increments  # noqa: E402
from hcarma.operators import (BOperators, assemble_companion, derive_B,  # noqa: E402
                              scalar_companion, wave_system)
from hcarma.semigroup import (MATRIX_EXPONENTIAL, RECURSIVE_SERIES, WAVE_CLOSED_FORM,  # noqa: E402
                              SemigroupEvaluator, SeriesTruncationWarning)
from hcarma.spaces import LinearMap, SpaceSpec  # noqa: E402


def report(n, ok, detail, started):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}  ({time.perf_counter() - started:.1f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


# -- 1 -------------------------------------------------------------------------

def criterion_1():
    t0 = time.perf_counter()
    wave = wave_system(8)
    ex = SemigroupEvaluator(wave, MATRIX_EXPONENTIAL)
    closed = SemigroupEvaluator(wave, WAVE_CLOSED_FORM)
    closed_err = max(rel(closed(t), ex(t)) for t in (0.1, 0.7, 2.0))

    times = (0.1, 0.2, 0.3, 0.4, 0.5)
    series_wave = SemigroupEvaluator(wave, RECURSIVE_SERIES, series_terms=25, quadrature_nodes=64)
    rnd = random_system(3, 3, np.random.default_rng(2024))
    series_rnd = SemigroupEvaluator(rnd, RECURSIVE_SERIES, series_terms=25, quadrature_nodes=64)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SeriesTruncationWarning)
        wave_err = max(rel(series_wave(t), ex(t)) for t in times)
        rnd_err = max(rel(series_rnd(t), expm(t * rnd.assembled)) for t in times)
    ok = closed_err <= 1e-10 and wave_err <= 1e-6 and rnd_err <= 1e-6
    detail = (f"closed-vs-expm {closed_err:.1e} (tol 1e-10); series wave N=8 {wave_err:.1e}, "
              f"series random p=3 {rnd_err:.1e} (tol 1e-6)")
    return report(1, ok, detail, t0)


# -- 2 -------------------------------------------------------------------------

def criterion_2():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    n = 4
    H = SpaceSpec("H1", n)
    # integer entries make every product and sum exact in floating point
    B = BOperators(tuple(LinearMap(H, H, rng.integers(-9, 10, (n, n)).astype(float)) for _ in range(3)))
    m = far_coefficients(B, 1.0)
    I = np.eye(n)
    b1, b2, b3 = B[1].matrix, B[2].matrix, B[3].matrix
    p3_ok = (np.array_equal(m[1].matrix, 3 * I + b1)
             and np.array_equal(m[2].matrix, b2 - 2 * b1 - 3 * I)
             and np.array_equal(m[3].matrix, I + b1 - b2 + b3)
             and m.noise_scale == 1.0)

    delta = 0.01
    wB = derive_B(wave_system(8))
    wm = far_coefficients(wB, delta)
    wave_ok = (np.array_equal(wm[1].matrix, 2 * np.eye(8))
               and np.array_equal(wm[2].matrix, -(np.eye(8) - delta**2 * wB[2].matrix))
               and wm.noise_scale == delta**2)

    worst = 0.0
    for p in (1, 2, 3, 4):
        for seed in range(5):
            r = np.random.default_rng(100 * p + seed)
            comp = random_system(p, 3, r, invertible_I=True)
            Bp = derive_B(comp)
            noise = LevyModel.wiener_only(comp.spaces.spaces[-1], [1.0, 0.5, 0.25])
            d = 0.1
            eps = far_innovations(comp, sample_increments(noise, d, r, size=40), d)
            xs = far_simulate(far_coefficients(Bp, d), r.standard_normal((p, 3)) * d**p, eps, 40)
            res = far_residual(Bp, xs, d)
            worst = max(worst, float(np.max(np.abs(res - eps)) / np.max(np.abs(eps))))
    ok = p3_ok and wave_ok and worst <= 1e-10
    detail = f"p=3 symbolic {'exact' if p3_ok else 'MISMATCH'}; wave FAR(2) {'exact' if wave_ok else 'MISMATCH'}; substitution {worst:.1e} (tol 1e-10)"
    return report(2, ok, detail, t0)


# -- 3 -------------------------------------------------------------------------

def criterion_3():
    t0 = time.perf_counter()
    a, s2 = 1.3, 0.7
    comp1 = scalar_companion([a])
    ou = CarmaSystem.build(comp1, LevyModel.wiener_only(comp1.spaces.spaces[0], [s2]))
    p1_err = abs(stationary_covariance(ou).matrix[0, 0] - s2 / (2 * a))

    alphas, s2b = (3.0, 2.0), 1.3
    comp2 = scalar_companion(list(alphas))
    bvec = np.array([0.5, 1.0])
    car2 = CarmaSystem.build(comp2, LevyModel.wiener_only(comp2.spaces.spaces[-1], [s2b]), bvec)
    C = np.array([[0.0, 1.0], [-alphas[1], -alphas[0]]])
    lam, V = np.linalg.eig(C)
    Vi = np.linalg.inv(V)

    def integrand(s):
        return (bvec @ (V @ np.diag(np.exp(lam * s)) @ Vi).real @ np.array([0.0, 1.0])) ** 2

    oracle = s2b * quad(integrand, 0, np.inf, epsabs=1e-15, epsrel=1e-13, limit=400)[0]
    p2_err = abs(stationary_covariance(car2).matrix[0, 0] / oracle - 1)

    T = 10 / a
    paths = simulate_paths(ou, T / 100, 100, base_seed=3000, n_paths=10_000, scheme=EXACT_GAUSSIAN)
    final = np.array([p.observations[-1, 0] for p in paths])
    expected = s2 * (1 - math.exp(-2 * a * T)) / (2 * a)
    mc_err = abs(final.var(ddof=1) / expected - 1)
    ok = p1_err <= 1e-8 and p2_err <= 1e-6 and mc_err <= 0.05
    detail = f"p=1 abs err {p1_err:.1e} (tol 1e-8); p=2 rel err {p2_err:.1e} (tol 1e-6); MC variance rel err {mc_err:.3f} (tol 0.05)"
    return report(3, ok, detail, t0)


# -- 4 -------------------------------------------------------------------------

def _car2_r2(noise_kind):
    H = [SpaceSpec("H1", 2, [1.0, 2.0]), SpaceSpec("H2", 2)]
    comp = assemble_companion(H, [[[-2.0, 0.3], [0.0, -2.5]], -1.5 * np.eye(2)], [np.eye(2)])
    if noise_kind == "wiener":
        noise = LevyModel.wiener_only(H[1], [0.6, 0.4])
    else:
        noise = LevyModel(H[1], None, JumpSpec(5.0, "two_point", [0.3, 0.15]))
    return CarmaSystem.build(comp, noise, Z0=[0.4, -0.3, 0.2, 0.5])


def criterion_4():
    t0 = time.perf_counter()
    probes = np.array([[0.5, 0.0], [0.0, 0.8], [1.0, -1.0], [-0.7, 0.4], [1.5, 0.9]])
    t = 1.0
    worst = 0.0
    parts = []
    for kind, scheme, dt, seed in (("wiener", EXACT_GAUSSIAN, 0.05, 41), ("jumps", LEFT_POINT, 1e-3, 42)):
        sys_ = _car2_r2(kind)
        X = simulate_ensemble(sys_, dt, int(round(t / dt)), 100_000, seed, scheme)["final"] @ sys_.L.T
        z_max = 0.0
        for x in probes:
            emp, (se_re, se_im) = empirical_char_function(X, x, sys_.U.weights)
            phi = char_functional(sys_, 0.0, t, x)
            z_max = max(z_max, abs(emp.real - phi.real) / se_re, abs(emp.imag - phi.imag) / se_im)
        parts.append(f"{kind} max |z| {z_max:.2f}")
        worst = max(worst, z_max)
    ok = worst <= 3.0
    return report(4, ok, "; ".join(parts) + " (tol 3 SE)", t0)


# -- 5 -------------------------------------------------------------------------

def _wave_sys(N=8):
    comp = wave_system(N)
    q = 1.0 / np.arange(1, N + 1) ** 2
    return CarmaSystem.build(comp, LevyModel.wiener_only(comp.spaces.spaces[1], q))


def criterion_5():
    t0 = time.perf_counter()
    sys_ = _wave_sys()
    fine_dt, T = 1e-3, 1.0
    fine = sample_increments(sys_.noise, fine_dt, np.random.default_rng(55), size=int(round(T / fine_dt)))
    devs = []
    for factor in (4, 2, 1):
        inc = coarsen_increments(fine, factor)
        dt = fine_dt * factor
        path = simulate_path(sys_, dt, inc.shape[0], increments=inc)
        devs.append(semimartingale_check(sys_, path).max_deviation)
    ratios = [devs[0] / devs[1], devs[1] / devs[2]]

    dt, M = 1e-4, 10_000
    tt = dt * np.arange(M + 1)
    n = np.arange(1, 9)
    smooth = np.sin(np.outer(tt, 1 + 0.3 * n)) / n
    rep = semimartingale_check(sys_, simulate_path(sys_, dt, M, increments=np.diff(smooth, axis=0)))
    ok = all(1.7 <= r <= 2.3 for r in ratios) and rep.derivative_rel_error <= 1e-3
    detail = (f"deviations {', '.join(f'{d:.2e}' for d in devs)}; ratios {ratios[0]:.2f}, {ratios[1]:.2f} "
              f"(need [1.7, 2.3]); derivative rel err {rep.derivative_rel_error:.1e} (tol 1e-3)")
    return report(5, ok, detail, t0)


# -- 6 -------------------------------------------------------------------------

def criterion_6():
    t0 = time.perf_counter()
    sys_ = _wave_sys()
    dt, M = 1e-3, 1000
    inc = sample_increments(sys_.noise, dt, np.random.default_rng(66), size=M)
    X = simulate_path(sys_, dt, M, increments=inc).observations
    dev = float(np.max(np.abs(wave_exact_modewise(inc, dt) - X)))
    return report(6, dev <= 1e-6, f"max coefficient deviation {dev:.1e} (tol 1e-6)", t0)


# -- 7 -------------------------------------------------------------------------

def criterion_7():
    t0 = time.perf_counter()
    sys_ = _car2_r2("wiener")
    delta, n = 0.1, 10_000
    path = simulate_path(sys_, delta, n, np.random.default_rng(77), scheme=EXACT_GAUSSIAN)
    e = path.innovations
    Q = innovation_covariance(sys_, delta)
    C = Q.matrix / sys_.H.weights[None, :]
    emp = e.T @ e / n  # mean is known to be zero
    se = np.sqrt((C * C + np.outer(np.diag(C), np.diag(C))) / n)
    z_cov = float(np.max(np.abs(emp - C) / se))

    lag = e[:-1].T @ e[1:] / (n - 1)
    se_lag = np.sqrt(np.outer(np.diag(C), np.diag(C)) / (n - 1))
    z_lag = float(np.max(np.abs(lag) / se_lag))
    ok = z_cov <= 3 and z_lag <= 3
    return report(7, ok, f"covariance max |z| {z_cov:.2f}; lag-1 cross-covariance max |z| {z_lag:.2f} (tol 3 SE)", t0)


# -- 8 -------------------------------------------------------------------------

def criterion_8(tmp: Path):
    t0 = time.perf_counter()
    scenario = Path(__file__).parent.parent / "scenarios" / "wave_n8.yaml"
    codes = []
    for sub, threads in (("first", "1"), ("second", "1"), ("threaded", "4")):
        codes.append(cli_main(["simulate", "--scenario", str(scenario), "--out", str(tmp / sub),
                               "--seed", "424242", "--threads", threads]))
    blobs = [(tmp / sub / "paths.csv").read_bytes() for sub in ("first", "second", "threaded")]
    same = blobs[0] == blobs[1] == blobs[2]
    ok = codes == [0, 0, 0] and same
    detail = f"exit codes {codes}; {len(blobs[0])} bytes, 1/1/4 threads {'identical' if same else 'DIFFERENT'}"
    return report(8, ok, detail, t0)


# -- pytest entry points -------------------------------------------------------

def test_criterion_1_semigroup_agreement():
    assert criterion_1()


def test_criterion_2_far_identity():
    assert criterion_2()


def test_criterion_3_scalar_reductions():
    assert criterion_3()


def test_criterion_4_characteristic_functional():
    assert criterion_4()


def test_criterion_5_semimartingale_order():
    assert criterion_5()


def test_criterion_6_modewise_representation():
    assert criterion_6()


def test_criterion_7_innovation_law():
    assert criterion_7()


def test_criterion_8_determinism(tmp_path):
    assert criterion_8(tmp_path)


if __name__ == "__main__":
    import tempfile

    results = [criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5(),
               criterion_6(), criterion_7()]
    with tempfile.TemporaryDirectory() as d:
        results.append(criterion_8(Path(d)))
    sys.exit(0 if all(results) else 1)
