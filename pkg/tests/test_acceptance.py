"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Criteria 6-8 run desk-scale Monte Carlo studies (a few minutes on one core;
set SGCM_THREADS to use more).  Their seeds are fixed and were not used
while choosing defaults.
"""

import math
import time

import numpy as np
import pytest

from sgcm import spaces
from sgcm.cli import main
from sgcm.kernels import exponential_kernel_matrix, median_heuristic, min_eigenvalue
from sgcm.pipeline import TestConfig
from sgcm.simulate import DgpSpec, monte_carlo_study
from sgcm.spectral import eigensystem_from_gram
from sgcm.statistic import (
    FOURTH_MOMENT,
    boot_conditional_moments,
    bootstrap_replicates,
    core_matrix,
    naive_statistic_oracle,
    replicates_from_multipliers,
    sample_multipliers,
    sgcm_statistic,
)


def _sphere(rng, n, d=3):
    u = rng.normal(size=(n, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _kz(rng, n):
    if n == 1:
        return np.ones((1, 1))
    D = spaces.euclidean_pairwise(rng.normal(size=(n, 2)))
    return exponential_kernel_matrix(D, median_heuristic(D))


def _instance(rng, n1_max=20, pq_max=5):
    n1 = int(rng.integers(1, n1_max + 1))
    P, Q = rng.integers(1, pq_max + 1, size=2)
    return rng.normal(size=(n1, P)), rng.normal(size=(n1, Q)), _kz(rng, n1)


def _rate(spec, config, reps, seed):
    return monte_carlo_study(spec, config, reps, seed=seed).rows[0].rejection_rate


# ----------------------------------------------------------------------------

def test_criterion_1_oracle_equivalence(report_criterion):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        rX, rY, Kz = _instance(rng)
        fast = sgcm_statistic(core_matrix(rX, rY, Kz))
        slow = naive_statistic_oracle(rX, rY, Kz)
        worst = max(worst, abs(fast - slow) / max(abs(slow), 1e-300))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 10
    report_criterion(1, "statistic equals quadruple-sum oracle", ok,
                     f"max rel err {worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_criterion_2_eigen_correctness(report_criterion):
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    recon = ortho = trace = 0.0
    for _ in range(100):
        n2 = int(rng.integers(2, 31))
        rank = int(rng.integers(1, n2 + 1))
        F = rng.normal(size=(n2, rank))
        G = F @ F.T if rng.random() < 0.5 else exponential_kernel_matrix(
            spaces.euclidean_pairwise(rng.normal(size=(n2, 2))), 1.0)
        es = eigensystem_from_gram(G)
        err = np.abs(G - (es.vectors * es.kappas) @ es.vectors.T).max() / np.abs(G).max()
        recon = max(recon, err)
        k = es.eigenvalues.size
        ortho = max(ortho, np.abs(es.coefficients.T @ G @ es.coefficients - np.eye(k)).max())
        trace = max(trace, abs(es.all_eigenvalues.sum() - np.trace(G) / n2) / (np.trace(G) / n2))
    elapsed = time.perf_counter() - t0
    ok = recon <= 1e-8 and ortho <= 1e-8 and trace <= 1e-8 and elapsed < 10
    report_criterion(2, "eigensystem reconstruction, orthonormality, trace", ok,
                     f"recon {recon:.1e}, ortho {ortho:.1e}, trace {trace:.1e}, {elapsed:.1f}s")
    assert ok


def test_criterion_3_nonnegativity_and_invariances(report_criterion):
    rng = np.random.default_rng(303)
    lowest = min(sgcm_statistic(core_matrix(*_instance(rng, 40))) for _ in range(1000))

    scale_exact = sign_exact = perm_exact = True
    scale_rel = 0.0
    for _ in range(200):
        rX, rY, Kz = _instance(rng, 30)
        A = core_matrix(rX, rY, Kz)
        T = sgcm_statistic(A)
        for c in (0.25, 2.0, 1024.0):
            scale_exact &= sgcm_statistic(core_matrix(rX, rY, c * Kz)) == c * T
        c = float(rng.uniform(0.01, 100))
        if T > 0:
            scale_rel = max(scale_rel, abs(sgcm_statistic(core_matrix(rX, rY, c * Kz)) - c * T) / (c * T))
        p = int(rng.integers(rX.shape[1]))
        flipped = rX.copy()
        flipped[:, p] *= -1
        A2 = core_matrix(flipped, rY, Kz)
        sign_exact &= sgcm_statistic(A2) == T
        sign_exact &= np.array_equal(bootstrap_replicates(A, 20, "gaussian", 1),
                                     bootstrap_replicates(A2, 20, "gaussian", 1))
        perm = rng.permutation(rX.shape[0])
        perm_exact &= sgcm_statistic(core_matrix(rX[perm], rY[perm], Kz[np.ix_(perm, perm)])) == T
    ok = lowest >= -1e-8 and scale_exact and scale_rel <= 1e-13 and sign_exact and perm_exact
    report_criterion(3, "nonnegativity, Kz scaling, sign and permutation invariance", ok,
                     f"min stat {lowest:.2e}; binary scaling exact={scale_exact}, "
                     f"general scaling rel {scale_rel:.1e}; sign exact={sign_exact}; perm exact={perm_exact}")
    assert ok


def test_criterion_4_multiplier_laws(report_criterion):
    rng = np.random.default_rng(404)
    t0 = time.perf_counter()
    w = sample_multipliers("mammen", 10**6, rng)
    moments_ok = True
    for k, target in zip(range(1, 5), (0.0, 1.0, 1.0, 2.0)):
        vals = w ** k
        moments_ok &= abs(vals.mean() - target) <= 4 * vals.std() / math.sqrt(w.size)

    mc_ok = True
    for _ in range(5):
        A = core_matrix(rng.normal(size=(5, 2)), rng.normal(size=(5, 2)), _kz(rng, 5))
        for law in ("gaussian", "rademacher", "mammen"):
            W = sample_multipliers(law, 5 * 10**6, rng).reshape(10**6, 5)
            sq = replicates_from_multipliers(A, W) ** 2
            second = boot_conditional_moments(A, FOURTH_MOMENT[law])[1]
            mc_ok &= abs(sq.mean() - second) <= 4 * sq.std() / math.sqrt(sq.size)

    mono_ok = True
    for _ in range(1000):
        A = core_matrix(*_instance(rng))
        s = [boot_conditional_moments(A, m)[1] for m in (1.0, 2.0, 3.0)]
        if np.sum(np.diag(A) ** 2) > 0:
            mono_ok &= s[0] <= s[1] <= s[2]
    elapsed = time.perf_counter() - t0
    ok = moments_ok and mc_ok and mono_ok and elapsed < 60
    report_criterion(4, "Mammen moments, conditional second moment, monotone in mu4", ok,
                     f"moments={moments_ok}, Monte Carlo={mc_ok}, monotone={mono_ok}, {elapsed:.1f}s")
    assert ok


def test_criterion_5_negative_type_battery(report_criterion):
    rng = np.random.default_rng(505)
    t0 = time.perf_counter()
    grid = np.linspace(-6, 6, 300)
    times = np.linspace(0, 1, 20)
    worst, worst_eig = {}, {}
    for _ in range(20):
        dens = np.exp(-0.5 * ((grid[None] - rng.normal(size=(15, 1))) / rng.uniform(0.4, 2, (15, 1))) ** 2)
        dens /= (dens @ spaces.trapezoid_weights(grid))[:, None]
        clouds = spaces.sorted_clouds(
            rng.normal(size=(15, 40)) * rng.uniform(0.5, 2, (15, 1)) + rng.normal(size=(15, 1)))
        W1 = spaces.wasserstein_pairwise(clouds, p=1)
        W2 = spaces.wasserstein_pairwise(clouds, p=2)
        cases = {
            "great-circle": spaces.great_circle_pairwise(_sphere(rng, 15)),
            "Fisher-Rao": spaces.fisher_rao_pairwise(spaces.sqrt_density_features(dens, grid)),
            "W1": W1,
            "W1^0.5": np.sqrt(W1),
            "W2": W2,
            "W2^2": W2 ** 2,
            "D1 sphere curves": spaces.curve_metric(times, p=1)(np.stack([_sphere(rng, 20) for _ in range(15)])),
        }
        for name, D in cases.items():
            worst[name] = max(worst.get(name, -np.inf), spaces.check_negative_type(D, 1000, rng))
            G = exponential_kernel_matrix(D, median_heuristic(D))
            worst_eig[name] = min(worst_eig.get(name, np.inf), min_eigenvalue(G))
    elapsed = time.perf_counter() - t0
    ok = all(v <= 1e-8 for v in worst.values()) and all(v >= -1e-8 * 15 for v in worst_eig.values())
    ok &= elapsed < 60
    detail = ", ".join(f"{k} {worst[k]:.1e}/{worst_eig[k]:.1e}" for k in worst)
    report_criterion(5, "negative type and exponential-kernel PSD", ok,
                     f"max form / min eig: {detail}; {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_6_desk_scale_size(report_criterion):
    rate = _rate(DgpSpec("low_dim", n=200, a=2, scenario="null"), TestConfig(B=500, learner="gbt"), 300, 606)
    ok = 0.02 <= rate <= 0.10
    report_criterion(6, "desk-scale size, low_dim a=2 null, n=200", ok, f"size {rate:.3f}")
    assert ok


@pytest.mark.slow
def test_criterion_7_desk_scale_power(report_criterion):
    config = TestConfig(B=500, learner="gbt")
    rates = {}
    for scenario in ("null", "dgp1_2", "dgp1_3"):
        for n in (100, 300):
            rates[scenario, n] = _rate(DgpSpec("low_dim", n=n, a=2, scenario=scenario), config, 200, 707)
    checks = [rates["dgp1_3", 300] >= 0.6]
    for scenario in ("dgp1_2", "dgp1_3"):
        checks.append(rates[scenario, 300] > rates[scenario, 100])
        for n in (100, 300):
            checks.append(rates[scenario, n] >= rates["null", n] + 0.05)
    ok = all(checks)
    detail = ", ".join(f"{s}@{n}={r:.3f}" for (s, n), r in rates.items())
    report_criterion(7, "desk-scale power ordering", ok, detail)
    assert ok


@pytest.mark.slow
def test_criterion_8_distributional(report_criterion):
    config = TestConfig(B=500, learner="krr", x_metric="w1", y_metric="w1")
    size = _rate(DgpSpec("distributional", n=200, m=150, c=0.0), config, 200, 808)
    power = _rate(DgpSpec("distributional", n=200, m=150, c=0.2), config, 200, 808)
    ok = 0.02 <= size <= 0.10 and power >= 0.15 and power > size + 0.05
    report_criterion(8, "desk-scale distributional W1, mean-varying", ok,
                     f"size {size:.3f}, power(c=0.2) {power:.3f}")
    assert ok


def test_criterion_9_cli_determinism(tmp_path, report_criterion, monkeypatch):
    rng = np.random.default_rng(909)
    n = 50
    z = rng.normal(size=(n, 1))
    for name, arr in (("x", z + rng.normal(size=(n, 1))), ("y", rng.normal(size=(n, 1))), ("z", z)):
        np.savetxt(tmp_path / f"{name}.csv", arr, delimiter=",")
    np.savetxt(tmp_path / "clouds.csv", rng.normal(size=(n, 20)), delimiter=",")
    commands = {
        "test": ["test", "--x", str(tmp_path / "x.csv"), "--y", str(tmp_path / "y.csv"),
                 "--z", str(tmp_path / "z.csv"), "--B", "200", "--seed", "9"],
        "simulate": ["simulate", "--n", "60", "--reps", "4", "--B", "50", "--seed", "9"],
        "diagnose": ["diagnose", "--input", str(tmp_path / "clouds.csv"), "--space", "w2", "--seed", "9"],
    }
    identical = {}
    for name, args in commands.items():
        outputs = []
        for threads in ("1", "2", "1"):
            monkeypatch.setenv("SGCM_THREADS", threads)
            out = tmp_path / f"{name}_{len(outputs)}.out"
            assert main([*args, "--out", str(out)]) == 0
            outputs.append(out.read_bytes())
        identical[name] = outputs[0] == outputs[1] == outputs[2]
    ok = all(identical.values())
    report_criterion(9, "CLI outputs byte-identical across runs and SGCM_THREADS", ok,
                     ", ".join(f"{k}={v}" for k, v in identical.items()))
    assert ok
