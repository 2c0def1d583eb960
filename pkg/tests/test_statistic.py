import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sgcm.errors import ParameterError, ShapeError, SizeGuardError
from sgcm.statistic import (
    FOURTH_MOMENT,
    MAMMEN_HIGH,
    MAMMEN_LOW,
    boot_conditional_moments,
    bootstrap_p_value,
    bootstrap_quantile,
    bootstrap_replicates,
    core_matrix,
    naive_statistic_oracle,
    replicates_from_multipliers,
    sample_multipliers,
    sgcm_statistic,
    wild_bootstrap_test,
)


def random_kz(rng, n):
    if n == 1:
        return np.ones((1, 1))
    z = rng.normal(size=(n, 2))
    D = np.sqrt(((z[:, None] - z[None]) ** 2).sum(-1))
    return np.exp(-D / np.median(D[np.triu_indices(n, 1)]))


def random_instance(rng, n1=None, P=None, Q=None):
    n1 = n1 or int(rng.integers(1, 21))
    P = P or int(rng.integers(1, 6))
    Q = Q or int(rng.integers(1, 6))
    return rng.normal(size=(n1, P)), rng.normal(size=(n1, Q)), random_kz(rng, n1)


# --- core matrix and statistic ------------------------------------------------

def test_core_matrix_trivial():
    rng = np.random.default_rng(0)
    rX, rY, Kz = random_instance(rng, 6, 2, 3)
    assert np.all(core_matrix(np.zeros_like(rX), rY, Kz) == 0)
    x, y = np.array([[1.0, 2.0]]), np.array([[3.0]])
    np.testing.assert_allclose(core_matrix(x, y, [[0.5]]), [[5.0 * 9.0 * 0.5]])
    with pytest.raises(ShapeError):
        core_matrix(rX, rY[:5], Kz)


def test_core_matrix_psd():
    rng = np.random.default_rng(1)
    for _ in range(20):
        A = core_matrix(*random_instance(rng, 6))
        assert np.linalg.eigvalsh(A).min() >= -1e-8 * 6
        np.testing.assert_array_equal(A, A.T)


def test_statistic_examples():
    assert sgcm_statistic(np.zeros((4, 4))) == 0
    A = core_matrix([[1.0], [-1.0]], [[1.0], [1.0]], np.eye(2))
    np.testing.assert_array_equal(A, np.eye(2))
    assert sgcm_statistic(A) == 1.0
    assert naive_statistic_oracle([[1.0], [-1.0]], [[1.0], [1.0]], np.eye(2)) == 1.0


def test_oracle_equivalence():
    rng = np.random.default_rng(2)
    for _ in range(200):
        rX, rY, Kz = random_instance(rng)
        fast = sgcm_statistic(core_matrix(rX, rY, Kz))
        slow = naive_statistic_oracle(rX, rY, Kz)
        assert fast == pytest.approx(slow, rel=1e-10, abs=1e-300)


def test_oracle_single_observation_and_guard():
    rX, rY = np.array([[0.5, -2.0]]), np.array([[1.5]])
    assert naive_statistic_oracle(rX, rY, [[0.7]]) == pytest.approx(4.25 * 2.25 * 0.7)
    assert naive_statistic_oracle(np.zeros((3, 2)), np.ones((3, 1)), np.eye(3)) == 0
    with pytest.raises(SizeGuardError):
        naive_statistic_oracle(np.zeros((51, 1)), np.zeros((51, 1)), np.eye(51))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_nonnegativity(seed):
    rng = np.random.default_rng(seed)
    rX, rY, Kz = random_instance(rng, int(rng.integers(1, 40)))
    assert sgcm_statistic(core_matrix(rX, rY, Kz)) >= -1e-8


@pytest.mark.parametrize("c", [0.125, 0.5, 2.0, 64.0])
def test_kz_scaling_exact_for_binary_scales(c):
    rng = np.random.default_rng(3)
    rX, rY, Kz = random_instance(rng, 15, 3, 2)
    assert sgcm_statistic(core_matrix(rX, rY, c * Kz)) == c * sgcm_statistic(core_matrix(rX, rY, Kz))


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_kz_scaling_general(c, seed):
    rX, rY, Kz = random_instance(np.random.default_rng(seed), 12)
    base = sgcm_statistic(core_matrix(rX, rY, Kz))
    assert sgcm_statistic(core_matrix(rX, rY, c * Kz)) == pytest.approx(c * base, rel=1e-13)


def test_sign_flip_invariance_exact():
    rng = np.random.default_rng(4)
    for _ in range(50):
        rX, rY, Kz = random_instance(rng, 15)
        A = core_matrix(rX, rY, Kz)
        p = int(rng.integers(rX.shape[1]))
        flipped = rX.copy()
        flipped[:, p] = -flipped[:, p]
        A2 = core_matrix(flipped, rY, Kz)
        assert sgcm_statistic(A2) == sgcm_statistic(A)
        np.testing.assert_array_equal(bootstrap_replicates(A, 50, "gaussian", 9),
                                      bootstrap_replicates(A2, 50, "gaussian", 9))


def test_permutation_equivariance_exact():
    rng = np.random.default_rng(5)
    for _ in range(50):
        rX, rY, Kz = random_instance(rng, 18)
        perm = rng.permutation(18)
        a = sgcm_statistic(core_matrix(rX, rY, Kz))
        b = sgcm_statistic(core_matrix(rX[perm], rY[perm], Kz[np.ix_(perm, perm)]))
        assert a == b


# --- multipliers ---------------------------------------------------------------

def test_mammen_moments():
    w = sample_multipliers("mammen", 10**6, np.random.default_rng(6))
    assert set(np.unique(w)) == {MAMMEN_LOW, MAMMEN_HIGH}
    for k, target in zip(range(1, 5), (0, 1, 1, 2)):
        vals = w ** k
        se = vals.std() / math.sqrt(w.size)
        assert abs(vals.mean() - target) <= 4 * se


def test_mammen_two_point_law_exact():
    # mean 0 and variance 1 follow from the stated probabilities
    s5 = math.sqrt(5)
    p_low = (s5 + 1) / (2 * s5)
    assert p_low * MAMMEN_LOW + (1 - p_low) * MAMMEN_HIGH == pytest.approx(0, abs=1e-15)
    assert p_low * MAMMEN_LOW ** 2 + (1 - p_low) * MAMMEN_HIGH ** 2 == pytest.approx(1)
    assert p_low * MAMMEN_LOW ** 4 + (1 - p_low) * MAMMEN_HIGH ** 4 == pytest.approx(FOURTH_MOMENT["mammen"])


def test_other_laws():
    rng = np.random.default_rng(7)
    assert set(np.unique(sample_multipliers("rademacher", 1000, rng))) == {-1.0, 1.0}
    assert abs(sample_multipliers("gaussian", 10**6, rng).mean()) <= 4e-3
    with pytest.raises(ParameterError):
        sample_multipliers("poisson", 3, rng)


# --- bootstrap -------------------------------------------------------------------

def test_unit_multipliers_recover_statistic():
    rng = np.random.default_rng(8)
    A = core_matrix(*random_instance(rng, 10))
    rep = replicates_from_multipliers(A, np.ones((1, 10)))
    assert rep[0] == pytest.approx(sgcm_statistic(A), rel=1e-14)
    assert np.all(bootstrap_replicates(np.zeros((5, 5)), 20, "mammen", 1) == 0)


def test_replicates_nonnegative_and_seeded():
    rng = np.random.default_rng(9)
    A = core_matrix(*random_instance(rng, 20))
    for law in FOURTH_MOMENT:
        reps = bootstrap_replicates(A, 300, law, 4)
        assert reps.min() >= -1e-8
        np.testing.assert_array_equal(reps, bootstrap_replicates(A, 300, law, 4))
    # replicate b depends only on its own stream: a prefix of a longer run
    np.testing.assert_array_equal(bootstrap_replicates(A, 40, "gaussian", 4),
                                  bootstrap_replicates(A, 300, "gaussian", 4)[:40])


def test_replicate_mean_matches_trace():
    rng = np.random.default_rng(10)
    A = core_matrix(*random_instance(rng, 12))
    reps = bootstrap_replicates(A, 10**5, "gaussian", 11)
    se = reps.std() / math.sqrt(reps.size)
    assert abs(reps.mean() - np.trace(A) / 12) <= 4 * se


def test_conditional_moments_trivial():
    assert boot_conditional_moments(np.zeros((3, 3)), 2.0) == (0.0, 0.0)
    A = core_matrix(*random_instance(np.random.default_rng(11), 5))
    # gaussian: the diagonal fourth-power term drops out
    tr = np.trace(A)
    assert boot_conditional_moments(A, 3.0)[1] == pytest.approx((tr ** 2 + 2 * np.sum(A ** 2)) / 25)


@pytest.mark.parametrize("law", ["mammen", "gaussian", "rademacher"])
def test_conditional_second_moment_monte_carlo(law):
    rng = np.random.default_rng(12)
    for _ in range(5):
        A = core_matrix(*random_instance(rng, 5))
        W = sample_multipliers(law, 5 * 10**6, rng).reshape(10**6, 5)
        T = replicates_from_multipliers(A, W)
        mean, second = boot_conditional_moments(A, FOURTH_MOMENT[law])
        sq = T * T
        assert abs(sq.mean() - second) <= 4 * sq.std() / math.sqrt(T.size)
        assert abs(T.mean() - mean) <= 4 * T.std() / math.sqrt(T.size)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_second_moment_monotone_in_mu4(seed):
    A = core_matrix(*random_instance(np.random.default_rng(seed)))
    seconds = [boot_conditional_moments(A, mu4)[1] for mu4 in (1.0, 2.0, 3.0)]
    if np.sum(np.diag(A) ** 2) > 0:
        assert seconds[0] <= seconds[1] <= seconds[2]


def test_quantile_ordering_across_laws():
    rng = np.random.default_rng(13)
    failures = {"gm": 0, "mr": 0}
    for _ in range(20):
        A = core_matrix(*random_instance(rng, 30, 2, 2))
        q = {law: np.mean([bootstrap_quantile(bootstrap_replicates(A, 200, law, rng.integers(2**63)), 0.05)
                           for _ in range(50)])
             for law in FOURTH_MOMENT}
        failures["gm"] += q["gaussian"] < q["mammen"]
        failures["mr"] += q["mammen"] < q["rademacher"]
    assert failures["gm"] <= 4 and failures["mr"] <= 4


def test_quantile_rank_and_p_value():
    reps = np.arange(1.0, 501.0)
    assert bootstrap_quantile(reps, 0.05) == 475.0
    assert bootstrap_quantile(reps[::-1], 0.05) == 475.0
    assert bootstrap_quantile(np.arange(1.0, 2001.0), 0.05) == 1900.0
    assert bootstrap_quantile([3.0], 0.5) == 3.0
    with pytest.raises(ParameterError):
        bootstrap_quantile(reps, 1.0)
    assert bootstrap_p_value(600.0, reps) == 1 / 501
    assert bootstrap_p_value(0.0, reps) == 1.0
    assert bootstrap_p_value(475.0, reps) == 27 / 501


def test_wild_bootstrap_decision_consistent():
    rng = np.random.default_rng(14)
    for _ in range(20):
        A = core_matrix(*random_instance(rng, 25))
        out = wild_bootstrap_test(A, 199, 0.05, "gaussian", rng.integers(2**63))
        assert out.reject == (out.statistic > out.quantile)
        assert out.p_value == bootstrap_p_value(out.statistic, out.replicates)
        assert 0 < out.p_value <= 1
