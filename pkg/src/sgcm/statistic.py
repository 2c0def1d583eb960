"""The SGCM statistic and its multiplier (wild) bootstrap.

With cross-fitted residual scores ``rX`` (n1 x P), ``rY`` (n1 x Q) and the
Gram matrix ``Kz`` of Z over the statistic sample, the core matrix is

    A = (rX rX') * (rY rY') * Kz        (entrywise products)

and the statistic is ``sum(A) / n1``, a V-statistic that is nonnegative
because A is a Schur product of PSD matrices.  Bootstrap replicates
perturb the summands: ``T*_b = W_b' A W_b / n1``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError, SizeGuardError

MULTIPLIER_LAWS = ("gaussian", "rademacher", "mammen")
_SQRT5 = math.sqrt(5.0)
MAMMEN_LOW = (1.0 - _SQRT5) / 2.0
MAMMEN_HIGH = (1.0 + _SQRT5) / 2.0
MAMMEN_P_LOW = (_SQRT5 + 1.0) / (2.0 * _SQRT5)
FOURTH_MOMENT = {"gaussian": 3.0, "mammen": 2.0, "rademacher": 1.0}

NAIVE_MAX_N1 = 50


def _outer_sum(R):
    """``R @ R.T`` accumulated column by column.

    Every entry is computed by the same elementwise sequence, so permuting
    the rows of R permutes the result exactly (a BLAS product does not
    guarantee this).
    """
    n = R.shape[0]
    out = np.zeros((n, n))
    for col in R.T:
        out += col[:, None] * col[None, :]
    return out


def core_matrix(rX, rY, Kz):
    """Kernel-weighted residual product matrix ``(rX rX') * (rY rY') * Kz``."""
    rX = np.asarray(rX, dtype=float)
    rY = np.asarray(rY, dtype=float)
    Kz = np.asarray(Kz, dtype=float)
    if rX.ndim == 1:
        rX = rX[:, None]
    if rY.ndim == 1:
        rY = rY[:, None]
    n1 = rX.shape[0]
    if rY.shape[0] != n1 or Kz.shape != (n1, n1):
        raise ShapeError(
            f"shape mismatch: rX {rX.shape}, rY {rY.shape}, Kz {Kz.shape}"
        )
    return _outer_sum(rX) * _outer_sum(rY) * Kz


def sgcm_statistic(A):
    """``sum_ij A_ij / n1`` with a correctly rounded sum (order independent)."""
    A = np.asarray(A, dtype=float)
    return math.fsum(A.ravel()) / A.shape[0]


def naive_statistic_oracle(rX, rY, Kz):
    """Literal quadruple sum over (i, j, p, q); only for small n1."""
    rX = np.atleast_2d(np.asarray(rX, dtype=float).T).T
    rY = np.atleast_2d(np.asarray(rY, dtype=float).T).T
    Kz = np.asarray(Kz, dtype=float)
    n1 = rX.shape[0]
    if n1 > NAIVE_MAX_N1:
        raise SizeGuardError(f"naive oracle limited to n1 <= {NAIVE_MAX_N1}, got {n1}")
    total = 0.0
    for i in range(n1):
        for j in range(n1):
            for p in range(rX.shape[1]):
                for q in range(rY.shape[1]):
                    total += rX[i, p] * rY[i, q] * rX[j, p] * rY[j, q] * Kz[i, j]
    return total / n1


def sample_multipliers(law, n, rng=None):
    """IID mean-zero, unit-variance multipliers."""
    rng = np.random.default_rng(rng)
    if law == "gaussian":
        return rng.standard_normal(n)
    if law == "rademacher":
        return np.where(rng.random(n) < 0.5, -1.0, 1.0)
    if law == "mammen":
        return np.where(rng.random(n) < MAMMEN_P_LOW, MAMMEN_LOW, MAMMEN_HIGH)
    raise ParameterError(f"unknown multiplier law {law!r}; choose from {MULTIPLIER_LAWS}")


def replicate_seeds(seed, B):
    """Stream b of a bootstrap is child ``b`` of `seed`.

    Children are built from the spawn key directly, so the mapping does not
    depend on how many children were spawned before or on worker count.
    """
    if isinstance(seed, np.random.Generator):
        seed = np.random.SeedSequence(int(seed.integers(2**63)))
    elif not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return [
        np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + (b,))
        for b in range(B)
    ]


def replicates_from_multipliers(A, W):
    """``W_b' A W_b / n1`` for each row ``W_b`` of W."""
    A = np.asarray(A, dtype=float)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[1] != A.shape[0]:
        raise ShapeError(f"multipliers have length {W.shape[1]}, A is {A.shape}")
    return np.einsum("bi,bi->b", W @ A, W) / A.shape[0]


def bootstrap_replicates(A, B, law="gaussian", rng=None):
    """B wild-bootstrap replicates of the statistic."""
    if B < 1:
        raise ParameterError("B must be at least 1")
    n1 = np.asarray(A).shape[0]
    W = np.empty((B, n1))
    for b, ss in enumerate(replicate_seeds(rng, B)):
        W[b] = sample_multipliers(law, n1, np.random.Generator(np.random.PCG64(ss)))
    return replicates_from_multipliers(A, W)


def boot_conditional_moments(A, mu4):
    """Exact first and second moments of a replicate given the data.

    For multipliers with fourth moment `mu4`:

        E[T*]   = tr(A) / n1
        E[T*^2] = (tr(A)^2 + 2 sum A_ij^2 + (mu4 - 3) sum A_ii^2) / n1^2
    """
    A = np.asarray(A, dtype=float)
    n1 = A.shape[0]
    diag = np.diag(A)
    tr = diag.sum()
    second = (tr * tr + 2.0 * np.sum(A * A) + (mu4 - 3.0) * np.sum(diag * diag)) / n1**2
    return tr / n1, second


def bootstrap_quantile(replicates, alpha):
    """Order statistic of rank ``ceil((1 - alpha) B)``."""
    if not 0 < alpha < 1:
        raise ParameterError("alpha must lie in (0, 1)")
    reps = np.sort(np.asarray(replicates, dtype=float))
    B = reps.size
    # the slack keeps e.g. 0.95 * 500 = 475.00000000000006 at rank 475
    rank = max(1, math.ceil((1.0 - alpha) * B - 1e-9))
    return float(reps[rank - 1])


def bootstrap_p_value(statistic, replicates):
    """``(1 + #{T*_b >= T}) / (B + 1)``."""
    reps = np.asarray(replicates, dtype=float)
    return (1.0 + np.count_nonzero(reps >= statistic)) / (reps.size + 1.0)


@dataclass(frozen=True)
class BootstrapOutcome:
    statistic: float
    quantile: float
    p_value: float
    reject: bool
    replicates: np.ndarray


def wild_bootstrap_test(A, B=2000, alpha=0.05, law="gaussian", rng=None):
    """Steps 1-4: statistic, replicates, quantile, decision."""
    stat = sgcm_statistic(A)
    reps = bootstrap_replicates(A, B, law, rng)
    q = bootstrap_quantile(reps, alpha)
    return BootstrapOutcome(stat, q, bootstrap_p_value(stat, reps), bool(stat > q), reps)
