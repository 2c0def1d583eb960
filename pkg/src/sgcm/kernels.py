"""Kernels induced by semimetrics of negative type, and the median heuristic."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDistancesError, DimensionError, EmptyInputError, ParameterError

PSD_TOL = 1e-8


def _check_distances(D):
    D = np.asarray(D, dtype=float)
    if D.ndim != 2:
        raise DimensionError(f"distance matrix must be 2-D, got shape {D.shape}")
    if np.any(D < 0) or not np.all(np.isfinite(D)):
        raise ParameterError("distances must be finite and nonnegative")
    return D


def _check_power(q):
    if not 0 < q <= 2:
        raise ParameterError(f"exponent q must lie in (0, 2], got {q}")


def median_heuristic(D):
    """Inverse median of the strictly-upper-triangle distances.

    For an even number of pairs the lower middle order statistic is used, so
    the result is an actual observed distance.

    Raises
    ------
    DegenerateDistancesError
        If every off-diagonal distance is zero.
    """
    D = _check_distances(D)
    n = D.shape[0]
    if n < 2 or D.shape[1] != n:
        raise EmptyInputError("median heuristic needs a square matrix with n >= 2")
    upper = D[np.triu_indices(n, k=1)]
    if not np.any(upper > 0):
        raise DegenerateDistancesError("all pairwise distances are zero")
    med = np.partition(upper, (upper.size - 1) // 2)[(upper.size - 1) // 2]
    if med <= 0:
        # more than half the pairs coincide; fall back to the positive part
        pos = upper[upper > 0]
        med = np.partition(pos, (pos.size - 1) // 2)[(pos.size - 1) // 2]
    return float(1.0 / med)


def exponential_kernel_matrix(D, gamma, q=1.0):
    """``exp(-gamma * D**q)`` entrywise."""
    D = _check_distances(D)
    _check_power(q)
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    Dq = D if q == 1 else D ** q
    return np.exp(-gamma * Dq)


def rational_quadratic_kernel_matrix(D, c=1.0, alpha=1.0, q=1.0):
    """``(1 + c * D**q) ** -alpha`` entrywise."""
    D = _check_distances(D)
    _check_power(q)
    if not c > 0 or not alpha > 0:
        raise ParameterError(f"c and alpha must be positive, got c={c}, alpha={alpha}")
    Dq = D if q == 1 else D ** q
    return (1.0 + c * Dq) ** (-alpha)


def tensor_product_kernel(G1, G2):
    """Entrywise product of two Gram matrices over the same paired sample."""
    G1 = np.asarray(G1, dtype=float)
    G2 = np.asarray(G2, dtype=float)
    if G1.shape != G2.shape:
        raise DimensionError(f"Gram shapes differ: {G1.shape} vs {G2.shape}")
    return G1 * G2


def min_eigenvalue(G):
    G = np.asarray(G, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (G + G.T))[0])


def is_numerically_psd(G, tol=PSD_TOL):
    """Smallest eigenvalue >= -tol * n."""
    return min_eigenvalue(G) >= -tol * np.asarray(G).shape[0]


@dataclass(frozen=True)
class KernelSpec:
    """How to turn a distance matrix into a Gram matrix.

    ``gamma=None`` means the median heuristic is applied to the distances
    the kernel is fitted on.  For ``tensor_product`` the per-factor specs
    are applied to a matching list of distance matrices.
    """

    family: str = "exponential"
    gamma: float = None
    c: float = 1.0
    alpha: float = 1.0
    q: float = 1.0
    factors: tuple = field(default=())

    def __post_init__(self):
        if self.family not in ("exponential", "rational_quadratic", "tensor_product"):
            raise ParameterError(f"unknown kernel family {self.family!r}")
        if self.gamma is not None and not self.gamma > 0:
            raise ParameterError("gamma must be positive")
        if self.c <= 0 or self.alpha <= 0:
            raise ParameterError("c and alpha must be positive")
        _check_power(self.q)
        if self.family == "tensor_product" and not self.factors:
            raise ParameterError("tensor_product needs at least one factor")

    def fit_scale(self, D):
        """Scale parameter for this family given training distances."""
        if self.family == "exponential":
            return self.gamma if self.gamma is not None else median_heuristic(D)
        if self.family == "rational_quadratic":
            return self.c
        raise ParameterError("tensor_product kernels are fitted per factor")

    def gram(self, D, scale):
        if self.family == "exponential":
            return exponential_kernel_matrix(D, scale, self.q)
        if self.family == "rational_quadratic":
            return rational_quadratic_kernel_matrix(D, scale, self.alpha, self.q)
        raise ParameterError("tensor_product kernels are assembled per factor")
