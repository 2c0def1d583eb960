"""Empirical eigenfunctions of the uncentered kernel covariance operator.

For a Gram matrix ``G`` over the basis sample (size ``n2``) with eigenpairs
``(kappa_p, u_p)``, the unit-norm eigenfunctions are

    e_p(x) = kappa_p ** -0.5 * sum_l u_p[l] k(X_l, x)

with operator eigenvalues ``kappa_p / n2``.  Scores at new points only need
the cross-Gram rows ``k(x, X_l)``.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGramError, ParameterError, ShapeError

EIGEN_FLOOR = 1e-10


@dataclass(frozen=True)
class EigenSystem:
    """Retained eigenpairs of a basis Gram matrix.

    Attributes
    ----------
    eigenvalues : (P,) array
        Operator eigenvalues ``kappa_p / n2``, descending and positive.
    coefficients : (n2, P) array
        Column ``p`` holds ``u_p / sqrt(kappa_p)``.
    vectors : (n2, P) array
        Unit eigenvectors ``u_p`` of the Gram matrix.
    all_eigenvalues : (n2,) array
        Every operator eigenvalue (retained or not), clipped at zero; the
        denominator of the fraction of variance explained.
    source_gram : (n2, n2) array
    """

    eigenvalues: np.ndarray
    coefficients: np.ndarray
    vectors: np.ndarray
    all_eigenvalues: np.ndarray
    source_gram: np.ndarray

    @property
    def n2(self):
        return self.source_gram.shape[0]

    @property
    def kappas(self):
        return self.eigenvalues * self.n2

    def truncate(self, P):
        return EigenSystem(
            self.eigenvalues[:P],
            self.coefficients[:, :P],
            self.vectors[:, :P],
            self.all_eigenvalues,
            self.source_gram,
        )


def eigensystem_from_gram(G, floor=EIGEN_FLOOR):
    """Eigendecompose a basis Gram matrix into empirical eigenfunctions.

    Pairs with ``kappa_p <= floor * kappa_1`` are dropped.  Each eigenvector
    is signed so that its largest-magnitude entry is positive.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ShapeError(f"Gram matrix must be square, got {G.shape}")
    if not np.allclose(G, G.T, rtol=0, atol=1e-12 * max(1.0, np.abs(G).max(initial=0))):
        raise ShapeError("Gram matrix is not symmetric")
    n2 = G.shape[0]
    kappa, U = np.linalg.eigh(0.5 * (G + G.T))
    order = np.argsort(-kappa, kind="stable")
    kappa, U = kappa[order], U[:, order]
    if not kappa[0] > 0:
        raise DegenerateGramError("Gram matrix has no positive eigenvalue")
    keep = kappa > floor * kappa[0]
    if not np.any(keep):
        raise DegenerateGramError("all eigenvalues fall below the floor")
    kr, Ur = kappa[keep], U[:, keep]
    pivot = np.argmax(np.abs(Ur), axis=0)
    signs = np.sign(Ur[pivot, np.arange(Ur.shape[1])])
    Ur = Ur * signs
    return EigenSystem(
        eigenvalues=kr / n2,
        coefficients=Ur / np.sqrt(kr),
        vectors=Ur,
        all_eigenvalues=np.clip(kappa, 0.0, None) / n2,
        source_gram=G,
    )


def evaluate_scores(es, cross):
    """Eigenfunction values at new points.

    Parameters
    ----------
    es : EigenSystem
    cross : (n_eval, n2) array
        Row ``i`` holds ``k(x_i, X_l)`` over the basis sample, in the same
        order as ``es.source_gram``.

    Returns
    -------
    (n_eval, P) array with entry ``[i, p] = e_p(x_i)``.
    """
    cross = np.asarray(cross, dtype=float)
    if cross.ndim != 2 or cross.shape[1] != es.n2:
        raise ShapeError(
            f"cross-Gram needs {es.n2} columns, got shape {cross.shape}"
        )
    return cross @ es.coefficients


def fve_curve(eigenvalues):
    lam = np.clip(np.asarray(eigenvalues, dtype=float), 0.0, None)
    total = lam.sum()
    if not total > 0:
        raise DegenerateGramError("eigenvalues sum to zero")
    curve = np.cumsum(lam) / total
    curve[-1] = 1.0
    return curve


@dataclass(frozen=True)
class TruncationChoice:
    P: int
    fve_achieved: float


def select_truncation_fve(eigenvalues, tau=0.8):
    """Smallest ``P`` whose fraction of variance explained reaches `tau`."""
    if not 0 < tau <= 1:
        raise ParameterError(f"tau must lie in (0, 1], got {tau}")
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size == 0:
        raise ParameterError("no eigenvalues to truncate")
    curve = fve_curve(lam)
    # slack absorbs cumsum rounding, e.g. 0.3 + 0.5 landing just under 0.8
    P = int(np.argmax(curve >= tau - 1e-12)) + 1
    return TruncationChoice(P, float(curve[P - 1]))


def spectral_gap_warning(eigenvalues, P, n2):
    """True when the gap after the P-th eigenvalue is below ``n2 ** -0.5``."""
    lam = np.asarray(eigenvalues, dtype=float)
    nxt = lam[P] if P < lam.size else 0.0
    return bool(lam[P - 1] - nxt < 1.0 / np.sqrt(n2))


def truncated_eigensystem(G, tau=0.8, floor=EIGEN_FLOOR, warn=False):
    """Eigensystem truncated by FVE, plus the truncation record and gap flag.

    The FVE uses every eigenvalue of the Gram matrix; the retained count is
    capped at the number of pairs that survived the floor.
    """
    es = eigensystem_from_gram(G, floor)
    choice = select_truncation_fve(es.all_eigenvalues, tau)
    P = min(choice.P, es.eigenvalues.size)
    if P != choice.P:
        choice = TruncationChoice(P, float(fve_curve(es.all_eigenvalues)[P - 1]))
    gap_flag = spectral_gap_warning(es.all_eigenvalues, P, es.n2)
    if gap_flag and warn:
        warnings.warn(
            f"small spectral gap after component {P}; truncation may be unstable",
            RuntimeWarning,
            stacklevel=2,
        )
    return es.truncate(P), choice, gap_flag
