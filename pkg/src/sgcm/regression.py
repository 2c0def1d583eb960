"""Scalar regressors for the score-on-Z regressions, and cross-fitting.

Two learners are provided:

* kernel ridge regression on a Gram matrix of Z, usable for any space Z
  with a kernel;
* squared-loss gradient boosting of depth-limited regression trees on a
  Euclidean feature matrix.

`cross_fit_residuals` predicts every observation from a model fitted on the
other folds and returns score minus prediction.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import FoldSizeError, NumericalError, ParameterError, ShapeError

try:
    from numba import njit
except ImportError:  # pragma: no cover - slow pure-Python fallback
    def njit(*args, **kwargs):
        def deco(fn):
            return fn
        return deco

DEFAULT_LAMBDA_GRID = tuple(10.0 ** k for k in range(-6, 3))


@dataclass(frozen=True)
class RegressorSpec:
    """Learner settings.

    kind : {"gbt", "krr", "oracle_mean"}
        ``oracle_mean`` is a test hook: predictions come from
        ``oracle_fn(Z_eval, p)``, the known conditional mean of coordinate p.

    The boosting defaults (60 rounds, unit leaf penalty) are deliberately
    mild.  The X and Y score regressions share Z, so overfitted trees leave
    correlated errors in both residuals and inflate the size of the test.
    """

    kind: str = "gbt"
    krr_lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    gbt_rounds: int = 60
    gbt_depth: int = 2
    gbt_learning_rate: float = 0.1
    gbt_subsample: float = 1.0
    gbt_l2: float = 1.0
    oracle_fn: Callable = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("gbt", "krr", "oracle_mean"):
            raise ParameterError(f"unknown learner {self.kind!r}")
        if len(self.krr_lambda_grid) == 0 or min(self.krr_lambda_grid) <= 0:
            raise ParameterError("lambda grid must be nonempty and positive")
        if self.gbt_rounds < 0 or self.gbt_depth < 1:
            raise ParameterError("gbt_rounds must be >= 0 and gbt_depth >= 1")
        if self.gbt_l2 < 0:
            raise ParameterError("gbt_l2 must be nonnegative")
        if not 0 < self.gbt_learning_rate <= 1 or not 0 < self.gbt_subsample <= 1:
            raise ParameterError("learning rate and subsample must lie in (0, 1]")
        if self.kind == "oracle_mean" and self.oracle_fn is None:
            raise ParameterError("oracle_mean needs oracle_fn")


# ----------------------------------------------------------------------------
# Kernel ridge regression
# ----------------------------------------------------------------------------

def krr_fit_predict(K_train, y, K_eval, lam):
    """Kernel ridge predictions with the target mean removed and restored.

    ``K_eval @ (K_train + lam I)^-1 (y - mean(y)) + mean(y)``
    """
    K_train = np.asarray(K_train, dtype=float)
    K_eval = np.atleast_2d(np.asarray(K_eval, dtype=float))
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if K_train.shape != (n, n) or K_eval.shape[1] != n:
        raise ShapeError(
            f"inconsistent shapes: K_train {K_train.shape}, y {y.shape}, K_eval {K_eval.shape}"
        )
    if not lam > 0:
        raise ParameterError("lambda must be positive")
    ybar = y.mean(axis=0)
    try:
        coef = np.linalg.solve(K_train + lam * np.eye(n), y - ybar)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"ridge system is singular: {exc}") from None
    if not np.all(np.isfinite(coef)):
        raise NumericalError("ridge solve produced non-finite coefficients")
    return K_eval @ coef + ybar


def _krr_loo_multi(K_train, Y, K_eval, grid):
    """Per-column lambda by closed-form leave-one-out, then predict.

    Returns predictions (n_eval, P) and the chosen lambdas (P,).
    """
    s, V = np.linalg.eigh(0.5 * (K_train + K_train.T))
    s = np.clip(s, 0.0, None)
    ybar = Y.mean(axis=0)
    Yc = Y - ybar
    VtY = V.T @ Yc
    V2 = V * V
    grid = np.asarray(grid, dtype=float)
    loo = np.empty((grid.size, Y.shape[1]))
    for g, lam in enumerate(grid):
        filt = s / (s + lam)
        fitted = V @ (filt[:, None] * VtY)
        one_minus_h = 1.0 - V2 @ filt
        with np.errstate(divide="ignore", invalid="ignore"):
            resid = (Yc - fitted) / one_minus_h[:, None]
        mse = np.mean(resid ** 2, axis=0)
        loo[g] = np.where(np.isfinite(mse) & (one_minus_h.min() > 1e-12), mse, np.inf)
    best = np.argmin(loo, axis=0)
    lams = grid[best]
    coef = V @ (VtY / (s[:, None] + lams[None, :]))
    if not np.all(np.isfinite(coef)):
        raise NumericalError("ridge solve produced non-finite coefficients")
    return K_eval @ coef + ybar, lams


# ----------------------------------------------------------------------------
# Gradient boosted trees
# ----------------------------------------------------------------------------

@njit(cache=True)
def _boost_kernel(Z, y, Ze, order, rounds, depth, lr, l2, fit_masks):
    """Boosting loop; trees are grown level by level in heap numbering."""
    n, d = Z.shape
    ne = Ze.shape[0]
    n_nodes = 2 ** (depth + 1) - 1
    ybar = 0.0
    for i in range(n):
        ybar += y[i]
    ybar /= n
    f_tr = np.full(n, ybar)
    f_ev = np.full(ne, ybar)
    r = np.empty(n)
    node_tr = np.empty(n, dtype=np.int64)
    node_ev = np.empty(ne, dtype=np.int64)
    tot = np.empty(n_nodes)
    cnt = np.empty(n_nodes)
    ls = np.empty(n_nodes)
    lc = np.empty(n_nodes)
    prev = np.empty(n_nodes)
    best_gain = np.empty(n_nodes)
    best_feat = np.empty(n_nodes, dtype=np.int64)
    best_thr = np.empty(n_nodes)
    leaf_sum = np.empty(n_nodes)
    leaf_cnt = np.empty(n_nodes)
    for t in range(rounds):
        fit = fit_masks[t % fit_masks.shape[0]]
        for i in range(n):
            r[i] = y[i] - f_tr[i]
            node_tr[i] = 0
        for i in range(ne):
            node_ev[i] = 0
        first = 0
        for level in range(depth):
            width = 2 ** level
            for k in range(first, first + width):
                tot[k] = 0.0
                cnt[k] = 0.0
                best_gain[k] = -np.inf
                best_feat[k] = -1
            for i in range(n):
                k = node_tr[i]
                if fit[i] and k >= first:
                    tot[k] += r[i]
                    cnt[k] += 1.0
            for j in range(d):
                for k in range(first, first + width):
                    ls[k] = 0.0
                    lc[k] = 0.0
                for s in range(n):
                    i = order[s, j]
                    k = node_tr[i]
                    if not fit[i] or k < first:
                        continue
                    z = Z[i, j]
                    if lc[k] > 0 and z > prev[k]:
                        rs = tot[k] - ls[k]
                        gain = ls[k] * ls[k] / (lc[k] + l2) + rs * rs / (cnt[k] - lc[k] + l2)
                        if gain > best_gain[k]:
                            best_gain[k] = gain
                            best_feat[k] = j
                            thr = prev[k] + 0.5 * (z - prev[k])
                            if not thr < z:
                                thr = prev[k]
                            best_thr[k] = thr
                    ls[k] += r[i]
                    lc[k] += 1.0
                    prev[k] = z
            # route rows of split nodes to children; unsplit nodes become leaves
            for i in range(n):
                k = node_tr[i]
                if k >= first and best_feat[k] >= 0:
                    if Z[i, best_feat[k]] <= best_thr[k]:
                        node_tr[i] = 2 * k + 1
                    else:
                        node_tr[i] = 2 * k + 2
            for i in range(ne):
                k = node_ev[i]
                if k >= first and best_feat[k] >= 0:
                    if Ze[i, best_feat[k]] <= best_thr[k]:
                        node_ev[i] = 2 * k + 1
                    else:
                        node_ev[i] = 2 * k + 2
            first += width
        for k in range(n_nodes):
            leaf_sum[k] = 0.0
            leaf_cnt[k] = 0.0
        for i in range(n):
            if fit[i]:
                leaf_sum[node_tr[i]] += r[i]
                leaf_cnt[node_tr[i]] += 1.0
        for k in range(n_nodes):
            if leaf_cnt[k] > 0:
                leaf_sum[k] = lr * leaf_sum[k] / (leaf_cnt[k] + l2)
        for i in range(n):
            f_tr[i] += leaf_sum[node_tr[i]]
        for i in range(ne):
            f_ev[i] += leaf_sum[node_ev[i]]
    return f_ev


def gbt_fit_predict(Z_train, y, Z_eval, spec=RegressorSpec(), rng=None):
    """Fit squared-loss boosting on (Z_train, y) and predict at Z_eval.

    Round 0 predicts the mean of y; each round fits a depth-limited tree to
    the current residuals by exhaustive SSE-optimal splits and adds it scaled
    by the learning rate.  With ``gbt_subsample < 1`` each tree sees a random
    subset of rows drawn from `rng`, so results are reproducible for a fixed
    seed.
    """
    Z = np.asarray(Z_train, dtype=float)
    Ze = np.asarray(Z_eval, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Ze.ndim == 1:
        Ze = Ze[:, None]
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if Z.shape[0] != n or Ze.shape[1] != Z.shape[1] or Z.shape[1] < 1:
        raise ShapeError(f"inconsistent shapes: Z {Z.shape}, y {y.shape}, Z_eval {Ze.shape}")
    if spec.gbt_rounds == 0 or n < 2:
        return np.full(Ze.shape[0], y.mean())
    n_sub = max(2, int(round(spec.gbt_subsample * n)))
    if n_sub < n:
        rng = np.random.default_rng(rng)
        fit_masks = np.zeros((spec.gbt_rounds, n), dtype=np.bool_)
        for t in range(spec.gbt_rounds):
            fit_masks[t, rng.choice(n, size=n_sub, replace=False)] = True
    else:
        fit_masks = np.ones((1, n), dtype=np.bool_)
    order = np.ascontiguousarray(np.argsort(Z, axis=0, kind="stable"))
    return _boost_kernel(
        np.ascontiguousarray(Z), y, np.ascontiguousarray(Ze), order,
        spec.gbt_rounds, spec.gbt_depth, float(spec.gbt_learning_rate), float(spec.gbt_l2), fit_masks,
    )


# ----------------------------------------------------------------------------
# Cross-fitting
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ResidualScores:
    """Cross-fitted residuals for one variable.

    Attributes
    ----------
    values : (n1, P) array of score minus out-of-fold prediction
    folds : (n1,) int array, fold label of each observation
    mse : (P,) array, mean squared residual per coordinate
    lambdas : (folds, P) array of selected ridge penalties (KRR only)
    """

    values: np.ndarray
    folds: np.ndarray
    mse: np.ndarray
    lambdas: np.ndarray = None


def make_folds(n, folds, rng):
    """Random fold labels 0..folds-1 with sizes differing by at most one."""
    if folds < 2:
        raise ParameterError("need at least two folds")
    if n < folds:
        raise FoldSizeError(f"{n} observations cannot fill {folds} folds")
    labels = np.empty(n, dtype=int)
    for f, part in enumerate(np.array_split(rng.permutation(n), folds)):
        if part.size < 2:
            raise FoldSizeError(f"fold {f} has {part.size} observation(s); need >= 2")
        labels[part] = f
    return labels


def cross_fit_residuals(scores, Z_repr, spec=RegressorSpec(), folds=3, rng=None):
    """Out-of-fold residuals of every score column regressed on Z.

    Parameters
    ----------
    scores : (n1, P) array
    Z_repr : array
        Feature matrix (n1, d) for ``gbt`` and ``oracle_mean``; Gram matrix
        (n1, n1) of Z for ``krr``.
    spec : RegressorSpec
    folds : int
    rng : seed or Generator
        Draws the single fold partition shared by all columns, then the
        per-(fold, column) learner streams.
    """
    S = np.asarray(scores, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    n1, P = S.shape
    Z_repr = np.asarray(Z_repr, dtype=float)
    if Z_repr.ndim == 1:
        Z_repr = Z_repr[:, None]
    if Z_repr.shape[0] != n1:
        raise ShapeError(f"Z has {Z_repr.shape[0]} rows, scores have {n1}")
    if spec.kind == "krr" and Z_repr.shape != (n1, n1):
        raise ShapeError("KRR needs the (n1, n1) Gram matrix of Z")
    rng = np.random.default_rng(rng)
    labels = make_folds(n1, folds, rng)
    child_seeds = rng.integers(0, 2**63 - 1, size=(folds, P))
    pred = np.empty_like(S)
    lambdas = np.full((folds, P), np.nan) if spec.kind == "krr" else None
    for f in range(folds):
        ev = labels == f
        tr = ~ev
        if spec.kind == "krr":
            pred[ev], lambdas[f] = _krr_loo_multi(
                Z_repr[np.ix_(tr, tr)], S[tr], Z_repr[np.ix_(ev, tr)], spec.krr_lambda_grid
            )
        elif spec.kind == "gbt":
            for p in range(P):
                pred[ev, p] = gbt_fit_predict(
                    Z_repr[tr], S[tr, p], Z_repr[ev], spec, rng=int(child_seeds[f, p])
                )
        else:
            for p in range(P):
                pred[ev, p] = spec.oracle_fn(Z_repr[ev], p)
    resid = S - pred
    if not np.all(np.isfinite(resid)):
        raise NumericalError("non-finite residuals from the regression step")
    return ResidualScores(resid, labels, np.mean(resid ** 2, axis=0), lambdas)
