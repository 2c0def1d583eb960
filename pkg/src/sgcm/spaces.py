"""Semimetrics on the supported object spaces.

Every space exposes a scalar distance between two objects and a vectorised
pairwise form returning the full (cross-)distance matrix.  The pairwise forms
are what the test pipeline uses; the scalar forms are kept for clarity and as
cross-checks.

Spaces
------
euclidean
    Rows of a real matrix, Euclidean distance.
sphere
    Unit vectors, great-circle distance ``arccos <u, v>``.
fisher_rao / hellinger
    Densities on a shared grid; the inner product of square-root densities is
    taken with the trapezoid rule.
wasserstein (p = 1, 2)
    One-dimensional empirical distributions given as point clouds, compared
    through their quantile functions.
curves
    Time-indexed curves valued in a metric space, compared with the weighted
    L^p distance of the pointwise base distance.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    DegenerateDataError,
    DimensionError,
    EmptyInputError,
    GridError,
    InputError,
    InvariantError,
    ParameterError,
)

UNIT_NORM_TOL = 1e-9
MASS_TOL = 1e-6
KDE_GRID_SIZE = 512
KDE_PAD_BANDWIDTHS = 3.0

# elements per broadcast block in the pairwise Wasserstein / curve loops
_BLOCK = 2_000_000


def _as_rows(x, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise InputError(f"{name} must be 1-D or 2-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        bad = int(np.argwhere(~np.isfinite(x))[0, 0])
        raise InputError(f"{name} has a non-finite entry in row {bad}")
    return x


def _finish_pairwise(D, symmetric):
    D = np.maximum(D, 0.0)
    if symmetric:
        D = 0.5 * (D + D.T)
        np.fill_diagonal(D, 0.0)
    return D


# ----------------------------------------------------------------------------
# Euclidean
# ----------------------------------------------------------------------------

def euclidean_distance(x, y):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(np.sqrt(np.sum((x - y) ** 2)))


def euclidean_pairwise(a, b=None):
    """Euclidean distances between the rows of `a` and `b` (default ``a``)."""
    symmetric = b is None
    a = _as_rows(a, "a")
    b = a if symmetric else _as_rows(b, "b")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[1] == 1:
        D = np.abs(a - b.T)
    else:
        sq = (
            np.sum(a * a, axis=1)[:, None]
            + np.sum(b * b, axis=1)[None, :]
            - 2.0 * a @ b.T
        )
        D = np.sqrt(np.maximum(sq, 0.0))
    return _finish_pairwise(D, symmetric)


# ----------------------------------------------------------------------------
# Sphere
# ----------------------------------------------------------------------------

def check_unit_rows(u, name="u", tol=UNIT_NORM_TOL):
    """Raise `InvariantError` naming the first row whose norm is not 1."""
    u = _as_rows(u, name)
    dev = np.abs(np.linalg.norm(u, axis=1) - 1.0)
    if np.any(dev > tol):
        row = int(np.argmax(dev > tol))
        raise InvariantError(
            f"{name}: row {row} (0-based) is not a unit vector (|norm - 1| = {dev[row]:.3g})"
        )
    return u


def great_circle_distance(u, v):
    u = check_unit_rows(np.atleast_1d(u)[None, :], "u")[0]
    v = check_unit_rows(np.atleast_1d(v)[None, :], "v")[0]
    if u.shape != v.shape:
        raise DimensionError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return float(arc_from_chord(np.linalg.norm(u - v)))


def arc_from_chord(c):
    """Geodesic angle between unit vectors at chord length `c`.

    ``2 asin(c / 2)`` is exact at coincident points, where ``arccos`` of a
    rounded inner product is off by about 1e-8.
    """
    return 2.0 * np.arcsin(np.clip(np.asarray(c) / 2.0, 0.0, 1.0))


def _chord_pairwise(a, b):
    return _lp_rows_pairwise(a, b, 2, np.ones(a.shape[1]))


def great_circle_pairwise(a, b=None):
    symmetric = b is None
    a = check_unit_rows(a, "a")
    b = a if symmetric else check_unit_rows(b, "b")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return _finish_pairwise(arc_from_chord(_chord_pairwise(a, b)), symmetric)


# ----------------------------------------------------------------------------
# Densities: Fisher-Rao and Hellinger
# ----------------------------------------------------------------------------

def trapezoid_weights(grid):
    """Weights w with ``sum(w * f) == trapezoid(f, grid)``."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise GridError("grid needs at least two abscissae")
    h = np.diff(grid)
    if np.any(h <= 0):
        raise GridError("grid must be strictly increasing")
    w = np.zeros_like(grid)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


@dataclass(frozen=True)
class DensityGrid:
    """A probability density tabulated on a strictly increasing grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.shape != values.shape:
            raise GridError("grid and values must have the same length")
        w = trapezoid_weights(grid)
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise InvariantError("density values must be finite and nonnegative")
        mass = float(w @ values)
        if abs(mass - 1.0) > MASS_TOL:
            raise InvariantError(f"density integrates to {mass:.8g}, not 1")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @classmethod
    def normalized(cls, grid, values):
        values = np.clip(np.asarray(values, dtype=float), 0.0, None)
        mass = trapezoid_weights(grid) @ values
        if mass <= 0:
            raise DegenerateDataError("density has zero mass on its grid")
        return cls(grid, values / mass)


def _sqrt_chord(f, g):
    # || sqrt f - sqrt g || in the trapezoid inner product; equals
    # sqrt(2 - 2 BC) with BC the Bhattacharyya coefficient
    if f.grid.shape != g.grid.shape or not np.array_equal(f.grid, g.grid):
        raise GridError("densities are tabulated on different grids")
    w = trapezoid_weights(f.grid)
    return float(np.sqrt(np.sum(w * (np.sqrt(f.values) - np.sqrt(g.values)) ** 2)))


def fisher_rao_distance(f, g):
    """``arccos BC``, computed stably as the arc over the chord."""
    return float(arc_from_chord(_sqrt_chord(f, g)))


def hellinger_distance(f, g):
    """``sqrt(1 - BC)``."""
    return min(_sqrt_chord(f, g) / np.sqrt(2.0), 1.0)


def sqrt_density_features(values, grid):
    """Rows ``sqrt(f_i * w)`` so that plain dot products are trapezoid inner
    products of square-root densities."""
    values = _as_rows(values, "values")
    w = trapezoid_weights(grid)
    if values.shape[1] != w.size:
        raise GridError("density rows do not match the grid length")
    return np.sqrt(np.clip(values, 0.0, None) * w[None, :])


def fisher_rao_pairwise(a, b=None):
    """Fisher-Rao distances between rows of sqrt-density features."""
    symmetric = b is None
    a = _as_rows(a, "a")
    b = a if symmetric else _as_rows(b, "b")
    if a.shape[1] != b.shape[1]:
        raise GridError("feature rows come from different grids")
    return _finish_pairwise(arc_from_chord(_chord_pairwise(a, b)), symmetric)


def hellinger_pairwise(a, b=None):
    symmetric = b is None
    a = _as_rows(a, "a")
    b = a if symmetric else _as_rows(b, "b")
    if a.shape[1] != b.shape[1]:
        raise GridError("feature rows come from different grids")
    H = np.minimum(_chord_pairwise(a, b) / np.sqrt(2.0), 1.0)
    return _finish_pairwise(H, symmetric)


def silverman_bandwidth(points):
    """Silverman's rule ``0.9 min(sd, IQR/1.34) m^(-1/5)``."""
    points = np.asarray(points, dtype=float)
    m = points.size
    sd = np.std(points, ddof=1) if m > 1 else 0.0
    q75, q25 = np.percentile(points, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = sd
    if spread <= 0:
        raise DegenerateDataError("point cloud is constant; no KDE bandwidth")
    return 0.9 * spread * m ** (-0.2)


def kde_on_grid(clouds, n_grid=KDE_GRID_SIZE, pad=KDE_PAD_BANDWIDTHS):
    """Gaussian KDE of every cloud on one pooled grid.

    Parameters
    ----------
    clouds : sequence of 1-D arrays, or an (n, m) array
    n_grid : int
        Number of grid points.
    pad : float
        The grid spans the pooled min/max extended by `pad` times the largest
        bandwidth on each side.

    Returns
    -------
    grid : (n_grid,) array
    values : (n, n_grid) array of densities, each renormalised to unit
        trapezoid mass.
    """
    clouds = [np.asarray(c, dtype=float).ravel() for c in clouds]
    if not clouds or any(c.size == 0 for c in clouds):
        raise EmptyInputError("every cloud needs at least one point")
    bw = np.array([silverman_bandwidth(c) for c in clouds])
    lo = min(c.min() for c in clouds) - pad * bw.max()
    hi = max(c.max() for c in clouds) + pad * bw.max()
    grid = np.linspace(lo, hi, n_grid)
    w = trapezoid_weights(grid)
    values = np.empty((len(clouds), n_grid))
    for i, (c, h) in enumerate(zip(clouds, bw)):
        u = (grid[:, None] - c[None, :]) / h
        values[i] = np.exp(-0.5 * u * u).sum(axis=1) / (c.size * h * np.sqrt(2 * np.pi))
        values[i] /= w @ values[i]
    return grid, values


# ----------------------------------------------------------------------------
# One-dimensional Wasserstein
# ----------------------------------------------------------------------------

def _check_order(p):
    if p not in (1, 2):
        raise ParameterError(f"Wasserstein order must be 1 or 2, got {p}")


def quantile_grid_values(sorted_points, levels):
    """Empirical quantile function of a sorted sample at midpoint levels.

    Evaluates ``x_(ceil(q m))`` at ``q_l = (l - 1/2) / levels`` using integer
    arithmetic so that ``levels == m`` returns the sample itself.
    """
    m = sorted_points.size
    ell = np.arange(1, levels + 1)
    idx = ((2 * ell - 1) * m + 2 * levels - 1) // (2 * levels) - 1
    return sorted_points[idx]


def wasserstein_distance_1d(a, b, p=1):
    _check_order(p)
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise EmptyInputError("Wasserstein distance of an empty cloud")
    L = max(a.size, b.size)
    qa = quantile_grid_values(a, L) if a.size != L else a
    qb = quantile_grid_values(b, L) if b.size != L else b
    return float(np.mean(np.abs(qa - qb) ** p) ** (1.0 / p))


def sorted_clouds(clouds):
    """Sort each cloud; returns a 2-D array when sizes agree, else a list."""
    if isinstance(clouds, np.ndarray) and clouds.ndim == 2:
        if clouds.shape[1] == 0:
            raise EmptyInputError("clouds have no points")
        return np.sort(clouds, axis=1)
    out = [np.sort(np.asarray(c, dtype=float).ravel()) for c in clouds]
    if any(c.size == 0 for c in out):
        raise EmptyInputError("every cloud needs at least one point")
    if len({c.size for c in out}) == 1:
        return np.vstack(out)
    return out


def _lp_rows_pairwise(a, b, p, weights=None):
    """(sum_k w_k |a_ik - b_jk|^p)^(1/p) for all row pairs, in blocks."""
    na, k = a.shape
    nb = b.shape[0]
    if weights is None:
        weights = np.full(k, 1.0 / k)
    out = np.empty((na, nb))
    step = max(1, _BLOCK // max(1, nb * k))
    for s in range(0, na, step):
        diff = np.abs(a[s:s + step, None, :] - b[None, :, :])
        if p != 1:
            diff = diff ** p
        out[s:s + step] = diff @ weights
    return out ** (1.0 / p) if p != 1 else out


def wasserstein_pairwise(a, b=None, p=1):
    """W_p distances between 1-D empirical distributions.

    `a` and `b` are (n, m) arrays of clouds (rows) or lists of clouds of
    possibly different sizes.
    """
    _check_order(p)
    symmetric = b is None
    a = sorted_clouds(a)
    b = a if symmetric else sorted_clouds(b)
    if isinstance(a, np.ndarray) and isinstance(b, np.ndarray) and a.shape[1] == b.shape[1]:
        D = _lp_rows_pairwise(a, b, p)
    else:
        D = np.array([[wasserstein_distance_1d(x, y, p) for y in b] for x in a])
    return _finish_pairwise(D, symmetric)


# ----------------------------------------------------------------------------
# Curves valued in a metric space
# ----------------------------------------------------------------------------

_BASE_PAIR = {
    "sphere": lambda u, v: arc_from_chord(np.sqrt(np.sum((u - v) ** 2, axis=-1))),
    "euclidean": lambda u, v: np.sqrt(np.sum((u - v) ** 2, axis=-1)),
}


@dataclass(frozen=True)
class MetricCurve:
    """A curve t -> M sampled at `times`, with quadrature `weights`.

    The weights default to trapezoid weights on the time grid.
    """

    times: np.ndarray
    values: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = _as_rows(self.values, "values")
        if times.ndim != 1 or np.any(np.diff(times) <= 0):
            raise GridError("times must be strictly increasing")
        if values.shape[0] != times.size:
            raise GridError("one value per time point is required")
        w = trapezoid_weights(times) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != times.shape:
            raise GridError("one weight per time point is required")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", w)


def lp_function_distance(f, g, p=1, base="sphere"):
    if f.times.shape != g.times.shape or not (
        np.array_equal(f.times, g.times) and np.array_equal(f.weights, g.weights)
    ):
        raise GridError("curves live on different time grids")
    if f.values.shape != g.values.shape:
        raise DimensionError("curves take values in different dimensions")
    if base == "sphere":
        check_unit_rows(f.values, "f")
        check_unit_rows(g.values, "g")
    d = _BASE_PAIR[base](f.values, g.values)
    return float(np.sum(f.weights * d ** p) ** (1.0 / p))


def curves_pairwise(a, b=None, weights=None, p=1, base="sphere"):
    """D_p distances between curve samples stored as (n, T, d) arrays."""
    symmetric = b is None
    a = np.asarray(a, dtype=float)
    b = a if symmetric else np.asarray(b, dtype=float)
    if a.ndim != 3 or b.ndim != 3 or a.shape[1:] != b.shape[1:]:
        raise GridError(f"curve arrays must be (n, T, d) with a shared grid, got {a.shape}, {b.shape}")
    if weights is None:
        raise GridError("curve quadrature weights are required")
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (a.shape[1],):
        raise GridError("one weight per time point is required")
    if base == "sphere":
        for name, arr in (("a", a), ("b", b)):
            for i, curve in enumerate(arr):
                try:
                    check_unit_rows(curve, f"{name}[{i}]")
                except InvariantError as exc:
                    raise InvariantError(f"curve {i}: {exc}") from None
    base_fn = _BASE_PAIR[base]
    na, nb, T = a.shape[0], b.shape[0], a.shape[1]
    out = np.empty((na, nb))
    step = max(1, _BLOCK // max(1, nb * T * a.shape[2]))
    for s in range(0, na, step):
        d = base_fn(a[s:s + step, None], b[None])
        out[s:s + step] = (d ** p) @ weights
    return _finish_pairwise(out ** (1.0 / p), symmetric)


# ----------------------------------------------------------------------------
# Negative type
# ----------------------------------------------------------------------------

def check_negative_type(D, trials=1000, rng=None):
    """Largest value of ``a' D a`` over random zero-sum unit vectors ``a``.

    A semimetric of negative type gives values <= 0, so a result at or below
    a small tolerance is consistent with negative type.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InputError("D must be square")
    n = D.shape[0]
    if n < 2:
        raise EmptyInputError("negative-type check needs at least two points")
    if trials < 1:
        raise ParameterError("trials must be positive")
    rng = np.random.default_rng(rng)
    alpha = rng.standard_normal((trials, n))
    alpha -= alpha.mean(axis=1, keepdims=True)
    alpha /= np.linalg.norm(alpha, axis=1, keepdims=True)
    values = np.einsum("ti,ij,tj->t", alpha, D, alpha)
    return float(values.max())


# ----------------------------------------------------------------------------
# Metric objects used by the pipeline
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Metric:
    """A semimetric on whole samples.

    ``prepare`` maps a raw sample to a row-indexable representation once
    (e.g. KDE on a pooled grid); ``pairwise(a, b=None)`` then takes prepared
    rows.  Instances are picklable when the callables are module-level.
    """

    name: str
    pairwise: Callable
    prepare: Callable = field(default=None)

    def prepared(self, data):
        return data if self.prepare is None else self.prepare(data)

    def __call__(self, a, b=None):
        return self.pairwise(a, b)


def _prepare_rows(data):
    return _as_rows(data, "data")


def _prepare_sphere(data):
    return check_unit_rows(data, "data")


def _prepare_sqrt_kde(data):
    grid, values = kde_on_grid(data)
    return sqrt_density_features(values, grid)


def _prepare_sqrt_density(data):
    # data is (grid, values)
    grid, values = data
    for i, v in enumerate(np.atleast_2d(values)):
        mass = trapezoid_weights(grid) @ v
        if np.any(v < 0) or abs(mass - 1.0) > MASS_TOL:
            raise InvariantError(f"row {i} is not a normalized density (mass {mass:.6g})")
    return sqrt_density_features(values, grid)


def _prepare_clouds(data):
    return sorted_clouds(data)


class _WassersteinPairwise:
    def __init__(self, p):
        self.p = p

    def __call__(self, a, b=None):
        return wasserstein_pairwise(a, b, p=self.p)


class CurvePairwise:
    """Pairwise D_p on (n, T, d) curve arrays with fixed quadrature weights."""

    def __init__(self, weights, p=1, base="sphere"):
        self.weights = np.asarray(weights, dtype=float)
        self.p = p
        self.base = base

    def __call__(self, a, b=None):
        return curves_pairwise(a, b, weights=self.weights, p=self.p, base=self.base)


def curve_metric(times, p=1, base="sphere", weights=None):
    times = np.asarray(times, dtype=float)
    w = trapezoid_weights(times) if weights is None else np.asarray(weights, float)
    return Metric(f"curve_l{p}_{base}", CurvePairwise(w, p, base), prepare=None)


METRICS = {
    "euclidean": Metric("euclidean", euclidean_pairwise, _prepare_rows),
    "sphere": Metric("sphere", great_circle_pairwise, _prepare_sphere),
    "w1": Metric("w1", _WassersteinPairwise(1), _prepare_clouds),
    "w2": Metric("w2", _WassersteinPairwise(2), _prepare_clouds),
    "fisher_rao": Metric("fisher_rao", fisher_rao_pairwise, _prepare_sqrt_kde),
    "hellinger": Metric("hellinger", hellinger_pairwise, _prepare_sqrt_kde),
    "fisher_rao_density": Metric("fisher_rao_density", fisher_rao_pairwise, _prepare_sqrt_density),
    "hellinger_density": Metric("hellinger_density", hellinger_pairwise, _prepare_sqrt_density),
}


def get_metric(metric):
    """Resolve a registry name or pass a `Metric` through."""
    if isinstance(metric, Metric):
        return metric
    try:
        return METRICS[metric]
    except (KeyError, TypeError):
        raise ParameterError(
            f"unknown metric {metric!r}; choose from {sorted(METRICS)}"
        ) from None
