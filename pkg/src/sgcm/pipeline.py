"""End-to-end SGCM conditional independence test.

`run_test` wires the pieces together:

1. split the sample into a basis part I2 and a statistic part I1;
2. on I2, build Gram matrices of X and Y and their empirical eigenfunctions,
   truncated by fraction of variance explained;
3. evaluate the eigenfunctions on I1 and regress each score on Z with
   cross-fitting;
4. combine the residuals with the Gram matrix of Z over I1 into the
   statistic and calibrate it with the multiplier bootstrap.

Everything is a deterministic function of the master seed.
"""

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import DegenerateDistancesError, DegenerateGramError, ParameterError, SampleSizeError
from .kernels import KernelSpec
from .regression import RegressorSpec, cross_fit_residuals
from .spaces import Metric, get_metric
from .spectral import EIGEN_FLOOR, evaluate_scores, truncated_eigensystem
from .statistic import FOURTH_MOMENT, core_matrix, wild_bootstrap_test

MIN_N = 20


@dataclass(frozen=True)
class SplitPlan:
    I1: np.ndarray
    I2: np.ndarray
    frac2: float

    @property
    def n1(self):
        return self.I1.size

    @property
    def n2(self):
        return self.I2.size


def split_sample(n, frac2=0.2, rng=None):
    """Uniformly random split with ``round(frac2 * n)`` indices in I2."""
    if not 0 < frac2 <= 0.5:
        raise ParameterError(f"frac2 must lie in (0, 0.5], got {frac2}")
    if n < 10:
        raise SampleSizeError(f"need at least 10 observations to split, got {n}")
    n2 = int(round(frac2 * n))
    if n2 < 2 or n - n2 < 2:
        raise SampleSizeError(f"split of n={n} with frac2={frac2} leaves a part below 2")
    perm = np.random.default_rng(rng).permutation(n)
    return SplitPlan(np.sort(perm[n2:]), np.sort(perm[:n2]), frac2)


@dataclass(frozen=True)
class TestConfig:
    """Settings of one test.  Defaults are the standard simulation settings.

    Metrics are registry names from `sgcm.spaces.METRICS` or `Metric`
    objects.  For a ``tensor_product`` kernel the variable's data is a tuple
    of component samples and its metric a matching tuple.

    ``learner="auto"`` picks gradient boosting on raw features when Z is
    Euclidean and kernel ridge regression on the Z Gram matrix otherwise.
    """

    __test__ = False  # not a pytest class

    frac2: float = 0.2
    tau: float = 0.8
    tau_x: float = None
    tau_y: float = None
    folds: int = 3
    B: int = 2000
    alpha: float = 0.05
    multiplier: str = "gaussian"
    learner: str = "auto"
    regressor: RegressorSpec = field(default_factory=RegressorSpec)
    x_metric: object = "euclidean"
    y_metric: object = "euclidean"
    z_metric: object = "euclidean"
    x_kernel: KernelSpec = field(default_factory=KernelSpec)
    y_kernel: KernelSpec = field(default_factory=KernelSpec)
    z_kernel: KernelSpec = field(default_factory=KernelSpec)
    eigen_floor: float = EIGEN_FLOOR

    def __post_init__(self):
        if self.learner not in ("auto", "gbt", "krr", "oracle_mean"):
            raise ParameterError(f"unknown learner {self.learner!r}")
        if self.multiplier not in FOURTH_MOMENT:
            raise ParameterError(f"unknown multiplier law {self.multiplier!r}")
        if not 0 < self.alpha < 1:
            raise ParameterError("alpha must lie in (0, 1)")
        for t in (self.tau, self.tau_x, self.tau_y):
            if t is not None and not 0 < t <= 1:
                raise ParameterError("tau must lie in (0, 1]")
        if self.B < 1 or self.folds < 2:
            raise ParameterError("B must be >= 1 and folds >= 2")

    def resolved_learner(self):
        if self.learner != "auto":
            return self.learner
        name = self.z_metric.name if isinstance(self.z_metric, Metric) else self.z_metric
        return "gbt" if name == "euclidean" else "krr"

    def describe(self):
        """JSON-friendly summary of the resolved settings."""
        out = {}
        for k, v in asdict(self).items():
            if k == "regressor":
                v = {kk: vv for kk, vv in v.items() if kk != "oracle_fn"}
                v["krr_lambda_grid"] = list(v["krr_lambda_grid"])
            elif isinstance(v, Metric) or k.endswith("_metric"):
                v = _metric_name(getattr(self, k))
            elif isinstance(v, dict) and "factors" in v:
                v = {kk: vv for kk, vv in v.items() if kk != "factors"}
            out[k] = v
        out["learner"] = self.resolved_learner()
        return out


def _metric_name(m):
    if isinstance(m, (tuple, list)):
        return [_metric_name(x) for x in m]
    return m.name if isinstance(m, Metric) else str(m)


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    statistic: float
    boot_quantile: float
    p_value: float
    reject: bool
    diagnostics: dict
    replicates: np.ndarray = field(default=None, repr=False, compare=False)

    def to_dict(self):
        return {
            "statistic": self.statistic,
            "boot_quantile": self.boot_quantile,
            "p_value": self.p_value,
            "reject": self.reject,
            "diagnostics": self.diagnostics,
        }


def _take(data, idx):
    if isinstance(data, np.ndarray):
        return data[idx]
    return [data[i] for i in idx]


class _VariableKernel:
    """A variable's prepared data together with a kernel fitted on a subset."""

    def __init__(self, name, data, metric, kernel):
        self.name = name
        self.kernel = kernel
        if kernel.family == "tensor_product":
            if not isinstance(data, (tuple, list)) or not isinstance(metric, (tuple, list)):
                raise ParameterError(f"{name}: tensor_product needs tuples of data and metrics")
            if not len(data) == len(metric) == len(kernel.factors):
                raise ParameterError(f"{name}: data, metric and factor counts differ")
            self.parts = [
                _VariableKernel(f"{name}[{i}]", d, m, k)
                for i, (d, m, k) in enumerate(zip(data, metric, kernel.factors))
            ]
        else:
            self.parts = None
            self.metric = get_metric(metric)
            self.prep = self.metric.prepared(data)
        self.scale = None

    def __len__(self):
        return len(self.parts[0]) if self.parts else len(self.prep)

    def fit(self, idx):
        """Gram matrix over `idx`; the bandwidth is chosen on these points."""
        if self.parts:
            G = self.parts[0].fit(idx)
            for part in self.parts[1:]:
                G = G * part.fit(idx)
            return G
        D = self.metric(_take(self.prep, idx))
        try:
            self.scale = self.kernel.fit_scale(D)
        except DegenerateDistancesError:
            raise DegenerateGramError(
                f"{self.name} is constant on the {len(idx)} points used to fit its kernel"
            ) from None
        return self.kernel.gram(D, self.scale)

    def cross(self, rows, cols):
        if self.parts:
            G = self.parts[0].cross(rows, cols)
            for part in self.parts[1:]:
                G = G * part.cross(rows, cols)
            return G
        D = self.metric(_take(self.prep, rows), _take(self.prep, cols))
        return self.kernel.gram(D, self.scale)

    def scales(self):
        return [p.scale for p in self.parts] if self.parts else self.scale


def _seed_streams(seed, k):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (i,)) for i in range(k)]


def _scores(var, plan, tau, floor):
    G = var.fit(plan.I2)
    try:
        es, choice, gap = truncated_eigensystem(G, tau, floor)
    except DegenerateGramError as exc:
        raise DegenerateGramError(f"{var.name}: {exc}") from None
    return evaluate_scores(es, var.cross(plan.I1, plan.I2)), es, choice, gap


def run_test(x, y, z, config=TestConfig(), seed=0):
    """Test ``X independent of Y given Z``.

    Parameters
    ----------
    x, y, z : samples of equal length n >= 20
        Arrays (rows are observations) or lists of objects, as expected by
        the configured metrics.
    config : TestConfig
    seed : int or SeedSequence
        Master seed; the split, both cross-fits and the bootstrap use
        fixed children of it.

    Returns
    -------
    TestResult
    """
    vx = _VariableKernel("X", x, config.x_metric, config.x_kernel)
    vy = _VariableKernel("Y", y, config.y_metric, config.y_kernel)
    vz = _VariableKernel("Z", z, config.z_metric, config.z_kernel)
    n = len(vx)
    if len(vy) != n or len(vz) != n:
        raise SampleSizeError(f"sample sizes differ: X {n}, Y {len(vy)}, Z {len(vz)}")
    if n < MIN_N:
        raise SampleSizeError(f"need at least {MIN_N} observations, got {n}")

    s_split, s_x, s_y, s_boot = _seed_streams(seed, 4)
    plan = split_sample(n, config.frac2, np.random.default_rng(s_split))

    tau_x = config.tau_x if config.tau_x is not None else config.tau
    tau_y = config.tau_y if config.tau_y is not None else config.tau
    sx, esx, chx, gapx = _scores(vx, plan, tau_x, config.eigen_floor)
    sy, esy, chy, gapy = _scores(vy, plan, tau_y, config.eigen_floor)

    Kz = vz.fit(plan.I1)
    learner = config.resolved_learner()
    spec = replace(config.regressor, kind=learner)
    if learner == "krr":
        z_repr = Kz
    else:
        if vz.parts is not None:
            raise ParameterError("feature-based learners need a single Euclidean Z")
        z_repr = np.asarray(_take(vz.prep, plan.I1), dtype=float)
    rx = cross_fit_residuals(sx, z_repr, spec, config.folds, np.random.default_rng(s_x))
    ry = cross_fit_residuals(sy, z_repr, spec, config.folds, np.random.default_rng(s_y))

    A = core_matrix(rx.values, ry.values, Kz)
    out = wild_bootstrap_test(A, config.B, config.alpha, config.multiplier, s_boot)

    diagnostics = {
        "n": n,
        "n1": plan.n1,
        "n2": plan.n2,
        "P": chx.P,
        "Q": chy.P,
        "fve_x": chx.fve_achieved,
        "fve_y": chy.fve_achieved,
        "eigenvalues_x": esx.eigenvalues.tolist(),
        "eigenvalues_y": esy.eigenvalues.tolist(),
        "spectral_gap_warning_x": gapx,
        "spectral_gap_warning_y": gapy,
        "gamma_x": vx.scales(),
        "gamma_y": vy.scales(),
        "gamma_z": vz.scales(),
        "learner": learner,
        "mse_x": rx.mse.tolist(),
        "mse_y": ry.mse.tolist(),
        "score_var_x": np.var(sx, axis=0).tolist(),
        "score_var_y": np.var(sy, axis=0).tolist(),
        "B": config.B,
        "alpha": config.alpha,
        "multiplier": config.multiplier,
    }
    return TestResult(out.statistic, out.quantile, out.p_value, out.reject, diagnostics, out.replicates)
