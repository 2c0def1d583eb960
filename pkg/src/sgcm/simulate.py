"""Data-generating processes and the Monte Carlo size/power harness.

Families
--------
low_dim
    Gaussian-damped sine ``f_a(z) = exp(-z^2/2) sin(a z)`` with scenarios
    ``null``, ``dgp1_1`` (linear leak), ``dgp1_2`` (latent U, even/odd) and
    ``dgp1_3`` (latent U coupled to Z).
high_dim
    Post-nonlinear noise model with d-dimensional Z; ``scenario="alt"``
    switches on the direct effect ``b = 0.5``.
distributional
    X and Y are point clouds whose mean (or log-variance) follows a linear
    index in a 10-dimensional Z; ``c`` shares X's noise with Y.

Every generator records which random sources feed X and Y so that tests can
audit that null designs share nothing but Z.
"""

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ParameterError, StudyError
from .pipeline import TestConfig, run_test

LOW_DIM_SCENARIOS = ("null", "dgp1_1", "dgp1_2", "dgp1_3")
HIGH_DIM_SCENARIOS = ("null", "alt")
DIST_KINDS = ("mean_varying", "variance_varying")
SIGNALS = (0.0, 0.05, 0.10, 0.15, 0.20)

DESK_SCALE = {"B": 500, "replications": 300}
FULL_SCALE = {"B": 2000, "replications": 1000}

CSV_HEADER = ("family", "scenario", "a", "d", "c", "n", "B", "replications",
              "rejection_rate", "se", "wall_time_s")


def damped_sine(z, a):
    return np.exp(-0.5 * z * z) * np.sin(a * z)


@dataclass(frozen=True)
class DgpSpec:
    family: str
    n: int = 200
    scenario: str = "null"
    a: int = 2
    d: int = 10
    b: float = None
    dist_kind: str = "mean_varying"
    c: float = 0.0
    m: int = 150

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ParameterError("n and m must be positive")
        if self.family == "low_dim":
            if self.a not in (2, 4, 6):
                raise ParameterError(f"a must be 2, 4 or 6, got {self.a}")
            if self.scenario not in LOW_DIM_SCENARIOS:
                raise ParameterError(f"low_dim scenario must be one of {LOW_DIM_SCENARIOS}")
        elif self.family == "high_dim":
            if not 10 <= self.d <= 50:
                raise ParameterError(f"high_dim needs 10 <= d <= 50, got {self.d}")
            if self.scenario not in HIGH_DIM_SCENARIOS:
                raise ParameterError(f"high_dim scenario must be one of {HIGH_DIM_SCENARIOS}")
            if self.b is not None and self.b not in (0.0, 0.5):
                raise ParameterError("b must be 0 or 0.5")
        elif self.family == "distributional":
            if self.dist_kind not in DIST_KINDS:
                raise ParameterError(f"dist_kind must be one of {DIST_KINDS}")
            if not any(math.isclose(self.c, s, abs_tol=1e-12) for s in SIGNALS):
                raise ParameterError(f"c must be one of {SIGNALS}, got {self.c}")
        else:
            raise ParameterError(f"unknown family {self.family!r}")

    @property
    def direct_effect(self):
        if self.b is not None:
            return self.b
        return 0.5 if self.scenario == "alt" else 0.0

    @property
    def label(self):
        return self.dist_kind if self.family == "distributional" else self.scenario

    @property
    def is_null(self):
        if self.family == "low_dim":
            return self.scenario == "null"
        if self.family == "high_dim":
            return self.direct_effect == 0.0
        return self.c == 0.0


@dataclass
class SimData:
    """One simulated sample with source bookkeeping."""

    x: object
    y: object
    z: np.ndarray
    sources: dict = field(default_factory=dict)

    def shared_sources(self):
        return self.sources["x"] & self.sources["y"]


def _normalized_direction(rng, d):
    beta = rng.uniform(-1.0, 1.0, size=d)
    return beta / np.sum(np.abs(beta))


def gen_low_dim(spec, rng):
    rng = np.random.default_rng(rng)
    n = spec.n
    z = rng.standard_normal(n)
    eps_x = rng.standard_normal(n)
    eps_y = rng.standard_normal(n)
    f = damped_sine(z, spec.a)
    x = f + 0.3 * eps_x
    y = f + 0.3 * eps_y
    sx, sy = {"z", "eps_x"}, {"z", "eps_y"}
    if spec.scenario == "dgp1_1":
        y = y + 0.2 * x
        sy |= sx
    elif spec.scenario in ("dgp1_2", "dgp1_3"):
        if spec.scenario == "dgp1_2":
            u = rng.standard_normal(n)
            su = {"u"}
        else:
            u = damped_sine(z, 1.0) + rng.standard_normal(n)
            su = {"z", "eps_u"}
        x = x + 0.3 * (u * u - 1.0)
        y = y + 0.3 * u
        sx |= su
        sy |= su
    return SimData(x, y, z, {"x": frozenset(sx), "y": frozenset(sy)})


def gen_high_dim(spec, rng):
    rng = np.random.default_rng(rng)
    n, d = spec.n, spec.d
    z = rng.standard_normal((n, d))
    beta_x = _normalized_direction(rng, d)
    beta_y = _normalized_direction(rng, d)
    eps_x = rng.standard_normal(n)
    eps_y = rng.standard_normal(n)
    b = spec.direct_effect
    x = np.sin(z @ beta_x + 0.5 * eps_x)
    y = np.cos(z @ beta_y + b * x + 0.5 * eps_y)
    sx = {"z", "beta_x", "eps_x"}
    sy = {"z", "beta_y", "eps_y"} | (sx if b != 0 else set())
    return SimData(x, y, z, {"x": frozenset(sx), "y": frozenset(sy)})


def gen_distributional(spec, rng):
    rng = np.random.default_rng(rng)
    n, m = spec.n, spec.m
    z = rng.standard_normal((n, 10))
    beta_x = _normalized_direction(rng, 10)
    beta_y = _normalized_direction(rng, 10)
    eps_x = rng.standard_normal(n)
    eps_y = rng.standard_normal(n)
    ix = z @ beta_x + 0.5 * eps_x
    iy = z @ beta_y + spec.c * eps_x + 0.5 * eps_y
    noise_x = rng.standard_normal((n, m))
    noise_y = rng.standard_normal((n, m))
    if spec.dist_kind == "mean_varying":
        x = ix[:, None] + noise_x
        y = iy[:, None] + noise_y
    else:
        x = np.sqrt(np.exp(ix))[:, None] * noise_x
        y = np.sqrt(np.exp(iy))[:, None] * noise_y
    sx = {"z", "beta_x", "eps_x", "cloud_x"}
    sy = {"z", "beta_y", "eps_y", "cloud_y"} | ({"eps_x"} if spec.c != 0 else set())
    return SimData(x, y, z, {"x": frozenset(sx), "y": frozenset(sy)})


GENERATORS = {
    "low_dim": gen_low_dim,
    "high_dim": gen_high_dim,
    "distributional": gen_distributional,
}


def generate(spec, rng):
    return GENERATORS[spec.family](spec, rng)


def replication_seed(master, r):
    """Seed of replication r: child r of the master seed sequence."""
    master = master if isinstance(master, np.random.SeedSequence) else np.random.SeedSequence(master)
    return np.random.SeedSequence(master.entropy, spawn_key=master.spawn_key + (r,))


def _one_replication(args):
    spec, config, master, r = args
    rep = replication_seed(master, r)
    data_seed, test_seed = replication_seed(rep, 0), replication_seed(rep, 1)
    with threadpool_limits(1):
        data = generate(spec, np.random.default_rng(data_seed))
        res = run_test(data.x, data.y, data.z, config, seed=test_seed)
    return res.reject, res.p_value, res.statistic


def resolve_workers(workers=None):
    """Explicit count, else ``SGCM_THREADS``, else 1."""
    if workers is None:
        env = os.environ.get("SGCM_THREADS")
        workers = int(env) if env else 1
    return max(1, int(workers))


@dataclass
class StudyRow:
    family: str
    scenario: str
    a: int
    d: int
    c: float
    n: int
    B: int
    replications: int
    rejection_rate: float
    se: float
    wall_time_s: float
    settings: dict = field(default_factory=dict, repr=False)
    rejects: np.ndarray = field(default=None, repr=False)
    p_values: np.ndarray = field(default=None, repr=False)

    def csv_values(self, timing=True):
        wall = f"{self.wall_time_s:.3f}" if timing else "NA"
        return [self.family, self.scenario, self.a, self.d, repr(float(self.c)), self.n,
                self.B, self.replications, repr(float(self.rejection_rate)),
                repr(float(self.se)), wall]


@dataclass
class StudyReport:
    rows: list = field(default_factory=list)

    def extend(self, other):
        self.rows.extend(other.rows)
        return self

    def to_csv(self, path_or_buf=None, timing=True, comment=None):
        """Write the rows as CSV; returns the text when no target is given.

        With ``timing=False`` the wall-time column holds ``NA`` so that the
        file is a pure function of the inputs and seed.
        """
        buf = io.StringIO()
        if comment:
            for line in comment.splitlines():
                buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in self.rows:
            w.writerow(row.csv_values(timing))
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
        return text


def monte_carlo_study(spec, config=None, replications=None, seed=0, workers=None,
                      full_scale=False):
    """Rejection rate of the test over independent replications.

    Replication r draws its data and test seeds from child r of `seed`, so
    the outcome does not depend on `workers`.  B and the replication count
    default to the desk-scale values (full-scale with ``full_scale=True``).
    """
    scale = FULL_SCALE if full_scale else DESK_SCALE
    if config is None:
        config = TestConfig(B=scale["B"])
    if replications is None:
        replications = scale["replications"]
    if replications < 1:
        raise ParameterError("replications must be at least 1")
    workers = resolve_workers(workers)
    master = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    tasks = [(spec, config, master, r) for r in range(replications)]

    t0 = time.perf_counter()
    results = [None] * replications
    if workers == 1:
        for r, task in enumerate(tasks):
            try:
                results[r] = _one_replication(task)
            except Exception as exc:
                raise StudyError(r, exc) from exc
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_one_replication, t) for t in tasks]
            for r, fut in enumerate(futures):
                try:
                    results[r] = fut.result()
                except Exception as exc:
                    for f in futures:
                        f.cancel()
                    raise StudyError(r, exc) from exc
    wall = time.perf_counter() - t0

    rejects = np.array([res[0] for res in results], dtype=bool)
    rate = float(rejects.mean())
    row = StudyRow(
        family=spec.family,
        scenario=spec.label,
        a=spec.a,
        d=spec.d if spec.family != "low_dim" else 1,
        c=spec.c,
        n=spec.n,
        B=config.B,
        replications=replications,
        rejection_rate=rate,
        se=math.sqrt(rate * (1.0 - rate) / replications),
        wall_time_s=wall,
        settings={"dgp": spec, "config": config.describe(), "seed": master.entropy},
        rejects=rejects,
        p_values=np.array([res[1] for res in results]),
    )
    return StudyReport([row])
