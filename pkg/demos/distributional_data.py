"""
Conditional independence between distributions
===============================================

Each observation of X and Y is a cloud of m points; its law has a mean that
depends on a 10-dimensional Z.  The signal c adds a shared shift to both
means, breaking conditional independence.  Clouds are compared with the
1-Wasserstein distance and the Z regressions use kernel ridge regression on
the Z Gram matrix.
"""

import numpy as np

from sgcm import DgpSpec, TestConfig, generate, run_test
from sgcm.spaces import wasserstein_pairwise, sorted_clouds

config = TestConfig(B=1000, learner="krr", x_metric="w1", y_metric="w1")

for c in (0.0, 0.2):
    data = generate(DgpSpec("distributional", n=200, m=150, c=c), np.random.default_rng(5))
    res = run_test(data.x, data.y, data.z, config, seed=5)
    print(f"c={c:.2f}  T={res.statistic:.4g}  p={res.p_value:.3f}  reject={res.reject}")

# W1 between clouds is the L1 distance between their quantile functions, so
# sorting once makes every pairwise distance a mean of absolute differences
clouds = sorted_clouds(data.x[:4])
D = wasserstein_pairwise(clouds, p=1)
print(np.round(D, 3))
print(np.allclose(D[0, 1], np.abs(clouds[0] - clouds[1]).mean()))
