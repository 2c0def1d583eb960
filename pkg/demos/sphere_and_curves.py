"""
Non-Euclidean variables: sphere points and sphere-valued curves
===============================================================

Z lives on the unit sphere S^2, X is a path on the sphere sampled at a
common time grid, and Y is real.  Every space gets an exponential kernel
exp(-gamma d) with gamma from the median heuristic; geodesic distance on the
sphere and the integrated geodesic distance between curves are both of
negative type, so the kernels are positive definite.
"""

import numpy as np

from sgcm import TestConfig, curve_metric, run_test
from sgcm.kernels import exponential_kernel_matrix, median_heuristic, min_eigenvalue
from sgcm.spaces import great_circle_pairwise

rng = np.random.default_rng(3)
n = 200
times = np.linspace(0, 1, 15)


def unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


z = unit(rng.normal(size=(n, 3)))

# each curve rotates its starting point z_i about the north pole at its own
# speed s_i, unrelated to z, plus a small wobble
speed = rng.uniform(0.5, 1.5, size=n)
angle = np.pi * speed[:, None, None] * times[None, :, None]
start = z[:, None, :]
x = np.concatenate([
    start[..., :1] * np.cos(angle) - start[..., 1:2] * np.sin(angle),
    start[..., :1] * np.sin(angle) + start[..., 1:2] * np.cos(angle),
    np.broadcast_to(start[..., 2:], (n, times.size, 1)),
], axis=-1)
x = unit(x + 0.1 * rng.normal(size=x.shape))

y_null = z[:, 2] + 0.3 * rng.normal(size=n)
y_alt = y_null + 2.0 * (speed - 1)   # Y also sees the speed, which z cannot explain

# kernels on the sphere are PSD up to rounding
D = great_circle_pairwise(z)
K = exponential_kernel_matrix(D, median_heuristic(D))
print("min eigenvalue of sphere Gram:", min_eigenvalue(K))

config = TestConfig(B=1000, x_metric=curve_metric(times, p=1), z_metric="sphere")
for label, y in (("null", y_null), ("alternative", y_alt)):
    res = run_test(x, y[:, None], z, config, seed=11)
    print(f"{label:11s} p={res.p_value:.3f}  reject={res.reject}  learner={res.diagnostics['learner']}")
