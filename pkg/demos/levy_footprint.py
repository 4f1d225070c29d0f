"""
Moments and complete monotonicity of the limit law
==================================================

xi(1) is infinitely divisible.  Its Levy measure nu is never built; instead
``g(theta) = 1 - K h(theta)**2`` equals ``int x exp(-theta x) nu(dx)`` and
must be completely monotone, with ``g(0) = 1`` and ``-g'(0) = 2K/pi``.
"""

import math

import numpy as np

from sdbbm import complete_monotonicity_probe, degenerate_limit_curve, q_function, xi_cumulants

K = 1.0
thetas = np.round(np.arange(1, 201) * 0.1, 12)
rep = complete_monotonicity_probe(K, thetas, max_order=4, step=1e-3)
print("signs alternate up to order 4:", rep.alternation_ok, f"(worst {rep.worst_margin:.2e})")
print(f"first moment {rep.first_moment:.5f} (exact 1), second {rep.second_moment:.6f} "
      f"(exact {2 * K / math.pi:.6f})")
print("mean and variance of xi(1):", xi_cumulants(K, 1.0))

# With sigma not integrable the limit is degenerate.  Capping the branching
# to a window of size ~K gives a truncated exponent that creeps toward theta.
for k, v in degenerate_limit_curve(1.0, [1, 10, 100, 1000], step=0.05):
    print(f"K = {k:6.0f}: (1/K) int_0^K h^2 = {v:.4f}, 1 - 2 sqrt(2/(pi K)) = "
          f"{1 - 2 * math.sqrt(2 / (math.pi * k)):.4f}")

# Q(x) = sqrt(x) e^{-x} int_0^x e^y y^{-1/2} dy is bounded and tends to 1.
x = np.array([0.0, 0.5, 1.0, 2.26, 10.0, 1e4])
print("Q:", np.round(q_function(x), 6))
