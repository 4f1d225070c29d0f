"""
Solving the half-order Volterra equation
========================================

The Laplace functional of the limit process is read off the nonnegative
solution of ``y = forcing - K J^{1/2}(y**2)``.  This walk-through solves it,
checks it against a fixed-point iteration and watches the extended solution
creep up to its ceiling ``1/sqrt(K)``.
"""

import math

import numpy as np

from sdbbm import LaplaceSpec, SolverGrid, equation_residual, log_laplace, picard_solve, solve_lambda
from sdbbm import solve_lambda_extended

# A two-time functional: theta = 1 at t = 0.5 and theta = 2 at t = 1.
spec = LaplaceSpec.from_pairs([(1.0, 0.5), (2.0, 1.0)])
grid = SolverGrid.from_step(1.0, 1e-3)
lam = solve_lambda(spec, K=1.0, grid=grid)
print("Lambda at s = 0.25, 0.5, 0.75, 1:", np.round(lam.at([0.25, 0.5, 0.75, 1.0]), 6))

# Nothing happens before 1 - t_n; here t_n = 1 so the solution starts at once.
# With a single late time the first half is exactly zero.
late = solve_lambda(LaplaceSpec.single(1.0, 0.5), 1.0, grid)
print("max on [0, 0.5):", np.abs(late.values[late.nodes < 0.5]).max())

# Marching and Picard sweeps share weights but not algorithms.
pic = picard_solve(spec, 1.0, grid)
print(f"Picard sweeps {pic.iterations}, sup gap {np.abs(pic.values - lam.values).max():.2e}, "
      f"residual {equation_residual(lam):.2e}")

# The Laplace functional itself.
value = log_laplace(spec, 1.0, grid)
print(f"E exp(-xi(0.5) - 2 xi(1)) = {math.exp(value):.6f} (mean-only guess {math.exp(-2.5):.6f})")

# On a long interval the single-theta solution approaches 1/sqrt(K) slowly.
ext = solve_lambda_extended(1.0, 1.0, SolverGrid.from_step(200.0, 1e-2))
for S in (25, 50, 100, 200):
    print(f"S = {S:3d}: 1 - Lambda(S, 1) = {1 - ext.at(S):.4f}, sqrt(2/pi)/(2 sqrt S) = "
          f"{math.sqrt(2 / math.pi) / (2 * math.sqrt(S)):.4f}")
