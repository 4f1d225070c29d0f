"""Limit-law quantities of the occupation-time process xi.

Everything here is read off the Volterra solution; the Levy measure nu of
xi(1) is never built explicitly.  Its footprint is checked through

* ``1 - K h(theta)**2 = int x exp(-theta x) nu(dx)``, completely monotone in theta,
* ``int x nu(dx) = 1`` and ``int x**2 nu(dx) = 2K/pi``,

where ``h = Lambda(., 1)`` is the extended single-theta solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .volterra import (
    LambdaGrid,
    LaplaceSpec,
    SolverGrid,
    solve_lambda,
    solve_lambda_extended,
)

__all__ = [
    "LimitLawReport",
    "LevyMomentReport",
    "ConfigurationError",
    "log_laplace",
    "limit_law_report",
    "xi_cumulants",
    "small_s_slope_check",
    "complete_monotonicity_probe",
    "degenerate_limit_curve",
]


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class LimitLawReport:
    spec: LaplaceSpec
    K: float
    log_laplace: float
    mean_vector: tuple[float, ...]
    covariance_diag: tuple[float, ...]

    @property
    def laplace(self) -> float:
        return math.exp(self.log_laplace)


@dataclass(frozen=True)
class LevyMomentReport:
    K: float
    first_moment: float
    second_moment: float
    monotonicity_orders_checked: int
    alternation_ok: bool
    worst_margin: float
    thetas: np.ndarray
    g: np.ndarray


def log_laplace(
    spec: LaplaceSpec,
    K: float,
    grid: SolverGrid | None = None,
    *,
    lower: str = "last",
    lam: LambdaGrid | None = None,
) -> float:
    """``log E exp(-sum_k theta_k xi(t_k)) = K int Lambda**2 - sum_k t_k theta_k``.

    ``lower="last"`` integrates over ``[1 - t_n, 1]``, ``lower="zero"`` over
    ``[0, 1]``; both agree because the solution vanishes below ``1 - t_n``.
    A precomputed solution may be passed as ``lam``.
    """
    if lam is None:
        lam = solve_lambda(spec, K, grid)
    if lower == "last":
        a = spec.zero_until
    elif lower == "zero":
        a = 0.0
    else:
        raise ValueError(f"lower must be 'last' or 'zero', got {lower!r}")
    correction = K * lam.square_integral(a, 1.0) if K else 0.0
    return correction - spec.weighted_time


def xi_cumulants(K: float, t: float) -> tuple[float, float]:
    """Mean and variance of xi(t): ``(t, 2 K t**2 / pi)``."""
    if not K > 0:
        raise ValueError(f"K must be positive, got {K}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return float(t), 2.0 * K * t * t / math.pi


def limit_law_report(spec: LaplaceSpec, K: float, grid: SolverGrid | None = None) -> LimitLawReport:
    means, variances = zip(*(xi_cumulants(K, t) for t in spec.times))
    return LimitLawReport(spec, float(K), log_laplace(spec, K, grid), means, variances)


def small_s_slope_check(
    K: float = 1.0,
    grid: SolverGrid | None = None,
    theta: float = 1.0,
) -> float:
    """Estimate ``lim_{s->0} h(s) h'(s)`` (exact value ``1/pi``) on the first grid cell.

    Uses ``(h(s_1)**2 - h(s_0)**2) / (2 (s_1 - s_0))`` from the extended
    solution; returns 0 when ``theta = 0`` (degenerate, h identically 0).
    """
    return _first_cell(K, grid, theta)[0]


def _first_cell(K, grid, theta=1.0):
    grid = SolverGrid(0.01, 100) if grid is None else grid
    if int(round(0.01 / grid.step, 9)) < 10:
        raise ConfigurationError(
            f"step {grid.step} leaves fewer than 10 nodes below s = 0.01"
        )
    h = solve_lambda_extended(theta, K, grid).values
    return float((h[1] ** 2 - h[0] ** 2) / (2.0 * grid.step)), float(h[1])


def complete_monotonicity_probe(
    K: float,
    thetas,
    max_order: int = 4,
    step: float = 1e-3,
    eps: float | None = None,
    slope_grid: SolverGrid | None = None,
) -> LevyMomentReport:
    """Check that ``g(theta) = 1 - K h(theta)**2`` is completely monotone on ``thetas``.

    ``thetas`` must be uniform and aligned with the solver step.  Finite
    differences of order ``j <= max_order`` must satisfy
    ``(-1)**j D^j g >= -eps`` with ``eps = 1e-6 + 10 * step`` by default.
    """
    thetas = np.asarray(thetas, dtype=float)
    if not 1 <= max_order <= 4:
        raise ValueError("max_order must be in 1..4")
    if thetas.size < max_order + 1:
        raise ValueError("need at least max_order + 1 points")
    spacing = np.diff(thetas)
    if np.any(spacing <= 0) or np.ptp(spacing) > 1e-9 * spacing[0]:
        raise ValueError("thetas must be uniform and increasing")
    eps = 1e-6 + 10.0 * step if eps is None else eps

    grid = SolverGrid.from_step(float(thetas[-1]), step)
    lam = solve_lambda_extended(1.0, K, grid)
    idx = np.array([grid.index_of(t) for t in thetas])
    g = 1.0 - K * lam.values[idx] ** 2

    worst = math.inf
    d = g.copy()
    for j in range(1, max_order + 1):
        d = np.diff(d)
        worst = min(worst, float(np.min((-1) ** j * d)))
    ok = worst >= -eps

    slope_grid = SolverGrid(0.01, 10000) if slope_grid is None else slope_grid
    slope, h_small = _first_cell(K, slope_grid)
    return LevyMomentReport(
        K=float(K),
        first_moment=float(1.0 - K * h_small**2),
        second_moment=2.0 * K * slope,
        monotonicity_orders_checked=max_order,
        alternation_ok=bool(ok),
        worst_margin=worst,
        thetas=thetas,
        g=g,
    )


def degenerate_limit_curve(
    theta: float,
    Ks,
    step: float = 1e-2,
    S: float | None = None,
) -> list[tuple[float, float]]:
    """``(K, (1/K) int_0^{K theta} h(s)**2 ds)`` with h the K = 1 extended solution.

    This is ``K int_0^1 Lambda_K(s, theta)**2 ds``, which tends to ``theta`` as
    K grows; ``exp(value - theta)`` is then the Laplace transform of a
    truncated model with effective constant K.
    """
    Ks = [float(k) for k in Ks]
    if not theta > 0:
        raise ValueError("theta must be positive")
    if not Ks or any(k <= 0 for k in Ks) or any(b <= a for a, b in zip(Ks, Ks[1:])):
        raise ValueError("Ks must be positive and increasing")
    need = Ks[-1] * theta
    if S is None:
        S = max(step * 2, math.ceil(need / step) * step)
    if S < need * (1 - 1e-12):
        raise ConfigurationError(f"extended range S = {S} is below K_max * theta = {need}")
    lam = solve_lambda_extended(1.0, 1.0, SolverGrid.from_step(S, step))
    return [(k, lam.square_integral(0.0, k * theta) / k) for k in Ks]
