"""Nonnegative solutions of y = forcing - K * J^{1/2}(y**2) with the Abel kernel.

``J^{1/2} f(s) = int_0^s f(u) / sqrt(2 pi (s - u)) du`` is discretised by
product integration: on each cell of a uniform grid the density is replaced by
its linear interpolant and integrated against the kernel exactly.  The
resulting weights are the fractional trapezoidal weights of order 1/2, scaled
by ``1/sqrt(2)`` (the kernel here is ``Gamma(1/2)/sqrt(2 pi)`` times the
Riemann-Liouville one).

Two solvers share that discretisation:

* :func:`solve_lambda` / :func:`solve_lambda_extended` march in ``s`` and solve
  the scalar quadratic for the unknown on the diagonal in closed form;
* :func:`picard_solve` runs fixed-point sweeps over the whole grid and is used
  as an independent check of the marching scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from numba import njit
from scipy import signal
from scipy.special import binom

__all__ = [
    "LaplaceSpec",
    "SolverGrid",
    "LambdaGrid",
    "SolverError",
    "IterationLimitError",
    "forcing_term",
    "half_fractional_integral",
    "solve_lambda",
    "solve_lambda_extended",
    "picard_solve",
    "equation_residual",
]


class SolverError(RuntimeError):
    """The discrete equation has no admissible root at some grid point."""


class IterationLimitError(SolverError):
    def __init__(self, iterations, residual):
        super().__init__(
            f"Picard iteration did not converge in {iterations} sweeps "
            f"(last sup-norm change {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class LaplaceSpec:
    """Evaluation points ``(theta_k, t_k)`` of a finite-dimensional Laplace functional."""

    thetas: tuple[float, ...]
    times: tuple[float, ...]

    def __post_init__(self):
        thetas = tuple(float(v) for v in self.thetas)
        times = tuple(float(v) for v in self.times)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "times", times)
        if len(thetas) == 0 or len(thetas) != len(times):
            raise ValueError("need n >= 1 matching (theta, t) pairs")
        if not all(math.isfinite(v) and v >= 0 for v in thetas):
            raise ValueError(f"thetas must be finite and nonnegative: {thetas}")
        if not all(0.0 <= t <= 1.0 for t in times):
            raise ValueError(f"times must lie in [0, 1]: {times}")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"times must be strictly increasing: {times}")

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]]) -> "LaplaceSpec":
        pairs = [tuple(p) for p in pairs]
        if any(len(p) != 2 for p in pairs):
            raise ValueError("each pair must be [theta, t]")
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    @classmethod
    def single(cls, theta: float, t: float = 1.0) -> "LaplaceSpec":
        return cls((theta,), (t,))

    @property
    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.thetas, self.times))

    @property
    def n(self) -> int:
        return len(self.thetas)

    @property
    def last_time(self) -> float:
        return self.times[-1]

    @property
    def weighted_time(self) -> float:
        """``sum_k t_k theta_k``, the mean of ``sum_k theta_k xi(t_k)``."""
        return float(sum(t * th for th, t in zip(self.thetas, self.times)))

    @property
    def zero_until(self) -> float:
        """The solution vanishes identically on ``[0, 1 - t_n)``."""
        return 1.0 - self.last_time


@dataclass(frozen=True)
class SolverGrid:
    """Uniform grid ``s_i = i * S / m`` for ``i = 0..m``."""

    S: float
    m: int

    def __post_init__(self):
        if not (math.isfinite(self.S) and self.S > 0):
            raise ValueError(f"S must be positive and finite, got {self.S}")
        if int(self.m) != self.m or self.m < 2:
            raise ValueError(f"m must be an integer >= 2, got {self.m}")
        object.__setattr__(self, "m", int(self.m))

    @classmethod
    def from_step(cls, S: float, step: float) -> "SolverGrid":
        m = int(round(S / step))
        if not math.isclose(m * step, S, rel_tol=1e-9):
            raise ValueError(f"step {step} does not divide S = {S}")
        return cls(S, m)

    @property
    def step(self) -> float:
        return self.S / self.m

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.m + 1) * self.step

    def index_of(self, s: float, tol: float = 1e-9) -> int:
        """Index of a grid-aligned point ``s``; raises if ``s`` is not a node."""
        i = int(round(s / self.step))
        if i < 0 or i > self.m or abs(i * self.step - s) > tol * max(1.0, abs(s)):
            raise ValueError(f"s = {s} is not a node of {self}")
        return i

    def refined(self, factor: int = 2) -> "SolverGrid":
        return SolverGrid(self.S, self.m * factor)


Tag = Union[LaplaceSpec, float]


@dataclass(frozen=True)
class LambdaGrid:
    """Grid values of the nonnegative solution.

    ``spec`` is either the multi-time :class:`LaplaceSpec` (equation on
    ``[0, 1]``) or a float ``theta`` for the single-theta equation on
    ``[0, S]`` with forcing ``theta * sqrt(2 s / pi)``.
    """

    grid: SolverGrid
    values: np.ndarray
    K: float
    spec: Tag
    iterations: int | None = field(default=None, compare=False)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def theta(self) -> float | None:
        return None if isinstance(self.spec, LaplaceSpec) else float(self.spec)

    @property
    def zero_until(self) -> float:
        return self.spec.zero_until if isinstance(self.spec, LaplaceSpec) else 0.0

    def at(self, s):
        """Piecewise-linear interpolation of the grid values."""
        return np.interp(s, self.nodes, self.values)

    def square_integral(self, lower: float = 0.0, upper: float | None = None) -> float:
        """Trapezoid rule for ``int_lower^upper Lambda(s)**2 ds``.

        The integrand is the piecewise-linear interpolant of ``Lambda**2`` on the
        grid with one extra knot at ``1 - t_n`` where the solution is zero, so
        integrating from 0 or from ``1 - t_n`` gives the same number whenever
        the grid values vanish below ``1 - t_n``.
        """
        upper = self.grid.S if upper is None else upper
        if not 0.0 <= lower <= upper <= self.grid.S * (1 + 1e-12):
            raise ValueError(f"bad integration range [{lower}, {upper}]")
        s = self.nodes
        f = self.values**2
        z = self.zero_until
        if 0.0 < z < self.grid.S:
            i = int(np.searchsorted(s, z))
            if s[i] != z:
                s = np.insert(s, i, z)
                f = np.insert(f, i, 0.0)
        fl = np.interp(lower, s, f)
        fu = np.interp(upper, s, f)
        inside = (s > lower) & (s < upper)
        ss = np.concatenate(([lower], s[inside], [upper]))
        ff = np.concatenate(([fl], f[inside], [fu]))
        return float(np.sum(0.5 * np.diff(ss) * (ff[1:] + ff[:-1])))


# ---------------------------------------------------------------------------
# product-integration weights

_SERIES_FROM = 64


def _pow15_second_difference(k: np.ndarray) -> np.ndarray:
    """``(k+1)**1.5 - 2 k**1.5 + (k-1)**1.5`` for integer k >= 1, without cancellation."""
    k = np.asarray(k, dtype=float)
    out = np.empty_like(k)
    small = k < _SERIES_FROM
    ks = k[small]
    out[small] = (ks + 1) ** 1.5 - 2 * ks**1.5 + (ks - 1) ** 1.5
    kl = k[~small]
    acc = np.zeros_like(kl)
    for j in range(6, 0, -1):
        acc += binom(1.5, 2 * j) * kl ** (1.5 - 2 * j)
    out[~small] = 2 * acc
    return out


def _start_weight(n: np.ndarray) -> np.ndarray:
    """``(n-1)**1.5 - (n - 1.5) * n**0.5`` for integer n >= 1, without cancellation."""
    n = np.asarray(n, dtype=float)
    out = np.empty_like(n)
    small = n < _SERIES_FROM
    ns = n[small]
    out[small] = (ns - 1) ** 1.5 - (ns - 1.5) * np.sqrt(ns)
    nl = n[~small]
    acc = np.zeros_like(nl)
    for j in range(14, 1, -1):
        acc += binom(1.5, j) * (-1.0) ** j * nl ** (1.5 - j)
    out[~small] = acc
    return out


def _weights(m: int, step: float):
    """Scale, interior weights ``b[k]`` (b[0] = 0) and start weights ``a0[n]`` (a0[0] = 0).

    ``J f(s_n) ~ scale * (a0[n] f_0 + sum_{k=1}^{n-1} b[k] f_{n-k} + f_n)``.
    """
    scale = (2.0 / 3.0) * math.sqrt(2.0 * step / math.pi)
    b = np.zeros(m + 1)
    b[1:] = _pow15_second_difference(np.arange(1, m + 1))
    a0 = np.zeros(m + 1)
    a0[1:] = _start_weight(np.arange(1, m + 1))
    return scale, b, a0


def _apply_abel(f: np.ndarray, scale: float, b: np.ndarray, a0: np.ndarray) -> np.ndarray:
    m = f.size - 1
    conv = signal.convolve(b, f, method="auto")[: m + 1]
    out = conv - b * f[0] + a0 * f[0] + f
    out *= scale
    out[0] = 0.0
    return out


def half_fractional_integral(f, grid: SolverGrid) -> np.ndarray:
    """Product-integration approximation of ``J^{1/2} f`` at every node of ``grid``.

    ``f`` is an array of nodal values or a callable evaluated at the nodes.
    Exact for piecewise-linear ``f``; ``J^{1/2} f(0) = 0``.
    """
    fv = np.asarray(f(grid.nodes) if callable(f) else f, dtype=float)
    if fv.shape != (grid.m + 1,):
        raise ValueError(f"expected {grid.m + 1} nodal values, got shape {fv.shape}")
    scale, b, a0 = _weights(grid.m, grid.step)
    return _apply_abel(fv, scale, b, a0)


# ---------------------------------------------------------------------------
# forcing


def forcing_term(spec: LaplaceSpec, s):
    """``sum_k theta_k int_0^s 1{u >= 1 - t_k} / sqrt(2 pi (s-u)) du`` in closed form."""
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
        raise ValueError(f"s must lie in [0, 1], got {s!r}")
    out = np.zeros_like(arr)
    for theta, t in zip(spec.thetas, spec.times):
        out = out + theta * np.sqrt(2.0 * np.maximum(0.0, arr - (1.0 - t)) / math.pi)
    return float(out) if out.ndim == 0 else out


def _single_forcing(theta: float, nodes: np.ndarray) -> np.ndarray:
    return theta * np.sqrt(2.0 * nodes / math.pi)


# ---------------------------------------------------------------------------
# marching solver


@njit(cache=True, nogil=True)
def _march(F, K, scale, b, a0):
    m = F.size - 1
    y = np.zeros(m + 1)
    y2 = np.zeros(m + 1)
    kw = K * scale
    y[0] = max(F[0], 0.0)
    y2[0] = y[0] * y[0]
    for i in range(1, m + 1):
        hist = a0[i] * y2[0]
        for k in range(1, i):
            hist += b[k] * y2[i - k]
        r = F[i] - K * scale * hist
        disc = 1.0 + 4.0 * kw * r
        if disc < 0.0:
            return y, i
        if r <= 0.0:
            yi = 0.0
        else:
            yi = 2.0 * r / (1.0 + math.sqrt(disc))
        y[i] = yi
        y2[i] = yi * yi
    return y, -1


def _solve(F: np.ndarray, K: float, grid: SolverGrid) -> np.ndarray:
    if not (math.isfinite(K) and K >= 0):
        raise ValueError(f"K must be finite and nonnegative, got {K}")
    if K == 0.0:
        return np.maximum(F, 0.0)
    scale, b, a0 = _weights(grid.m, grid.step)
    y, failed = _march(F, float(K), scale, b, a0)
    if failed >= 0:
        raise SolverError(
            f"no nonnegative root at s = {failed * grid.step:.6g}; grid too coarse"
        )
    return y


def solve_lambda(spec: LaplaceSpec, K: float, grid: SolverGrid | None = None) -> LambdaGrid:
    """Solve the multi-time equation on ``[0, 1]``.

    The default grid has step ``1e-3``.
    """
    grid = SolverGrid(1.0, 1000) if grid is None else grid
    if grid.S != 1.0:
        raise ValueError("the multi-time equation lives on [0, 1]; use S = 1")
    F = forcing_term(spec, grid.nodes)
    return LambdaGrid(grid, _solve(F, K, grid), float(K), spec)


def solve_lambda_extended(theta: float, K: float, grid: SolverGrid | None = None) -> LambdaGrid:
    """Solve ``y(s) = theta sqrt(2s/pi) - K J^{1/2}(y**2)(s)`` on ``[0, S]``.

    The default grid is ``[0, 200]`` with step ``1e-2``.
    """
    if not (math.isfinite(theta) and theta >= 0):
        raise ValueError(f"theta must be finite and nonnegative, got {theta}")
    if not (math.isfinite(K) and K > 0):
        raise ValueError(f"K must be positive, got {K}")
    grid = SolverGrid(200.0, 20000) if grid is None else grid
    F = _single_forcing(theta, grid.nodes)
    return LambdaGrid(grid, _solve(F, K, grid), float(K), float(theta))


def picard_solve(
    spec: Tag,
    K: float,
    grid: SolverGrid,
    max_iter: int = 500,
    tol: float = 1e-13,
) -> LambdaGrid:
    """Fixed-point sweeps ``y <- max(forcing - K J^{1/2}(y**2), 0)`` from ``y = 0``.

    ``spec`` is a :class:`LaplaceSpec` (grid on ``[0, 1]``) or a float theta
    (single-theta equation on ``[0, S]``).  Stops once the sup-norm change is
    at most ``tol``; the number of sweeps is stored in ``iterations``.
    """
    if max_iter < 1 or not tol > 0:
        raise ValueError("need max_iter >= 1 and tol > 0")
    if not (math.isfinite(K) and K >= 0):
        raise ValueError(f"K must be finite and nonnegative, got {K}")
    if isinstance(spec, LaplaceSpec):
        if grid.S != 1.0:
            raise ValueError("the multi-time equation lives on [0, 1]; use S = 1")
        F = forcing_term(spec, grid.nodes)
    else:
        F = _single_forcing(float(spec), grid.nodes)
    scale, b, a0 = _weights(grid.m, grid.step)
    y = np.zeros_like(F)
    change = math.inf
    for it in range(1, max_iter + 1):
        new = F - K * _apply_abel(y * y, scale, b, a0) if K else F.copy()
        np.maximum(new, 0.0, out=new)
        change = float(np.max(np.abs(new - y)))
        y = new
        if change <= tol:
            tag = spec if isinstance(spec, LaplaceSpec) else float(spec)
            return LambdaGrid(grid, y, float(K), tag, iterations=it)
    raise IterationLimitError(max_iter, change)


def equation_residual(lam: LambdaGrid, refine: int = 4) -> float:
    """Sup-norm residual of the grid solution in the continuous equation.

    The solution is extended by linear interpolation to a grid ``refine``
    times finer, where ``J^{1/2}(Lambda**2)`` is recomputed; the residual is
    taken at the original nodes.
    """
    fine = lam.grid.refined(refine)
    yf = lam.at(fine.nodes)
    if isinstance(lam.spec, LaplaceSpec):
        F = forcing_term(lam.spec, fine.nodes)
    else:
        F = _single_forcing(float(lam.spec), fine.nodes)
    res = yf - F + lam.K * half_fractional_integral(yf * yf, fine)
    return float(np.max(np.abs(res[::refine])))
