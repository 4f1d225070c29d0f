import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdbbm.limit_laws import (
    ConfigurationError,
    complete_monotonicity_probe,
    degenerate_limit_curve,
    limit_law_report,
    log_laplace,
    small_s_slope_check,
    xi_cumulants,
)
from sdbbm.volterra import LaplaceSpec, SolverGrid, solve_lambda, solve_lambda_extended

GRID = SolverGrid.from_step(1.0, 1e-3)


def test_K_zero_gives_degenerate_mean():
    spec = LaplaceSpec.from_pairs([(1.0, 0.4), (2.0, 1.0)])
    assert log_laplace(spec, 0.0, GRID) == pytest.approx(-2.4, abs=1e-15)


def test_lower_limits_agree():
    spec = LaplaceSpec.from_pairs([(1.0, 0.3), (2.0, 0.6)])
    assert log_laplace(spec, 1.0, GRID, lower="last") == log_laplace(spec, 1.0, GRID, lower="zero")
    with pytest.raises(ValueError):
        log_laplace(spec, 1.0, GRID, lower="middle")


def test_log_laplace_between_mean_bound_and_zero():
    # Jensen: E exp(-theta xi) >= exp(-theta E xi)
    for K in (0.5, 1.0, 4.0):
        value = log_laplace(LaplaceSpec.single(1.0), K, GRID)
        assert -1.0 < value < 0.0


def test_derivative_at_zero_is_mean():
    h = 1e-3
    value = log_laplace(LaplaceSpec.single(h), 1.0, GRID)
    assert value / h == pytest.approx(-1.0, abs=1e-3)


def test_second_cumulant_from_log_laplace():
    # log E exp(-theta xi(1)) = -theta + theta**2 Var / 2 + O(theta**3)
    K, h = 1.0, 1e-2
    f = [log_laplace(LaplaceSpec.single(k * h), K, GRID) for k in (1, 2)]
    second = (f[1] - 2 * f[0]) / h**2
    assert second == pytest.approx(2 * K / math.pi, rel=0.05)


def test_self_similarity_on_solver_side():
    # discretisation-level equality, the two sides use different grids
    for theta, t in [(1.0, 0.5), (2.0, 0.25), (0.5, 0.8)]:
        a = log_laplace(LaplaceSpec.single(theta, t), 1.0, GRID)
        b = log_laplace(LaplaceSpec.single(theta * t, 1.0), 1.0, GRID)
        assert a == pytest.approx(b, abs=1e-6)


def test_precomputed_solution_reused():
    spec = LaplaceSpec.single(1.0)
    lam = solve_lambda(spec, 1.0, GRID)
    assert log_laplace(spec, 1.0, lam=lam) == log_laplace(spec, 1.0, GRID)


def test_cumulants_and_report():
    assert xi_cumulants(1.0, 0.5) == (0.5, 0.5 / math.pi)
    with pytest.raises(ValueError):
        xi_cumulants(0.0, 1.0)
    rep = limit_law_report(LaplaceSpec.from_pairs([(1, 0.5), (1, 1)]), 2.0, GRID)
    assert rep.mean_vector == (0.5, 1.0)
    assert rep.covariance_diag[1] == pytest.approx(4 / math.pi)
    assert 0 < rep.laplace < 1


def test_slope_check():
    slope = small_s_slope_check(1.0, SolverGrid(0.01, 1000))
    assert slope == pytest.approx(1 / math.pi, rel=1e-3)
    with pytest.raises(ConfigurationError):
        small_s_slope_check(1.0, SolverGrid(0.01, 5))
    assert small_s_slope_check(1.0, SolverGrid(0.01, 100), theta=0.0) == 0.0


def test_slope_independent_of_K():
    # h h' -> theta**2 / pi for every K
    for K in (0.5, 3.0):
        assert small_s_slope_check(K, SolverGrid(0.01, 1000)) == pytest.approx(1 / math.pi, rel=1e-3)


def test_monotonicity_probe():
    rep = complete_monotonicity_probe(1.0, np.linspace(0.1, 10.0, 100), step=1e-2,
                                      slope_grid=SolverGrid(0.01, 1000))
    assert rep.alternation_ok
    assert rep.first_moment == pytest.approx(1.0, abs=1e-2)
    assert rep.second_moment == pytest.approx(2 / math.pi, rel=1e-3)
    assert np.all(np.diff(rep.g) < 0) and np.all(rep.g > 0)


def test_probe_rejects_bad_thetas():
    with pytest.raises(ValueError):
        complete_monotonicity_probe(1.0, [0.1, 0.2, 0.4, 0.5, 0.6])
    with pytest.raises(ValueError):
        complete_monotonicity_probe(1.0, [0.1, 0.2], max_order=4)


def test_degenerate_curve_monotone_and_bounded():
    curve = degenerate_limit_curve(1.0, [1, 3, 10, 30])
    values = [v for _, v in curve]
    assert all(0 < v < 1 for v in values)
    assert all(b > a for a, b in zip(values, values[1:]))


def test_degenerate_curve_matches_direct_solution():
    # (1/K) int_0^K h**2 with h at K = 1 equals K int_0^1 Lambda_K(., 1)**2
    K = 4.0
    (_, v), = degenerate_limit_curve(1.0, [K], step=1e-3)
    direct = K * solve_lambda(LaplaceSpec.single(1.0), K, GRID).square_integral()
    assert v == pytest.approx(direct, rel=1e-4)


def test_degenerate_curve_validation():
    with pytest.raises(ValueError):
        degenerate_limit_curve(1.0, [10, 1])
    with pytest.raises(ConfigurationError):
        degenerate_limit_curve(1.0, [10], S=5.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.05, 5.0), st.floats(0.05, 5.0))
def test_log_laplace_monotone(theta, dtheta, K):
    grid = SolverGrid(1.0, 200)
    a = log_laplace(LaplaceSpec.single(theta), K, grid)
    b = log_laplace(LaplaceSpec.single(theta + dtheta), K, grid)
    assert b < a <= 0.0


def test_extended_asymptote_increasing():
    lam = solve_lambda_extended(1.0, 1.0, SolverGrid.from_step(100.0, 1e-2))
    tail = [1 - lam.values[lam.grid.index_of(s)] for s in (25, 50, 100)]
    assert tail[0] > tail[1] > tail[2] > 0
