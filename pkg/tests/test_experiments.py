import math

import numpy as np
import pytest

from sdbbm.experiments import checkpoint_columns, ergodic_experiment, estimate_laplace, moment_experiment
from sdbbm.limit_laws import ConfigurationError
from sdbbm.particle_sim import ReplicateResult, SigmaProfile, SimConfig, TestFunction
from sdbbm.volterra import LaplaceSpec

TIMES = (0.5, 1.0)


def synthetic(values, mass=2.0, times=TIMES):
    """Replicates whose normalised values are the given rows."""
    return [ReplicateResult(np.asarray(v, float) * mass, 0, 0, (0, 0, 0), times, mass) for v in values]


def exponential_results(n, seed=1):
    rng = np.random.default_rng(seed)
    x = rng.exponential(size=n)
    return synthetic(np.column_stack([x / 2, x]))


def test_estimate_matches_exponential_laplace():
    res = exponential_results(20000)
    for theta in (0.5, 1.0, 3.0):
        est, se = estimate_laplace(res, LaplaceSpec.single(theta))
        assert abs(est - 1 / (1 + theta)) <= 4 * se
        assert 0 < est <= 1


def test_two_time_estimate():
    # theta_1 x / 2 + theta_2 x with x ~ Exp(1)
    res = exponential_results(20000, seed=2)
    est, se = estimate_laplace(res, LaplaceSpec.from_pairs([(1.0, 0.5), (1.0, 1.0)]))
    assert abs(est - 1 / 2.5) <= 4 * se


def test_stderr_scales_with_sample_size():
    res = exponential_results(8000, seed=3)
    spec = LaplaceSpec.single(1.0)
    _, full = estimate_laplace(res, spec)
    _, half_a = estimate_laplace(res[:4000], spec)
    _, half_b = estimate_laplace(res[4000:], spec)
    assert (half_a + half_b) / 2 / full == pytest.approx(math.sqrt(2), rel=0.1)


def test_checkpoint_matching():
    res = exponential_results(10)
    with pytest.raises(ConfigurationError):
        estimate_laplace(res, LaplaceSpec.single(1.0, 0.7))
    mixed = res + synthetic([[0.1, 0.2, 0.3]], times=(0.25, 0.5, 1.0))
    with pytest.raises(ConfigurationError):
        checkpoint_columns(mixed, [1.0])
    with pytest.raises(ConfigurationError):
        checkpoint_columns([], [1.0])


def test_moment_rows():
    rows = moment_experiment(exponential_results(5000, seed=4), None, 1.0)
    means = [r for r in rows if r["moment"] == "mean"]
    assert [r["t"] for r in means] == [0.5, 1.0]
    assert all(abs(r["z"]) < 4 for r in means)
    var = rows[-1]
    assert var["moment"] == "variance" and var["asymptotic_only"]
    assert var["theory"] == pytest.approx(2 / math.pi)
    assert var["empirical"] == pytest.approx(1.0, abs=0.1)
    with pytest.raises(ConfigurationError):
        moment_experiment(exponential_results(10), None, 1.0)


def base_config(sigma):
    return SimConfig(T=1.0, checkpoints=TIMES, sigma=sigma, phi=TestFunction.gaussian(), seed=3)


def test_failed_mean_gate_blocks_asymptotic_verdicts():
    # means of 0.8 at t = 1 are far outside 3 stderr of the exact value
    rng = np.random.default_rng(0)
    x = 0.8 + 0.01 * rng.standard_normal(200)
    fake = synthetic(np.column_stack([x / 2, x]))
    rep = ergodic_experiment(base_config(SigmaProfile.for_K(1.0)), [4.0, 9.0], 200,
                             LaplaceSpec.single(1.0), results_by_T={4.0: fake, 9.0: fake})
    assert not rep.verdicts["exact_mean[T=4]"].passed
    assert not rep.verdicts["laplace_at_T_max"].passed
    assert "gate failed" in rep.verdicts["laplace_at_T_max"].detail
    assert not rep.passed


def test_small_ergodic_run():
    rep = ergodic_experiment(base_config(SigmaProfile.for_K(1.0)), [4.0, 9.0], 100, LaplaceSpec.single(1.0))
    assert [r.T for r in rep.rows] == [4.0, 9.0]
    assert {"exact_mean[T=4]", "exact_mean[T=9]", "laplace_at_T_max", "laplace_gap_trend",
            "variance_at_T_max", "self_similarity"} <= set(rep.verdicts)
    assert rep.verdicts["exact_mean[T=4]"].passed and rep.verdicts["exact_mean[T=9]"].passed
    header, rows = rep.csv_rows()
    assert len(rows) == 2 and len(header) == len(rows[0])
    assert rep.to_dict()["integrable"]


def test_degenerate_run_has_trend_verdicts():
    rep = ergodic_experiment(base_config(SigmaProfile.constant(0.5)), [4.0, 9.0], 100, LaplaceSpec.single(1.0))
    assert {"degenerate_trend", "degenerate_margin"} <= set(rep.verdicts)
    assert all(r.reference_laplace is not None for r in rep.rows)
    assert rep.limit_laplace == 1.0


def test_ladder_validation():
    cfg = base_config(SigmaProfile.for_K(1.0))
    with pytest.raises(ConfigurationError):
        ergodic_experiment(cfg, [9.0, 4.0], 100, LaplaceSpec.single(1.0))
    with pytest.raises(ConfigurationError):
        ergodic_experiment(cfg, [4.0, 9.0], 10, LaplaceSpec.single(1.0))
