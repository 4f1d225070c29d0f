"""Compare simulated occupation times with the limit laws along a ladder of horizons.

Occupation values are divided by the test-function mass, so every empirical
number targets the scalar limit process xi directly.  Verdicts:

``exact_mean[T]``
    ``E <X_T(t_k), phi> / mass = t_k`` holds at every horizon; each
    checkpoint mean must be within 3 standard errors.  This gate certifies the
    window and quadrature step; asymptotic verdicts are only passed when all
    mean gates pass.
``laplace_at_T_max`` / ``laplace_gap_trend``
    Integrable sigma: the empirical Laplace functional approaches
    ``exp(log_laplace(spec, K))``.
``variance_at_T_max``
    Integrable sigma with K > 0: ``Var xi(1) = 2K/pi`` within 25 percent.
``self_similarity``
    ``E exp(-theta xi(t)) = E exp(-t theta xi(1))`` within 3 standard errors.
``degenerate_trend`` / ``degenerate_margin``
    Non-integrable sigma: the Laplace functional increases toward 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .limit_laws import ConfigurationError, degenerate_limit_curve, log_laplace, xi_cumulants
from .particle_sim import ReplicateResult, SimConfig, run_replicates
from .volterra import LaplaceSpec, SolverGrid

__all__ = [
    "Verdict",
    "HorizonRow",
    "ExperimentReport",
    "estimate_laplace",
    "moment_experiment",
    "ergodic_experiment",
    "checkpoint_columns",
]

Z_GATE = 3.0
VARIANCE_REL_TOL = 0.25


@dataclass(frozen=True)
class Verdict:
    passed: bool
    margin: float
    detail: str = ""


@dataclass
class HorizonRow:
    T: float
    R: int
    laplace: float
    laplace_stderr: float
    means: list[float]
    mean_stderrs: list[float]
    mean_z: list[float]
    variance: float
    variance_stderr: float
    peak_population_mean: float
    reference_laplace: float | None = None


@dataclass
class ExperimentReport:
    T_ladder: list[float]
    spec: LaplaceSpec
    K: float
    checkpoints: list[float]
    rows: list[HorizonRow]
    limit_laplace: float
    limit_means: list[float]
    limit_variance: float | None
    verdicts: dict[str, Verdict] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "T_ladder": self.T_ladder,
            "spec": {"pairs": [list(p) for p in self.spec.pairs]},
            "K": None if math.isinf(self.K) else self.K,
            "integrable": math.isfinite(self.K),
            "checkpoints": self.checkpoints,
            "theory": {
                "limit_laplace": self.limit_laplace,
                "limit_means": self.limit_means,
                "limit_variance_t1": self.limit_variance,
            },
            "rows": [vars(r) for r in self.rows],
            "verdicts": {k: vars(v) for k, v in self.verdicts.items()},
            "passed": self.passed,
        }

    def csv_rows(self) -> tuple[list[str], list[list]]:
        header = ["T", "R", "laplace", "laplace_stderr", "theory_laplace"]
        for t in self.checkpoints:
            header += [f"mean_t{t:g}", f"mean_stderr_t{t:g}"]
        header += ["variance_t1", "variance_stderr_t1", "peak_population_mean"]
        rows = []
        for r in self.rows:
            theory = r.reference_laplace if r.reference_laplace is not None else self.limit_laplace
            row = [r.T, r.R, r.laplace, r.laplace_stderr, theory]
            for m, se in zip(r.means, r.mean_stderrs):
                row += [m, se]
            row += [r.variance, r.variance_stderr, r.peak_population_mean]
            rows.append(row)
        return header, rows


def checkpoint_columns(results: list[ReplicateResult], times) -> np.ndarray:
    """Mass-normalised values at ``times`` as an (R, len(times)) array."""
    if not results:
        raise ConfigurationError("no replicate results")
    avail = results[0].times
    idx = []
    for t in times:
        hits = [i for i, a in enumerate(avail) if abs(a - t) <= 1e-12]
        if not hits:
            raise ConfigurationError(f"time {t} is not among the checkpoints {avail}")
        idx.append(hits[0])
    for r in results:
        if r.times != avail:
            raise ConfigurationError("replicates disagree on checkpoint times")
    return np.array([r.normalized[idx] for r in results])


def estimate_laplace(results: list[ReplicateResult], spec: LaplaceSpec) -> tuple[float, float]:
    """Sample mean of ``exp(-sum_k theta_k v_k)`` and its standard error.

    ``v_k`` are the occupation values at ``t_k`` divided by the test-function mass.
    """
    v = checkpoint_columns(results, spec.times)
    w = np.exp(-(v @ np.asarray(spec.thetas)))
    if len(results) < 2:
        return float(w.mean()), 0.0
    return float(w.mean()), float(w.std(ddof=1) / math.sqrt(w.size))


def _variance_with_stderr(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    var = float(x.var(ddof=1))
    c = x - x.mean()
    m4 = float(np.mean(c**4))
    se = math.sqrt(max(m4 - var * var * (n - 3) / (n - 1), 0.0) / n)
    return var, se


def moment_experiment(results: list[ReplicateResult], spec: LaplaceSpec | None, K: float) -> list[dict]:
    """Mean rows (exact theory at every T) and a variance row at the last checkpoint.

    The variance target ``2 K t**2 / pi`` is the limit value and is flagged as
    asymptotic.  ``spec`` only picks the checkpoint times (all when None).
    """
    if len(results) < 30:
        raise ConfigurationError("moment_experiment needs at least 30 replicates")
    times = list(results[0].times) if spec is None else list(spec.times)
    v = checkpoint_columns(results, times)
    n = v.shape[0]
    rows = []
    for k, t in enumerate(times):
        m = float(v[:, k].mean())
        se = float(v[:, k].std(ddof=1) / math.sqrt(n))
        rows.append({"moment": "mean", "t": t, "empirical": m, "theory": t,
                     "stderr": se, "z": (m - t) / se if se > 0 else 0.0,
                     "asymptotic_only": False})
    t = times[-1]
    var, se = _variance_with_stderr(v[:, -1])
    theory = xi_cumulants(K, t)[1] if (K > 0 and math.isfinite(K)) else (0.0 if K == 0 else math.inf)
    rows.append({"moment": "variance", "t": t, "empirical": var, "theory": theory,
                 "stderr": se, "z": (var - theory) / se if se > 0 and math.isfinite(theory) else math.nan,
                 "asymptotic_only": True})
    return rows


def ergodic_experiment(
    base_config: SimConfig,
    T_ladder,
    R: int,
    spec: LaplaceSpec,
    *,
    threads=None,
    bias_allowance: float = 0.02,
    grid: SolverGrid | None = None,
    results_by_T: dict | None = None,
) -> ExperimentReport:
    """Simulate at each horizon and compare with the limit theory.

    ``results_by_T`` may supply precomputed replicate lists (keyed by T),
    which are then used instead of simulating.
    """
    T_ladder = [float(T) for T in T_ladder]
    if any(b <= a for a, b in zip(T_ladder, T_ladder[1:])):
        raise ConfigurationError("T_ladder must be increasing")
    if R < 100:
        raise ConfigurationError("ergodic_experiment needs R >= 100")
    sigma = base_config.sigma
    K = sigma.K
    integrable = math.isfinite(K)

    if integrable:
        limit_ll = log_laplace(spec, K, grid)
        limit_laplace = math.exp(limit_ll)
        limit_var = xi_cumulants(K, 1.0)[1] if K > 0 else 0.0
    else:
        limit_laplace = 1.0
        limit_var = None
    report = ExperimentReport(
        T_ladder=T_ladder, spec=spec, K=K, checkpoints=list(base_config.checkpoints),
        rows=[], limit_laplace=limit_laplace, limit_means=list(base_config.checkpoints),
        limit_variance=limit_var,
    )

    per_T = {}
    for T in T_ladder:
        cfg = base_config.with_horizon(T)
        if results_by_T is not None and T in results_by_T:
            results = results_by_T[T]
        else:
            results = run_replicates(cfg, R, threads=threads)
        per_T[T] = results
        lap, lap_se = estimate_laplace(results, spec)
        moments = moment_experiment(results, None, K if integrable else math.inf)
        means = [r for r in moments if r["moment"] == "mean"]
        var_row = moments[-1]
        ref = None
        if not integrable:
            K_eff = sigma.effective_K(cfg.L)
            if K_eff > 0 and spec.n == 1 and spec.last_time == 1.0:
                value = degenerate_limit_curve(spec.thetas[0], [K_eff])[0][1]
                ref = math.exp(value - spec.thetas[0])
        report.rows.append(HorizonRow(
            T=T, R=len(results), laplace=lap, laplace_stderr=lap_se,
            means=[r["empirical"] for r in means],
            mean_stderrs=[r["stderr"] for r in means],
            mean_z=[r["z"] for r in means],
            variance=var_row["empirical"], variance_stderr=var_row["stderr"],
            peak_population_mean=float(np.mean([r.peak_population for r in results])),
            reference_laplace=ref,
        ))

    verdicts = report.verdicts
    for row in report.rows:
        worst = max(abs(z) for z in row.mean_z)
        verdicts[f"exact_mean[T={row.T:g}]"] = Verdict(worst <= Z_GATE, Z_GATE - worst,
                                                       f"max |z| = {worst:.3f}")
    gate = all(v.passed for v in verdicts.values())
    last = report.rows[-1]

    def asymptotic(name, passed, margin, detail):
        if not gate:
            detail = "exact-mean gate failed; " + detail
        verdicts[name] = Verdict(bool(passed and gate), margin, detail)

    if integrable:
        gaps = [abs(r.laplace - limit_laplace) for r in report.rows]
        allowed = Z_GATE * last.laplace_stderr + bias_allowance
        asymptotic("laplace_at_T_max", gaps[-1] <= allowed, allowed - gaps[-1],
                   f"gap {gaps[-1]:.4f} vs allowed {allowed:.4f}")
        if K > 0:
            trend = all(b < a for a, b in zip(gaps, gaps[1:]))
            asymptotic("laplace_gap_trend", trend,
                       min((a - b for a, b in zip(gaps, gaps[1:])), default=0.0),
                       "gaps " + ", ".join(f"{g:.4f}" for g in gaps))
            rel = abs(last.variance - limit_var) / limit_var
            asymptotic("variance_at_T_max", rel <= VARIANCE_REL_TOL, VARIANCE_REL_TOL - rel,
                       f"variance {last.variance:.4f} vs 2K/pi = {limit_var:.4f}")
    else:
        laps = [r.laplace for r in report.rows]
        trend = all(b > a for a, b in zip(laps, laps[1:]))
        asymptotic("degenerate_trend", trend,
                   min((b - a for a, b in zip(laps, laps[1:])), default=0.0),
                   "laplace " + ", ".join(f"{x:.4f}" for x in laps))
        first = report.rows[0]
        pooled = math.hypot(first.laplace_stderr, last.laplace_stderr)
        rise = last.laplace - first.laplace
        asymptotic("degenerate_margin", rise >= Z_GATE * pooled, rise - Z_GATE * pooled,
                   f"rise {rise:.4f} vs 3 pooled stderr {Z_GATE * pooled:.4f}")

    ss = _self_similarity(per_T[T_ladder[-1]], spec)
    if ss is not None:
        diff, se = ss
        asymptotic("self_similarity", abs(diff) <= Z_GATE * se, Z_GATE * se - abs(diff),
                   f"paired difference {diff:.4f} (stderr {se:.4f})")
    return report


def _self_similarity(results, spec: LaplaceSpec):
    """Paired difference ``exp(-theta xi(t)) - exp(-t theta xi(1))`` at the first checkpoint t < 1."""
    times = results[0].times
    if spec.n != 1 or len(times) < 2 or times[-1] != 1.0:
        return None
    theta = spec.thetas[0]
    t = times[0]
    v = checkpoint_columns(results, [t, 1.0])
    d = np.exp(-theta * v[:, 0]) - np.exp(-t * theta * v[:, 1])
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(d.size))
