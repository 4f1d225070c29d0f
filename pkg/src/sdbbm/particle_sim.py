"""Monte Carlo simulation of site-dependent branching Brownian motion on the line.

Particles start from a Poisson field of unit intensity on ``[-L, L]``, move as
standard Brownian motions and carry exponential(gamma) branching clocks.  When
a clock rings at position ``x`` the particle is replaced by 0, 1 or 2 copies
with probabilities ``sigma(x), 1 - 2 sigma(x), sigma(x)`` (critical for every
``x``).  Each replicate returns the rescaled occupation functional

    <X_T(t_k), phi> = (1/T) int_0^{T t_k} <N(s), phi> ds

at the requested checkpoints.  Branching times and Brownian increments are
exact; the time integral uses the trapezoid rule on a grid of step ``dt``
refined by event and checkpoint times.

Random streams: replicate ``i`` of a run seeded with ``seed`` draws from
``Generator(PCG64(SeedSequence(seed, spawn_key=(i,))))``, so results do not
depend on how replicates are scheduled across threads.
"""

from __future__ import annotations

import functools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numba import njit

__all__ = [
    "SigmaProfile",
    "TestFunction",
    "SimConfig",
    "ReplicateResult",
    "PopulationCapError",
    "replicate_rng",
    "init_poisson_field",
    "branch_outcome",
    "simulate_replicate",
    "run_replicates",
    "DEFAULT_CAP",
]

DEFAULT_CAP = 1_000_000

# profile kind codes shared with the compiled kernel
_CONSTANT, _WINDOW, _GAUSSIAN, _TABLE, _COSINE = range(5)


class PopulationCapError(RuntimeError):
    def __init__(self, peak, cap, replicate=None):
        where = "" if replicate is None else f" in replicate {replicate}"
        super().__init__(f"population reached {peak} > cap {cap}{where}")
        self.peak = peak
        self.cap = cap
        self.replicate = replicate


def _as_table(xs, ys):
    xs = np.ascontiguousarray(xs, dtype=float)
    ys = np.ascontiguousarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
        raise ValueError("table needs matching 1-d xs and ys with at least 2 points")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("table xs must be strictly increasing")
    return xs, ys


_NO_TABLE = np.zeros(2)


@dataclass(frozen=True)
class SigmaProfile:
    """Branching-variance profile ``sigma(x)`` in ``[0, 1/2]`` plus branching rate ``gamma``.

    Use the constructors :meth:`constant`, :meth:`window`, :meth:`gaussian`,
    :meth:`table` or :meth:`for_K`.
    """

    kind: str
    params: tuple[float, ...]
    gamma: float
    table_x: np.ndarray = field(default=_NO_TABLE, repr=False, compare=False)
    table_y: np.ndarray = field(default=_NO_TABLE, repr=False, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError(f"gamma must be finite and nonnegative, got {self.gamma}")
        peak = self.peak
        low = float(np.min(self.table_y)) if self.kind == "table" else min(self.params[0], 0.0)
        if not (0.0 <= low and peak <= 0.5):
            raise ValueError(f"sigma must stay within [0, 1/2]; got range [{low}, {peak}]")

    @classmethod
    def constant(cls, value: float, gamma: float = 1.0) -> "SigmaProfile":
        return cls("constant", (float(value),), float(gamma))

    @classmethod
    def window(cls, value: float, halfwidth: float, center: float = 0.0, gamma: float = 1.0):
        if not halfwidth > 0:
            raise ValueError("halfwidth must be positive")
        return cls("indicator-window", (float(value), float(center), float(halfwidth)), float(gamma))

    @classmethod
    def gaussian(cls, amplitude: float, width: float = 1.0, center: float = 0.0, gamma: float = 1.0):
        if not width > 0:
            raise ValueError("width must be positive")
        return cls("gaussian-bump", (float(amplitude), float(center), float(width)), float(gamma))

    @classmethod
    def table(cls, xs, ys, gamma: float = 1.0) -> "SigmaProfile":
        xs, ys = _as_table(xs, ys)
        return cls("table", (), float(gamma), xs, ys)

    @classmethod
    def for_K(cls, K: float, gamma: float = 1.0, width: float = 1.0) -> "SigmaProfile":
        """Gaussian bump with ``gamma * int sigma = K``."""
        if K == 0:
            return cls.constant(0.0, gamma)
        if not gamma > 0:
            raise ValueError("K > 0 needs gamma > 0")
        return cls.gaussian(K / (gamma * width * math.sqrt(2 * math.pi)), width, 0.0, gamma)

    @property
    def peak(self) -> float:
        if self.kind in ("constant", "indicator-window", "gaussian-bump"):
            return self.params[0]
        if self.kind == "table":
            return float(np.max(self.table_y))
        raise ValueError(f"unknown sigma kind {self.kind!r}")

    @property
    def sigma_integral(self) -> float:
        """``int sigma(x) dx``; ``inf`` for a nonzero constant."""
        p = self.params
        if self.kind == "constant":
            return 0.0 if p[0] == 0 else math.inf
        if self.kind == "indicator-window":
            return 2.0 * p[2] * p[0]
        if self.kind == "gaussian-bump":
            return p[0] * p[2] * math.sqrt(2 * math.pi)
        return float(np.trapezoid(self.table_y, self.table_x))

    @property
    def integrable(self) -> bool:
        return math.isfinite(self.sigma_integral)

    @property
    def K(self) -> float:
        if self.gamma == 0:
            return 0.0
        return self.gamma * self.sigma_integral

    def effective_K(self, L: float) -> float:
        """``gamma * int_{-L}^{L} sigma``; finite stand-in for K when sigma is not integrable."""
        if self.kind == "constant":
            return self.gamma * self.params[0] * 2.0 * L
        return self.K

    def _kernel_args(self):
        code = {"constant": _CONSTANT, "indicator-window": _WINDOW,
                "gaussian-bump": _GAUSSIAN, "table": _TABLE}[self.kind]
        params = np.zeros(3)
        params[: len(self.params)] = self.params
        return code, params, self.table_x, self.table_y

    def __call__(self, x):
        code, p, tx, ty = self._kernel_args()
        return _eval_many(code, p, tx, ty, np.atleast_1d(np.asarray(x, dtype=float)))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "gamma": self.gamma}
        p = self.params
        if self.kind == "constant":
            d["value"] = p[0]
        elif self.kind == "indicator-window":
            d.update(value=p[0], center=p[1], halfwidth=p[2])
        elif self.kind == "gaussian-bump":
            d.update(amplitude=p[0], center=p[1], width=p[2])
        else:
            d.update(xs=self.table_x.tolist(), ys=self.table_y.tolist())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SigmaProfile":
        d = dict(d)
        kind = d.pop("kind")
        gamma = float(d.pop("gamma", 1.0))
        if "K" in d:
            if kind != "gaussian-bump":
                raise ValueError("sigma.K is only accepted with kind 'gaussian-bump'")
            return cls.for_K(float(d["K"]), gamma, float(d.get("width", 1.0)))
        if kind == "constant":
            return cls.constant(d["value"], gamma)
        if kind == "indicator-window":
            return cls.window(d["value"], d["halfwidth"], d.get("center", 0.0), gamma)
        if kind == "gaussian-bump":
            return cls.gaussian(d["amplitude"], d.get("width", 1.0), d.get("center", 0.0), gamma)
        if kind == "table":
            return cls.table(d["xs"], d["ys"], gamma)
        raise ValueError(f"unknown sigma kind {kind!r}")


@dataclass(frozen=True)
class TestFunction:
    """Nonnegative test function phi with known mass ``int phi``."""

    __test__ = False  # not a pytest class

    kind: str
    params: tuple[float, ...]
    table_x: np.ndarray = field(default=_NO_TABLE, repr=False, compare=False)
    table_y: np.ndarray = field(default=_NO_TABLE, repr=False, compare=False)

    @classmethod
    def gaussian(cls, mass: float = 1.0, width: float = 1.0, center: float = 0.0):
        if not (mass > 0 and width > 0):
            raise ValueError("mass and width must be positive")
        amp = mass / (width * math.sqrt(2 * math.pi))
        return cls("gaussian-bump", (amp, float(center), float(width)))

    @classmethod
    def raised_cosine(cls, mass: float = 1.0, halfwidth: float = 1.0, center: float = 0.0):
        if not (mass > 0 and halfwidth > 0):
            raise ValueError("mass and halfwidth must be positive")
        return cls("raised-cosine", (float(mass), float(center), float(halfwidth)))

    @classmethod
    def table(cls, xs, ys):
        xs, ys = _as_table(xs, ys)
        if np.any(ys < 0) or ys[0] != 0 or ys[-1] != 0:
            raise ValueError("table test function must be nonnegative and vanish at both ends")
        if not np.any(ys > 0):
            raise ValueError("table test function must have positive mass")
        return cls("table-with-compact-support", (), xs, ys)

    @property
    def mass(self) -> float:
        p = self.params
        if self.kind == "gaussian-bump":
            return p[0] * p[2] * math.sqrt(2 * math.pi)
        if self.kind == "raised-cosine":
            return p[0]
        return float(np.trapezoid(self.table_y, self.table_x))

    @property
    def support_radius(self) -> float:
        """Radius about the origin beyond which phi is zero or below 1e-12."""
        p = self.params
        if self.kind == "gaussian-bump":
            ratio = p[0] / 1e-12
            r = p[2] * math.sqrt(2 * math.log(ratio)) if ratio > 1 else 0.0
            return abs(p[1]) + r
        if self.kind == "raised-cosine":
            return abs(p[1]) + p[2]
        return float(max(abs(self.table_x[0]), abs(self.table_x[-1])))

    def _kernel_args(self):
        code = {"gaussian-bump": _GAUSSIAN, "raised-cosine": _COSINE,
                "table-with-compact-support": _TABLE}[self.kind]
        params = np.zeros(3)
        params[: len(self.params)] = self.params
        return code, params, self.table_x, self.table_y

    def __call__(self, x):
        code, p, tx, ty = self._kernel_args()
        return _eval_many(code, p, tx, ty, np.atleast_1d(np.asarray(x, dtype=float)))

    def to_dict(self) -> dict:
        p = self.params
        if self.kind == "gaussian-bump":
            return {"kind": self.kind, "mass": self.mass, "center": p[1], "width": p[2]}
        if self.kind == "raised-cosine":
            return {"kind": self.kind, "mass": p[0], "center": p[1], "halfwidth": p[2]}
        return {"kind": self.kind, "xs": self.table_x.tolist(), "ys": self.table_y.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TestFunction":
        kind = d["kind"]
        if kind == "gaussian-bump":
            return cls.gaussian(d.get("mass", 1.0), d.get("width", 1.0), d.get("center", 0.0))
        if kind == "raised-cosine":
            return cls.raised_cosine(d.get("mass", 1.0), d.get("halfwidth", 1.0), d.get("center", 0.0))
        if kind == "table-with-compact-support":
            return cls.table(d["xs"], d["ys"])
        raise ValueError(f"unknown test function kind {kind!r}")


def default_window(T: float, phi: TestFunction) -> float:
    return phi.support_radius + 8.0 * math.sqrt(T)


def default_dt(T: float) -> float:
    return min(0.05, T / 2000.0)


@dataclass(frozen=True)
class SimConfig:
    """One simulation setup; ``L`` and ``dt`` default to the truncation and quadrature rules."""

    T: float
    checkpoints: tuple[float, ...]
    sigma: SigmaProfile
    phi: TestFunction
    seed: int = 0
    L: float | None = None
    dt: float | None = None
    replicate_index: int = 0
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise ValueError(f"T must be positive, got {self.T}")
        cps = tuple(float(t) for t in self.checkpoints)
        object.__setattr__(self, "checkpoints", cps)
        if not cps or any(not 0 < t <= 1 for t in cps) or any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError(f"checkpoints must be increasing in (0, 1]: {cps}")
        if self.L is None:
            object.__setattr__(self, "L", default_window(self.T, self.phi))
        if self.dt is None:
            object.__setattr__(self, "dt", default_dt(self.T))
        if not 0 < self.dt <= self.T / 100 * (1 + 1e-12):
            raise ValueError(f"dt = {self.dt} must be in (0, T/100]")
        if self.L < default_window(self.T, self.phi) * (1 - 1e-12):
            raise ValueError(
                f"window L = {self.L} is below support_radius + 8 sqrt(T) = "
                f"{default_window(self.T, self.phi)}"
            )
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.cap < 1:
            raise ValueError("cap must be positive")

    def with_horizon(self, T: float) -> "SimConfig":
        """Same model at horizon ``T`` with window and ``dt`` re-derived."""
        return replace(self, T=float(T), L=None, dt=None)

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "checkpoints": list(self.checkpoints),
            "sigma": self.sigma.to_dict(),
            "phi": self.phi.to_dict(),
            "seed": int(self.seed),
            "L": self.L,
            "dt": self.dt,
            "cap": self.cap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        return cls(
            T=float(d["T"]),
            checkpoints=tuple(d.get("checkpoints", (1.0,))),
            sigma=SigmaProfile.from_dict(d["sigma"]),
            phi=TestFunction.from_dict(d.get("phi", {"kind": "gaussian-bump"})),
            seed=int(d.get("seed", 0)),
            L=d.get("L"),
            dt=d.get("dt"),
            replicate_index=int(d.get("replicate_index", 0)),
            cap=int(d.get("cap", DEFAULT_CAP)),
        )


@dataclass(frozen=True)
class ReplicateResult:
    """Occupation values ``<X_T(t_k), phi>`` at each checkpoint of one replicate."""

    values: np.ndarray
    peak_population: int
    branch_events: int
    offspring_counts: tuple[int, int, int]
    times: tuple[float, ...]
    mass: float

    @property
    def normalized(self) -> np.ndarray:
        """Values divided by the test-function mass (targets xi(t_k) as T grows)."""
        return self.values / self.mass


# ---------------------------------------------------------------------------
# compiled pieces


@njit(cache=True, nogil=True, inline="always")
def _eval_profile(kind, p, tx, ty, x):
    if kind == _CONSTANT:
        return p[0]
    if kind == _WINDOW:
        return p[0] if abs(x - p[1]) <= p[2] else 0.0
    if kind == _GAUSSIAN:
        z = (x - p[1]) / p[2]
        return p[0] * math.exp(-0.5 * z * z)
    if kind == _COSINE:
        d = x - p[1]
        if abs(d) >= p[2]:
            return 0.0
        return p[0] / (2.0 * p[2]) * (1.0 + math.cos(math.pi * d / p[2]))
    return _eval_table(tx, ty, x)


@njit(cache=True, nogil=True)
def _eval_table(tx, ty, x):
    if x <= tx[0] or x >= tx[-1]:
        return 0.0
    i = np.searchsorted(tx, x) - 1
    w = (x - tx[i]) / (tx[i + 1] - tx[i])
    return (1.0 - w) * ty[i] + w * ty[i + 1]


@njit(cache=True, nogil=True)
def _eval_many(kind, p, tx, ty, xs):
    out = np.empty(xs.size)
    for i in range(xs.size):
        out[i] = _eval_profile(kind, p, tx, ty, xs[i])
    return out


@njit(cache=True, nogil=True)
def _branch(sigma, u):
    if u < sigma:
        return 0
    if u >= 1.0 - sigma:
        return 2
    return 1


@njit(cache=True, nogil=True)
def _peak(n0, births, deaths):
    b = np.sort(np.asarray(births))
    d = np.sort(np.asarray(deaths))
    pop = n0
    best = n0
    i = 0
    j = 0
    while i < b.size:
        if j < d.size and d[j] <= b[i]:
            pop -= 1
            j += 1
        else:
            pop += 1
            i += 1
            if pop > best:
                best = pop
    return best


@functools.lru_cache(maxsize=None)
def _kernel(fkind):
    """Simulation kernel specialised to one test-function kind (a compile-time constant)."""

    @njit(nogil=True)
    def simulate(rng, x0, tck, dt, gamma, skind, sp, sx, sy, fp, fx, fy, hard_limit):
        nck = tck.size
        acc = np.zeros(nck)
        counts = np.zeros(3, np.int64)
        births = [0.0]
        births.pop()
        deaths = [0.0]
        deaths.pop()
        st = [0.0]
        st.pop()
        sx_ = [0.0]
        sx_.pop()
        sk = [0]
        sk.pop()
        for i in range(x0.size):
            st.append(0.0)
            sx_.append(x0[i])
            sk.append(0)
        mean_clock = 1.0 / gamma if gamma > 0 else 0.0
        while len(st) > 0:
            t = st.pop()
            x = sx_.pop()
            kc = sk.pop()
            fprev = _eval_profile(fkind, fp, fx, fy, x)
            j = int(t / dt) + 1
            if j * dt <= t:
                j += 1
            tau = t + rng.exponential(mean_clock) if gamma > 0 else np.inf
            stop = tck[kc]
            seg = 0.0
            while True:
                g = j * dt
                b = g
                if stop < b:
                    b = stop
                if tau < b:
                    b = tau
                h = b - t
                if h > 0.0:
                    x += math.sqrt(h) * rng.standard_normal()
                    fnew = _eval_profile(fkind, fp, fx, fy, x)
                    seg += h * (fprev + fnew)
                    fprev = fnew
                t = b
                if b == g:
                    j += 1
                if b == stop:
                    acc[kc] += 0.5 * seg
                    seg = 0.0
                    kc += 1
                    if kc == nck:
                        break
                    stop = tck[kc]
                if b == tau:
                    s = _eval_profile(skind, sp, sx, sy, x)
                    k = _branch(s, rng.random())
                    counts[k] += 1
                    if k == 0:
                        acc[kc] += 0.5 * seg
                        deaths.append(t)
                        break
                    if k == 2:
                        births.append(t)
                        st.append(t)
                        sx_.append(x)
                        sk.append(kc)
                        if len(births) > hard_limit:
                            return acc, counts, -1
                    tau = t + rng.exponential(mean_clock)
        peak = _peak(x0.size, births, deaths)
        return acc, counts, peak

    return simulate


# ---------------------------------------------------------------------------
# public API


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for replicate ``index`` of a run seeded with ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))


def init_poisson_field(L: float, rng: np.random.Generator) -> np.ndarray:
    """Poisson(2L) many i.i.d. uniform points on ``[-L, L]``."""
    if not L > 0:
        raise ValueError(f"L must be positive, got {L}")
    n = rng.poisson(2.0 * L)
    return rng.uniform(-L, L, size=n)


def branch_outcome(sigma_at_x: float, u: float) -> int:
    """Offspring count: 0 if ``u < sigma``, 2 if ``u >= 1 - sigma``, else 1."""
    if not 0.0 <= sigma_at_x <= 0.5:
        raise ValueError(f"sigma must lie in [0, 1/2], got {sigma_at_x}")
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must lie in [0, 1), got {u}")
    return int(_branch(float(sigma_at_x), float(u)))


def simulate_replicate(config: SimConfig, rng: np.random.Generator | None = None) -> ReplicateResult:
    """Simulate one replicate; the stream defaults to ``replicate_rng(seed, replicate_index)``."""
    if rng is None:
        rng = replicate_rng(config.seed, config.replicate_index)
    x0 = init_poisson_field(config.L, rng)
    tck = config.T * np.asarray(config.checkpoints)
    skind, sp, stx, sty = config.sigma._kernel_args()
    fkind, fp, ftx, fty = config.phi._kernel_args()
    acc, counts, peak = _kernel(fkind)(
        rng, x0, tck, float(config.dt), float(config.sigma.gamma),
        skind, sp, stx, sty, fp, ftx, fty, 50 * config.cap,
    )
    if peak < 0 or peak > config.cap:
        raise PopulationCapError(peak if peak >= 0 else 50 * config.cap, config.cap,
                                 config.replicate_index)
    return ReplicateResult(
        values=np.cumsum(acc) / config.T,
        peak_population=int(peak),
        branch_events=int(counts.sum()),
        offspring_counts=(int(counts[0]), int(counts[1]), int(counts[2])),
        times=config.checkpoints,
        mass=config.phi.mass,
    )


def _resolve_threads(threads) -> int:
    if threads in (None, "auto"):
        return os.cpu_count() or 1
    n = int(threads)
    if n < 1:
        raise ValueError("threads must be >= 1")
    return n


def run_replicates(
    config: SimConfig,
    R: int,
    threads: int | str | None = None,
    start: int = 0,
) -> list[ReplicateResult]:
    """Replicates ``start .. start + R - 1``, returned in index order.

    Replicate ``i`` uses :func:`replicate_rng` ``(config.seed, i)``; the thread
    count only changes scheduling.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    indices = range(start, start + R)

    def one(i):
        cfg = replace(config, replicate_index=i)
        try:
            return simulate_replicate(cfg)
        except PopulationCapError as err:
            raise PopulationCapError(err.peak, err.cap, i) from None

    n = min(_resolve_threads(threads), R)
    if n == 1:
        return [one(i) for i in indices]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(one, indices))
