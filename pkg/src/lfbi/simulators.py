"""Benchmark generative models: priors, simulators, summary statistics.

Every simulator consumes a ``numpy.random.Generator`` and returns the summary
vector directly; "data" everywhere downstream means these summaries.  All
simulators are pure functions of (theta, rng stream), so fixed seeds give
bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MG1_N_JOBS = 50
LV_T_END = 30.0
LV_DT_RECORD = 0.2
LV_N_RECORD = 151
LV_X0, LV_Y0 = 50, 100
LV_EVENT_CAP = 1_000_000
LV_RATE_CLIP = 1e6
LV_VAR_FLOOR = 1e-10
GANDK_DEFAULT_M = 1000

_LOG_2PI = float(np.log(2.0 * np.pi))


class SimulationOverflowError(RuntimeError):
    """A jump-process trajectory exceeded the event cap."""


@dataclass(frozen=True)
class PriorSpec:
    """Box-uniform or diagonal-Gaussian prior."""

    kind: str  # "box" | "gaussian"
    low: np.ndarray | None = None
    high: np.ndarray | None = None
    mean: np.ndarray | None = None
    var: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "box":
            low = np.asarray(self.low, dtype=float)
            high = np.asarray(self.high, dtype=float)
            if not np.all(low < high):
                raise ValueError("box prior requires low < high per dimension")
            object.__setattr__(self, "low", low)
            object.__setattr__(self, "high", high)
        elif self.kind == "gaussian":
            mean = np.asarray(self.mean, dtype=float)
            var = np.asarray(self.var, dtype=float)
            if not np.all(var > 0):
                raise ValueError("gaussian prior requires positive variances")
            object.__setattr__(self, "mean", mean)
            object.__setattr__(self, "var", var)
        else:
            raise ValueError(f"unknown prior kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return len(self.low) if self.kind == "box" else len(self.mean)


@dataclass(frozen=True)
class ModelSpec:
    """A benchmark problem: prior, simulator and its observed summary."""

    name: str
    n: int
    d: int
    prior: PriorSpec
    theta_star: np.ndarray
    s_obs: np.ndarray
    ref_std: np.ndarray
    simulator: Callable[[np.ndarray, np.random.Generator], np.ndarray] = field(repr=False)

    def __post_init__(self):
        theta_star = np.asarray(self.theta_star, dtype=float)
        s_obs = np.asarray(self.s_obs, dtype=float)
        ref_std = np.asarray(self.ref_std, dtype=float)
        if not (self.d == len(s_obs) == len(ref_std)):
            raise ValueError("summary dimension mismatch")
        if not np.all(ref_std > 0):
            raise ValueError("ref_std components must be positive")
        if not np.isfinite(prior_logpdf(self.prior, theta_star)):
            raise ValueError("theta_star outside the prior support")
        object.__setattr__(self, "theta_star", theta_star)
        object.__setattr__(self, "s_obs", s_obs)
        object.__setattr__(self, "ref_std", ref_std)

    def simulate(self, theta, rng) -> np.ndarray:
        return self.simulator(np.asarray(theta, dtype=float), rng)


def prior_sample(prior: PriorSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be >= 1")
    if prior.kind == "box":
        return rng.uniform(prior.low, prior.high, size=(count, prior.dim))
    return prior.mean + np.sqrt(prior.var) * rng.standard_normal((count, prior.dim))


def prior_logpdf(prior: PriorSpec, theta) -> np.ndarray | float:
    """Log prior density; -inf outside the support. Accepts a vector or a batch."""
    theta = np.asarray(theta, dtype=float)
    if prior.kind == "box":
        inside = np.all((theta > prior.low) & (theta < prior.high), axis=-1)
        val = -np.sum(np.log(prior.high - prior.low))
        out = np.where(inside, val, -np.inf)
    else:
        z2 = (theta - prior.mean) ** 2 / prior.var
        out = -0.5 * np.sum(z2 + np.log(prior.var) + _LOG_2PI, axis=-1)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# M/G/1 queue

def simulate_mg1(theta, rng: np.random.Generator) -> np.ndarray:
    """Single-server queue: log percentiles (0/25/50/75/100) of inter-departure times.

    Service times are U(theta1, theta1 + theta2); arrival gaps are exponential
    with *rate* theta3 (mean 1/theta3).  I = 50 jobs.
    """
    t1, t2, t3 = float(theta[0]), float(theta[1]), float(theta[2])
    if t3 <= 0:
        raise ValueError("mg1 requires theta3 > 0")
    if t1 < 0 or t2 < 0:
        raise ValueError("mg1 requires theta1 >= 0 and theta2 >= 0")
    service = t1 + t2 * rng.random(MG1_N_JOBS)
    arrivals = np.cumsum(rng.exponential(1.0 / t3, MG1_N_JOBS))
    inter_dep = np.empty(MG1_N_JOBS)
    depart = 0.0
    for i in range(MG1_N_JOBS):
        inter_dep[i] = service[i] + max(0.0, arrivals[i] - depart)
        depart += inter_dep[i]
    return np.log(np.percentile(inter_dep, [0, 25, 50, 75, 100]))


# ---------------------------------------------------------------------------
# Lotka-Volterra predator-prey jump process

def _series_summary(z: np.ndarray) -> tuple[float, float, float, float]:
    zbar = z.mean()
    zc = z - zbar
    var = float(np.mean(zc**2))
    if var <= 0:
        return float(np.log(zbar)), float(np.log(LV_VAR_FLOOR)), 0.0, 0.0
    ac1 = float(np.mean(zc[:-1] * zc[1:]) / var)
    ac2 = float(np.mean(zc[:-2] * zc[2:]) / var)
    return float(np.log(zbar)), float(np.log(var + LV_VAR_FLOOR)), ac1, ac2


def simulate_lotka_volterra(theta, rng: np.random.Generator) -> np.ndarray:
    """Gillespie simulation of the predator-prey process; 9 summary features.

    Rates: predator birth exp(t1)*X*Y, predator death exp(t2)*X, prey birth
    exp(t3)*Y, prey consumption exp(t4)*X*Y, each clipped to [0, 1e6].
    Records both populations on a 151-point grid over 30 time units.
    Raises SimulationOverflowError past 1e6 events.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (4,) or not np.all(np.isfinite(theta)):
        raise ValueError("lotka_volterra requires a finite 4-vector")
    c = np.exp(np.clip(theta, -700.0, 700.0))
    x, y = LV_X0, LV_Y0
    xs = np.empty(LV_N_RECORD, dtype=np.int64)
    ys = np.empty(LV_N_RECORD, dtype=np.int64)
    t = 0.0
    next_rec = 0
    events = 0
    # block-draw uniforms to keep the event loop cheap
    buf = rng.random(8192)
    pos = 0
    while next_rec < LV_N_RECORD:
        r1 = min(c[0] * x * y, LV_RATE_CLIP)
        r2 = min(c[1] * x, LV_RATE_CLIP)
        r3 = min(c[2] * y, LV_RATE_CLIP)
        r4 = min(c[3] * x * y, LV_RATE_CLIP)
        total = r1 + r2 + r3 + r4
        if total <= 0.0:
            while next_rec < LV_N_RECORD:
                xs[next_rec] = x
                ys[next_rec] = y
                next_rec += 1
            break
        if pos + 2 > buf.shape[0]:
            buf = rng.random(8192)
            pos = 0
        dt = -np.log(1.0 - buf[pos]) / total
        u = buf[pos + 1] * total
        pos += 2
        t_new = t + dt
        while next_rec < LV_N_RECORD and next_rec * LV_DT_RECORD <= t_new:
            xs[next_rec] = x
            ys[next_rec] = y
            next_rec += 1
        if next_rec >= LV_N_RECORD:
            break
        t = t_new
        if u < r1:
            x += 1
        elif u < r1 + r2:
            x -= 1
        elif u < r1 + r2 + r3:
            y += 1
        else:
            y -= 1
        events += 1
        if events > LV_EVENT_CAP:
            raise SimulationOverflowError(
                f"lotka_volterra exceeded {LV_EVENT_CAP} events at theta={theta.tolist()}"
            )
    lmx, lvx, acx1, acx2 = _series_summary(xs.astype(float))
    lmy, lvy, acy1, acy2 = _series_summary(ys.astype(float))
    xc = xs - xs.mean()
    yc = ys - ys.mean()
    denom = np.sqrt(np.sum(xc**2) * np.sum(yc**2))
    cc = float(np.sum(xc * yc) / denom) if denom > 0 else 0.0
    return np.array([lmx, lmy, lvx, lvy, acx1, acx2, acy1, acy2, cc])


# ---------------------------------------------------------------------------
# SLCP: simple likelihood, complex posterior

def simulate_slcp(theta, rng: np.random.Generator) -> np.ndarray:
    """Four i.i.d. 2-D Gaussian draws concatenated into an 8-vector."""
    theta = np.asarray(theta, dtype=float)
    mu = theta[:2]
    s1 = theta[2] ** 2
    s2 = theta[3] ** 2
    rho = np.tanh(theta[4])
    # factor with L @ L.T == [[s1^2, rho*s1*s2], [rho*s1*s2, s2^2]];
    # remains valid (deterministic coordinate) when s1 or s2 is zero
    chol = np.array([[s1, 0.0], [rho * s2, s2 * np.sqrt(max(0.0, 1.0 - rho**2))]])
    z = rng.standard_normal((4, 2))
    return (mu + z @ chol.T).ravel()


# ---------------------------------------------------------------------------
# g-and-k quantile distribution

def gandk_draws(theta, rng: np.random.Generator, m: int = GANDK_DEFAULT_M) -> np.ndarray:
    """Raw g-and-k samples via the quantile transform of standard normals.

    Parameters arrive unconstrained: theta = (A, log B, g, log(k + 1/2)).
    With g = k = 0 the map collapses to A + B z, i.e. N(A, B^2).
    """
    theta = np.asarray(theta, dtype=float)
    a = theta[0]
    b = np.exp(theta[1])
    g = theta[2]
    k = np.exp(theta[3]) - 0.5
    z = rng.standard_normal(m)
    # (1 - exp(-g z)) / (1 + exp(-g z)) == tanh(g z / 2), overflow-safe
    return a + b * (1.0 + 0.8 * np.tanh(0.5 * g * z)) * (1.0 + z**2) ** k * z


def simulate_gandk(theta, rng: np.random.Generator, m: int = GANDK_DEFAULT_M) -> np.ndarray:
    """Octile-based summaries (S_A, S_B, S_g, S_k) of m g-and-k draws."""
    x = gandk_draws(theta, rng, m)
    e = np.quantile(x, np.arange(1, 8) / 8.0)
    s_b = e[5] - e[1]
    return np.array([
        e[3],
        s_b,
        (e[5] + e[1] - 2.0 * e[3]) / s_b,
        (e[6] - e[4] + e[2] - e[0]) / s_b,
    ])


# ---------------------------------------------------------------------------
# 1-D conjugate normal-normal toy (used by tests and smoke configs)

def simulate_gauss_toy(theta, rng: np.random.Generator) -> np.ndarray:
    return np.asarray(theta, dtype=float)[:1] + rng.standard_normal(1)


def gauss_toy_posterior(model: "ModelSpec") -> tuple[float, float]:
    """Analytic posterior (mean, std) of the normal-normal toy."""
    x_o = float(model.s_obs[0])
    return x_o / 2.0, np.sqrt(0.5)


_REGISTRY: dict[str, Callable[[], ModelSpec]] = {}


def _register(name):
    def deco(fn):
        _REGISTRY[name] = fn
        return fn
    return deco


@_register("mg1")
def _mg1() -> ModelSpec:
    return ModelSpec(
        name="mg1",
        n=3,
        d=5,
        prior=PriorSpec("box", low=[0.0, 0.0, 0.0], high=[10.0, 10.0, 1.0 / 3.0]),
        theta_star=[1.0, 4.0, 0.2],
        s_obs=[0.0929, 0.8333, 1.4484, 1.9773, 3.1510],
        ref_std=[0.1049, 0.1336, 0.1006, 0.1893, 0.2918],
        simulator=simulate_mg1,
    )


@_register("lotka_volterra")
def _lotka_volterra() -> ModelSpec:
    return ModelSpec(
        name="lotka_volterra",
        n=4,
        d=9,
        prior=PriorSpec("box", low=[-5.0] * 4, high=[2.0] * 4),
        theta_star=np.log([0.01, 0.5, 1.0, 0.01]),
        s_obs=[4.6431, 4.0170, 7.1992, 6.6024, 0.9765, 0.9237, 0.9712, 0.9078, 0.0476],
        ref_std=[0.3294, 0.5483, 0.6285, 0.9639, 0.0091, 0.0222, 0.0107, 0.0224, 0.1823],
        simulator=simulate_lotka_volterra,
    )


@_register("slcp")
def _slcp() -> ModelSpec:
    return ModelSpec(
        name="slcp",
        n=5,
        d=8,
        prior=PriorSpec("box", low=[-3.0] * 5, high=[3.0] * 5),
        theta_star=[0.7, -2.9, -1.0, -0.9, 0.6],
        s_obs=[1.4097, -1.8396, 0.8758, -4.4767, -0.1753, -3.1562, -0.6638, -2.7063],
        ref_std=[1.0, 0.81, 1.0, 0.81, 1.0, 0.81, 1.0, 0.81],
        simulator=simulate_slcp,
    )


@_register("gandk")
def _gandk() -> ModelSpec:
    # natural-space ground truth (A, B, g, k) = (3, 1, 2, 0.5)
    return ModelSpec(
        name="gandk",
        n=4,
        d=4,
        prior=PriorSpec("gaussian", mean=np.zeros(4), var=np.full(4, 4.0)),
        theta_star=[3.0, 0.0, 2.0, 0.0],
        s_obs=[2.9679, 1.5339, 0.4691, 1.7889],
        ref_std=[0.0395, 0.1129, 0.0384, 0.1219],
        simulator=simulate_gandk,
    )


@_register("gauss_toy")
def _gauss_toy() -> ModelSpec:
    return ModelSpec(
        name="gauss_toy",
        n=1,
        d=1,
        prior=PriorSpec("gaussian", mean=np.zeros(1), var=np.ones(1)),
        theta_star=[1.0],
        s_obs=[1.5],
        ref_std=[1.0],
        simulator=simulate_gauss_toy,
    )


def get_model(name: str) -> ModelSpec:
    """Look a benchmark model up by name."""
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(_REGISTRY)}") from None


def model_names() -> list[str]:
    return sorted(_REGISTRY)


def sample_stream(seed: int, round_index: int, sample_index: int) -> np.random.Generator:
    """Independent per-sample RNG stream keyed by (seed, round, sample)."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(round_index, sample_index))
    )
