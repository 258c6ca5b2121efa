"""Experiment orchestration: config parsing, hashing, output layout,
per-round metric evaluation, and the bandwidth-scaling Monte Carlo study.

Output layout for a run: ``out/<config-hash>/metrics.csv`` plus, per seed,
``seed-<s>/checkpoints/round-<r>.json`` and ``seed-<s>/samples/round-<r>.jsonl``
(one original-space parameter vector per line).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass

import numpy as np
import yaml

from . import mdn, metrics, smcabc, snpe
from .kernels import identity_kernel_state, kernel_weight
from .simulators import get_model, model_names
from .snpe import SnpeState, TrainConfig

POSTERIOR_SAMPLE_COUNT = 1000


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    train: TrainConfig
    metrics: tuple[str, ...] = ("lmd", "nlog")
    seeds: tuple[int, ...] = (0,)
    reference: str | None = None
    out: str = "out"
    label: str = "default"

    def __post_init__(self):
        if self.model not in model_names():
            raise ValueError(f"unknown model {self.model!r}; choose from {model_names()}")
        if not self.seeds:
            raise ValueError("seeds list must be non-empty")
        bad = set(self.metrics) - set(metrics.METRIC_NAMES)
        if bad:
            raise ValueError(f"unknown metrics: {sorted(bad)}")


_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)} - {"seed"}
_TOP_KEYS = {"model", "train", "metrics", "seeds", "reference", "out", "label"}


def parse_config(text: str) -> ExperimentConfig:
    """Parse a YAML experiment config; unknown keys are hard errors."""
    raw = yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise ValueError("config must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "model" not in raw:
        raise ValueError("config requires a 'model' key")
    train_raw = dict(raw.get("train") or {})
    unknown = set(train_raw) - _TRAIN_KEYS
    if unknown:
        raise ValueError(f"unknown train keys: {sorted(unknown)}")
    if "hidden" in train_raw:
        train_raw["hidden"] = tuple(train_raw["hidden"])
    train = TrainConfig(**train_raw)
    return ExperimentConfig(
        model=raw["model"],
        train=train,
        metrics=tuple(raw.get("metrics", ("lmd", "nlog"))),
        seeds=tuple(int(s) for s in raw.get("seeds", (0,))),
        reference=raw.get("reference"),
        out=str(raw.get("out", "out")),
        label=str(raw.get("label", "default")),
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        return parse_config(f.read())


def config_hash(cfg: ExperimentConfig) -> str:
    """sha256 over the canonical JSON form, excluding the output directory
    (relocating results must not change identity)."""
    payload = {
        "model": cfg.model,
        "train": dataclasses.asdict(cfg.train),
        "metrics": list(cfg.metrics),
        "seeds": list(cfg.seeds),
        "reference": cfg.reference,
        "label": cfg.label,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def run_dir(cfg: ExperimentConfig) -> str:
    return os.path.join(cfg.out, config_hash(cfg))


# ---------------------------------------------------------------------------

def _checkpoint_path(base: str, seed: int, r: int) -> str:
    return os.path.join(base, f"seed-{seed}", "checkpoints", f"round-{r}.json")


def _samples_path(base: str, seed: int, r: int) -> str:
    return os.path.join(base, f"seed-{seed}", "samples", f"round-{r}.jsonl")


def _write_samples(path: str, thetas: np.ndarray) -> None:
    with open(path, "w") as f:
        for row in thetas:
            f.write(json.dumps([float(v) for v in row]) + "\n")


def evaluate_round(state: SnpeState, r: int, wanted, reference,
                   metric_seed: int) -> list[metrics.MetricRecord]:
    """Evaluate the requested metrics after round r; reference-dependent
    metrics without a reference emit a warning row instead."""
    model = state.model
    records = []
    post = None

    def posterior():
        nonlocal post
        if post is None:
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=metric_seed, spawn_key=(r, 0)))
            post = snpe.sample_posterior(state, POSTERIOR_SAMPLE_COUNT, rng)
        return post

    for name in wanted:
        if name in ("mmd", "c2st") and reference is None:
            records.append(metrics.MetricRecord(r, f"warning:{name}", float("nan"), metric_seed))
            continue
        if name == "mmd":
            n = min(len(reference), POSTERIOR_SAMPLE_COUNT)
            value = metrics.mmd(posterior()[:n], reference[:n])
        elif name == "c2st":
            n = min(len(reference), POSTERIOR_SAMPLE_COUNT)
            value = metrics.c2st(posterior()[:n], reference[:n], seed=metric_seed)
        elif name == "lmd":
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=metric_seed, spawn_key=(r, 1)))
            value = metrics.lmd(posterior()[:200], model, rng)
        elif name == "nlog":
            value = metrics.nlog(state.arch, state.phi, state.transform,
                                 model.s_obs, model.theta_star)
        else:
            raise ValueError(f"unknown metric {name!r}")
        records.append(metrics.MetricRecord(r, name, float(value), metric_seed))
    return records


def run_experiment(cfg: ExperimentConfig, progress=None) -> str:
    """Train every seed, evaluating metrics each round; returns the run dir."""
    base = run_dir(cfg)
    os.makedirs(base, exist_ok=True)
    with open(os.path.join(base, "config.json"), "w") as f:
        json.dump({"hash": config_hash(cfg),
                   "config": {"model": cfg.model,
                              "train": dataclasses.asdict(cfg.train),
                              "metrics": list(cfg.metrics),
                              "seeds": list(cfg.seeds),
                              "reference": cfg.reference,
                              "label": cfg.label}}, f, indent=2, sort_keys=True)
        f.write("\n")

    reference = None
    if cfg.reference is not None:
        reference, _meta = smcabc.load_reference(cfg.reference)

    model = get_model(cfg.model)
    all_records: list[metrics.MetricRecord] = []
    for seed in cfg.seeds:
        train_cfg = dataclasses.replace(cfg.train, seed=seed)
        state = snpe.init_state(model, train_cfg)
        for r in range(1, train_cfg.rounds + 1):
            snpe.run_round(state, r)
            all_records.extend(evaluate_round(state, r, cfg.metrics, reference, seed))
            all_records.append(metrics.MetricRecord(
                r, "cost:forward_passes", float(state.cost.forward_passes), seed))
            all_records.append(metrics.MetricRecord(
                r, "cost:simulator_calls", float(state.cost.simulator_calls), seed))

            ckpt = _checkpoint_path(base, seed, r)
            os.makedirs(os.path.dirname(ckpt), exist_ok=True)
            mdn.save_checkpoint(ckpt, state.arch, state.phi, adam=state.adam,
                                extra={"round": r, "seed": seed, "model": cfg.model})
            spath = _samples_path(base, seed, r)
            os.makedirs(os.path.dirname(spath), exist_ok=True)
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=seed, spawn_key=(r, 2)))
            _write_samples(spath, snpe.sample_posterior(state, 200, rng))
            if progress is not None:
                progress(seed, r, state)

    metrics.write_metric_csv(os.path.join(base, "metrics.csv"), all_records)
    return base


def reevaluate(cfg: ExperimentConfig) -> str:
    """Recompute metrics from stored checkpoints without retraining.

    Posterior-sample-based metrics are recomputed from fresh draws of the
    checkpointed density; training-internals-dependent state is not needed.
    """
    base = run_dir(cfg)
    reference = None
    if cfg.reference is not None:
        reference, _meta = smcabc.load_reference(cfg.reference)
    model = get_model(cfg.model)
    all_records: list[metrics.MetricRecord] = []
    for seed in cfg.seeds:
        train_cfg = dataclasses.replace(cfg.train, seed=seed)
        for r in range(1, train_cfg.rounds + 1):
            ckpt = _checkpoint_path(base, seed, r)
            if not os.path.exists(ckpt):
                raise FileNotFoundError(f"missing checkpoint {ckpt}")
            arch, phi, adam, _extra = mdn.load_checkpoint(ckpt)
            state = snpe.init_state(model, train_cfg)
            state.phi = phi
            state.adam = adam if adam is not None else state.adam
            all_records.extend(evaluate_round(state, r, cfg.metrics, reference, seed))
    metrics.write_metric_csv(os.path.join(base, "metrics.csv"), all_records)
    return base


# ---------------------------------------------------------------------------
# Bandwidth-scaling Monte Carlo study (1-D/2-D Gaussian toy)

@dataclass
class VarianceCheckResult:
    dim: int
    taus: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    slope: float

    def analytic_mean(self, tau: float) -> float:
        """Exact E[K_tau(x, 0)] for the standard normal-normal toy."""
        return (2.0 * math.pi * (2.0 + tau * tau)) ** (-self.dim / 2.0)


def variance_check(dim: int, taus, draws: int, seed: int) -> VarianceCheckResult:
    """Monte Carlo mean/variance of the kernel weight on the fixed toy
    (theta ~ N(0, I_d), x | theta ~ N(theta, I_d), x_o = 0, Sigma = I), with
    common random numbers across bandwidths; fits the log-log variance slope.
    """
    if dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    if draws < 10**5:
        raise ValueError("need at least 1e5 draws")
    taus = np.asarray(taus, dtype=float)
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal((draws, dim))
    x = theta + rng.standard_normal((draws, dim))
    x_o = np.zeros(dim)
    means = np.empty(len(taus))
    variances = np.empty(len(taus))
    for i, tau in enumerate(taus):
        ks = identity_kernel_state(dim, tau)
        w = kernel_weight(x, x_o, ks)
        means[i] = w.mean()
        variances[i] = w.var(ddof=1)
    slope = float(np.polyfit(np.log(taus), np.log(variances), 1)[0])
    return VarianceCheckResult(dim=dim, taus=taus, means=means,
                               variances=variances, slope=slope)


def write_variance_csv(path, result: VarianceCheckResult) -> None:
    with open(path, "w", newline="") as f:
        f.write("tau,mean,variance\n")
        for tau, m, v in zip(result.taus, result.means, result.variances):
            f.write(f"{tau!r},{m!r},{v!r}\n")


# ---------------------------------------------------------------------------
# Budget-matched comparison against the ABC baseline

def run_compare(cfg: ExperimentConfig, budget: int | None = None) -> str:
    """Run the sequential method and SMC-ABC under a matched simulation
    budget; merge metric rows keyed by cumulative simulator calls into
    ``compare.csv`` with method and config-hash tags."""
    base = run_dir(cfg)
    os.makedirs(base, exist_ok=True)
    model = get_model(cfg.model)
    if budget is None:
        budget = cfg.train.rounds * cfg.train.n_per_round
    h = config_hash(cfg)

    rows: list[tuple[int, str, str, float, int, str]] = []
    for seed in cfg.seeds:
        train_cfg = dataclasses.replace(cfg.train, seed=seed)
        state = snpe.init_state(model, train_cfg)
        for r in range(1, train_cfg.rounds + 1):
            snpe.run_round(state, r)
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=seed, spawn_key=(r, 1)))
            post = snpe.sample_posterior(state, 200, rng)
            value = metrics.lmd(post, model, rng)
            rows.append((state.cost.simulator_calls, "snpe", "lmd", value, seed, h))

        rng = np.random.default_rng(seed)

        def on_generation(pop, _seed=seed):
            idx = rng.choice(pop.size, size=min(200, pop.size), p=pop.weights)
            value = metrics.lmd(pop.particles[idx], model, rng)
            rows.append((pop.simulations, "smcabc", "lmd", value, _seed, h))

        smcabc.smc_abc(model, min(smcabc.DEFAULT_POPULATION, budget), budget, rng,
                       generation_callback=on_generation)

    rows.sort(key=lambda t: (t[4], t[1], t[0], t[2]))
    path = os.path.join(base, "compare.csv")
    with open(path, "w", newline="") as f:
        f.write("simulations,method,metric,value,seed,config_hash\n")
        for sims, method, name, value, seed, hh in rows:
            f.write(f"{sims},{method},{name},{value!r},{seed},{hh}\n")
    return path
