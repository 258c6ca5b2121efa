"""Sequential Monte Carlo ABC reference-posterior generator.

Population-Monte-Carlo variant: the tolerance for each generation is the
0.5-quantile of the previous generation's accepted distances, proposals are
Gaussian perturbations with covariance twice the weighted empirical
covariance, and particles are importance-reweighted by
prior / (weighted mixture of perturbation kernels).  Distances are Euclidean
norms of summaries standardized by the model's reference scales.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .kernels import ess
from .simulators import (ModelSpec, get_model, prior_sample, prior_logpdf,
                         SimulationOverflowError)

DEFAULT_POPULATION = 1000
REFERENCE_BUDGET = 500_000
DESK_BUDGET = 50_000

FILE_VERSION = 1


class BudgetExhaustedError(RuntimeError):
    """First population could not be completed within the simulation budget."""

    def __init__(self, message: str, trace: list["SmcPopulation"]):
        super().__init__(message)
        self.trace = trace


@dataclass
class SmcPopulation:
    particles: np.ndarray      # (P, n) in the original parameter space
    weights: np.ndarray        # normalized, sum to 1
    distances: np.ndarray      # accepted normalized distances, all <= epsilon
    epsilon: float
    simulations: int           # cumulative simulator calls so far

    def __post_init__(self):
        s = float(self.weights.sum())
        if not math.isclose(s, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError("population weights must be normalized")

    @property
    def size(self) -> int:
        return self.particles.shape[0]

    def weighted_mean(self) -> np.ndarray:
        return self.weights @ self.particles

    def weighted_cov(self) -> np.ndarray:
        mu = self.weighted_mean()
        d = self.particles - mu
        return (self.weights[:, None] * d).T @ d / (1.0 - float(np.sum(self.weights**2)))


def _distance(model: ModelSpec, x: np.ndarray) -> float:
    return float(np.linalg.norm((x - model.s_obs) / model.ref_std))


def _simulate_distance(model: ModelSpec, theta: np.ndarray,
                       rng: np.random.Generator) -> float:
    try:
        return _distance(model, model.simulate(theta, rng))
    except SimulationOverflowError:
        return math.inf


def _mixture_log_weights(pop: SmcPopulation, new_particles: np.ndarray,
                         cov: np.ndarray, prior) -> np.ndarray:
    """log prior - log(sum_j w_j N(theta | theta_j, cov)) per new particle."""
    c, low = cho_factor(cov, lower=True)
    log_det = 2.0 * float(np.sum(np.log(np.diag(c))))
    n = cov.shape[0]
    diff = new_particles[:, None, :] - pop.particles[None, :, :]   # (P, Pold, n)
    solved = cho_solve((c, low), diff.reshape(-1, n).T).T.reshape(diff.shape)
    m2 = np.einsum("ijk,ijk->ij", diff, solved)
    log_kernel = -0.5 * (n * math.log(2 * math.pi) + log_det + m2)
    with np.errstate(divide="ignore"):
        log_mix = np.logaddexp.reduce(log_kernel + np.log(pop.weights)[None, :], axis=1)
    return prior_logpdf(prior, new_particles) - log_mix


def smc_abc(model: ModelSpec, population_size: int, budget: int,
            rng: np.random.Generator,
            generation_callback=None) -> list[SmcPopulation]:
    """Run the adaptive SMC-ABC loop until the simulation budget is spent.

    Returns the trace of generations; the last entry is the reference
    population.  Raises BudgetExhaustedError (carrying the partial trace) if
    even the accept-all first generation cannot be completed.
    """
    if budget < population_size:
        raise ValueError("budget must cover at least one population")
    sims = 0

    # generation 1: epsilon = inf, a prior sample with recorded distances
    thetas = prior_sample(model.prior, population_size, rng)
    dists = np.empty(population_size)
    for i in range(population_size):
        if sims >= budget:
            raise BudgetExhaustedError("budget exhausted during first generation", [])
        dists[i] = _simulate_distance(model, thetas[i], rng)
        sims += 1
    pop = SmcPopulation(particles=thetas, weights=np.full(population_size, 1.0 / population_size),
                        distances=dists, epsilon=math.inf, simulations=sims)
    trace = [pop]
    if generation_callback is not None:
        generation_callback(pop)

    while True:
        epsilon = float(np.quantile(pop.distances[np.isfinite(pop.distances)], 0.5))
        cov = 2.0 * pop.weighted_cov()
        cov = 0.5 * (cov + cov.T) + 1e-10 * np.eye(cov.shape[0]) * max(1.0, np.trace(cov))
        chol = np.linalg.cholesky(cov)

        new_thetas = np.empty_like(pop.particles)
        new_dists = np.empty(population_size)
        accepted = 0
        exhausted = False
        while accepted < population_size:
            if sims >= budget:
                exhausted = True
                break
            j = rng.choice(population_size, p=pop.weights)
            cand = pop.particles[j] + chol @ rng.standard_normal(cov.shape[0])
            if not np.isfinite(prior_logpdf(model.prior, cand)):
                continue
            d = _simulate_distance(model, cand, rng)
            sims += 1
            if d <= epsilon:
                new_thetas[accepted] = cand
                new_dists[accepted] = d
                accepted += 1
        if exhausted:
            break

        log_w = _mixture_log_weights(pop, new_thetas, cov, model.prior)
        log_w -= log_w.max()
        w = np.exp(log_w)
        w /= w.sum()
        if ess(w) < population_size / 2.0:
            idx = rng.choice(population_size, size=population_size, p=w)
            new_thetas = new_thetas[idx]
            new_dists = new_dists[idx]
            w = np.full(population_size, 1.0 / population_size)
        pop = SmcPopulation(particles=new_thetas, weights=w, distances=new_dists,
                            epsilon=epsilon, simulations=sims)
        trace.append(pop)
        if generation_callback is not None:
            generation_callback(pop)
    return trace


def reference_posterior(model: ModelSpec, count: int, budget: int,
                        rng: np.random.Generator, seed_label: int = 0):
    """Run smc_abc and resample the final population to `count` equally
    weighted particles; returns (theta matrix, metadata dict)."""
    trace = smc_abc(model, DEFAULT_POPULATION, budget, rng)
    final = trace[-1]
    idx = rng.choice(final.size, size=count, p=final.weights)
    meta = {
        "version": FILE_VERSION,
        "model": model.name,
        "seed": seed_label,
        "budget": budget,
        "simulations": final.simulations,
        "generations": len(trace),
        "epsilon": final.epsilon,
        "count": count,
    }
    return final.particles[idx], meta


def save_reference(path, thetas: np.ndarray, meta: dict) -> None:
    """Persist a reference posterior as .npz plus a JSON metadata sidecar."""
    path = str(path)
    np.savez(path if path.endswith(".npz") else path + ".npz", thetas=thetas)
    side = (path[:-4] if path.endswith(".npz") else path) + ".json"
    with open(side, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_reference(path) -> tuple[np.ndarray, dict]:
    path = str(path)
    if not path.endswith(".npz"):
        path = path + ".npz"
    with np.load(path) as z:
        thetas = np.array(z["thetas"])
    with open(path[:-4] + ".json") as f:
        meta = json.load(f)
    if meta.get("version") != FILE_VERSION:
        raise ValueError(f"unsupported reference file version {meta.get('version')!r}")
    return thetas, meta
