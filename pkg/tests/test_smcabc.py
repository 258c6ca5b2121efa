"""Sequential Monte Carlo ABC: conjugate oracle, schedule, persistence."""

import numpy as np
import pytest

from lfbi import smcabc
from lfbi.simulators import get_model, gauss_toy_posterior, prior_logpdf


@pytest.fixture(scope="module")
def toy_trace():
    model = get_model("gauss_toy")
    rng = np.random.default_rng(1)
    return model, smcabc.smc_abc(model, 500, 20_000, rng)


def test_first_generation_is_prior_sample(toy_trace):
    model, trace = toy_trace
    first = trace[0]
    assert first.epsilon == np.inf
    assert first.size == 500
    np.testing.assert_allclose(first.weights, 1 / 500)
    # prior N(0,1): sample moments match
    assert abs(first.particles.mean()) < 0.15
    assert abs(first.particles.std() - 1.0) < 0.15


def test_tolerance_strictly_decreasing(toy_trace):
    _, trace = toy_trace
    eps = [p.epsilon for p in trace]
    assert all(b < a for a, b in zip(eps[1:], eps[2:]))


def test_accepted_distances_within_tolerance(toy_trace):
    _, trace = toy_trace
    for pop in trace[1:]:
        assert np.all(pop.distances <= pop.epsilon)


def test_weights_normalized_and_ess_floor(toy_trace):
    _, trace = toy_trace
    for pop in trace:
        assert pop.weights.sum() == pytest.approx(1.0, abs=1e-9)
        ess = pop.weights.sum() ** 2 / (pop.weights ** 2).sum()
        assert ess >= pop.size / 10


def test_particles_inside_prior_support(toy_trace):
    model, trace = toy_trace
    for pop in trace:
        assert np.all(np.isfinite(prior_logpdf(model.prior, pop.particles)))


def test_simulation_count_monotone_within_budget(toy_trace):
    _, trace = toy_trace
    sims = [p.simulations for p in trace]
    assert all(b > a for a, b in zip(sims, sims[1:]))
    assert sims[-1] <= 20_000


def test_conjugate_posterior_recovered(toy_trace):
    model, trace = toy_trace
    final = trace[-1]
    mu, sd = gauss_toy_posterior(model)
    wm = float(final.weights @ final.particles[:, 0])
    wc = float(np.sqrt(final.weighted_cov()[0, 0]))
    ess = final.weights.sum() ** 2 / (final.weights ** 2).sum()
    assert abs(wm - mu) < 3 * wc / np.sqrt(ess)
    # ABC at finite tolerance inflates the spread slightly
    assert sd * 0.8 < wc < sd * 1.6


def test_budget_must_cover_one_population():
    model = get_model("gauss_toy")
    with pytest.raises(ValueError):
        smcabc.smc_abc(model, 100, 50, np.random.default_rng(0))


def test_reference_posterior_resampled_uniform(tmp_path):
    model = get_model("gauss_toy")
    rng = np.random.default_rng(2)
    thetas, meta = smcabc.reference_posterior(model, 800, 5000, rng, seed_label=2)
    assert thetas.shape == (800, 1)
    assert meta["model"] == "gauss_toy"
    assert meta["count"] == 800
    assert meta["simulations"] <= meta["budget"] == 5000

    path = tmp_path / "ref.npz"
    smcabc.save_reference(path, thetas, meta)
    back, meta2 = smcabc.load_reference(path)
    assert np.array_equal(back, thetas)
    assert meta2 == meta


def test_reference_version_guard(tmp_path):
    model = get_model("gauss_toy")
    rng = np.random.default_rng(3)
    thetas, meta = smcabc.reference_posterior(model, 100, 2000, rng)
    path = tmp_path / "ref.npz"
    meta["version"] = 42
    smcabc.save_reference(path, thetas, meta)
    with pytest.raises(ValueError):
        smcabc.load_reference(path)
