"""Mixture density network: shapes, gradients, sampling, optimizer, checkpoints."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import multivariate_normal

from lfbi import mdn


def _random_phi(arch, seed):
    rng = np.random.default_rng(seed)
    phi = mdn.init_params(arch, rng)
    # move away from the near-zero init so gradients are informative
    return phi + 0.1 * rng.standard_normal(phi.shape)


def test_parameter_count_layout():
    arch = mdn.MdnArchitecture(x_dim=5, theta_dim=3, n_components=8, hidden=(50, 50))
    c, n = 8, 3
    n_out = c + c * n + c * n * n
    expect = (50 * 5 + 50) + (50 * 50 + 50) + (n_out * 50 + n_out)
    assert arch.n_outputs == n_out
    assert arch.n_params == expect


def test_pack_unpack_round_trip():
    arch = mdn.MdnArchitecture(4, 2, 3, (10, 10))
    phi = _random_phi(arch, 0)
    assert np.array_equal(arch.pack(*arch.unpack(phi)), phi)


def test_forward_shapes_and_weight_normalization():
    arch = mdn.MdnArchitecture(5, 3, 8)
    phi = _random_phi(arch, 1)
    mog = mdn.forward(arch, phi, np.zeros(5))
    assert mog.logits.shape == (8,)
    assert mog.means.shape == (8, 3)
    assert mog.chols.shape == (8, 3, 3)
    assert mog.weights.sum() == pytest.approx(1.0, abs=1e-12)
    # Cholesky factors: lower triangular with positive diagonal >= floor
    for c in mog.chols:
        assert np.allclose(np.triu(c, 1), 0.0)
        assert np.all(np.diag(c) >= mdn.CHOL_DIAG_FLOOR)


def test_zero_final_layer_gives_uniform_isotropic_mixture():
    # all-zero output layer (diag bias at softplus^{-1}(1)) collapses every
    # component onto N(0, I) with uniform weights
    arch = mdn.MdnArchitecture(3, 2, 4)
    w1, b1, w2, b2, w3, b3 = arch.unpack(mdn.init_params(arch, np.random.default_rng(2)))
    w3 = np.zeros_like(w3)
    b3 = np.zeros_like(b3)
    c, n = arch.n_components, arch.theta_dim
    diag_bias = math.log(math.e - 1.0)  # softplus -> 1
    b3_view = b3[c + c * n:].reshape(c, n, n)
    for i in range(n):
        b3_view[:, i, i] = diag_bias
    phi = arch.pack(w1, b1, w2, b2, w3, b3)
    mog = mdn.forward(arch, phi, np.ones(3))
    np.testing.assert_allclose(mog.weights, 0.25, atol=1e-12)
    np.testing.assert_allclose(mog.means, 0.0, atol=1e-12)
    for chol in mog.chols:
        np.testing.assert_allclose(chol, np.eye(n), atol=1e-9)
    lp = mdn.log_prob(arch, phi, np.ones(3), np.zeros(n))
    assert lp == pytest.approx(-n / 2 * math.log(2 * math.pi), abs=1e-9)


def test_log_prob_matches_scipy_mixture():
    arch = mdn.MdnArchitecture(2, 3, 4)
    phi = _random_phi(arch, 3)
    x = np.array([0.4, -1.0])
    mog = mdn.forward(arch, phi, x)
    theta = np.array([0.3, -0.2, 0.9])
    direct = 0.0
    for w, mu, chol in zip(mog.weights, mog.means, mog.chols):
        direct += w * multivariate_normal.pdf(theta, mean=mu, cov=chol @ chol.T)
    assert mdn.log_prob(arch, phi, x, theta) == pytest.approx(math.log(direct), rel=1e-10)


def test_density_integrates_to_one_1d():
    arch = mdn.MdnArchitecture(2, 1, 5)
    phi = _random_phi(arch, 4)
    x = np.array([1.0, -0.5])

    def pdf(t):
        return math.exp(mdn.log_prob(arch, phi, x, np.array([t])))

    mass, _ = quad(pdf, -30, 30, limit=200)
    assert mass == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("d,n", [(4, 3), (5, 4), (8, 5), (9, 2)])
def test_gradient_matches_finite_differences(d, n):
    arch = mdn.MdnArchitecture(d, n, 3, (8, 8))
    phi = _random_phi(arch, d * 10 + n)
    rng = np.random.default_rng(99)
    x = rng.standard_normal(d)
    theta = rng.standard_normal(n)
    grad = mdn.grad_log_prob(arch, phi, x, theta)
    h = 1e-5
    idx = rng.choice(arch.n_params, size=60, replace=False)
    for j in idx:
        e = np.zeros_like(phi)
        e[j] = h
        num = (mdn.log_prob(arch, phi + e, x, theta)
               - mdn.log_prob(arch, phi - e, x, theta)) / (2 * h)
        denom = max(1.0, abs(num), abs(grad[j]))
        assert abs(grad[j] - num) / denom < 1e-4


def test_masked_upper_triangle_has_exactly_zero_gradient():
    arch = mdn.MdnArchitecture(3, 3, 2, (6, 6))
    phi = _random_phi(arch, 7)
    rng = np.random.default_rng(11)
    xs = rng.standard_normal((4, 3))
    thetas = rng.standard_normal((4, 3))
    _, grad = mdn.weighted_nll_and_grad(arch, phi, xs, thetas, np.ones(4))
    w1, b1, w2, b2, gw3, gb3 = arch.unpack(grad)
    c, n = arch.n_components, arch.theta_dim
    gb_chol = gb3[c + c * n:].reshape(c, n, n)
    iu = np.triu_indices(n, k=1)
    for comp in range(c):
        assert np.all(gb_chol[comp][iu] == 0.0)
    gw_chol = gw3[c + c * n:].reshape(c, n, n, -1)
    for comp in range(c):
        assert np.all(gw_chol[comp][iu] == 0.0)


def test_weighted_nll_scales_linearly_in_weights():
    arch = mdn.MdnArchitecture(2, 2, 3)
    phi = _random_phi(arch, 8)
    rng = np.random.default_rng(12)
    xs = rng.standard_normal((6, 2))
    thetas = rng.standard_normal((6, 2))
    w = rng.uniform(0.1, 2.0, 6)
    l1, g1 = mdn.weighted_nll_and_grad(arch, phi, xs, thetas, w)
    l2, g2 = mdn.weighted_nll_and_grad(arch, phi, xs, thetas, 3.0 * w)
    assert l2 == pytest.approx(3.0 * l1, rel=1e-12)
    np.testing.assert_allclose(g2, 3.0 * g1, rtol=1e-11, atol=1e-15)
    # zero-weight samples contribute nothing
    w0 = w.copy()
    w0[2] = 0.0
    l3, _ = mdn.weighted_nll_and_grad(arch, phi, xs, thetas, w0)
    keep = np.arange(6) != 2
    l4, _ = mdn.weighted_nll_and_grad(arch, phi, xs[keep], thetas[keep], w0[keep])
    assert l3 == pytest.approx(l4, rel=1e-12)


def test_sampling_matches_mixture_moments():
    arch = mdn.MdnArchitecture(2, 2, 3)
    phi = _random_phi(arch, 13)
    x = np.array([0.2, 0.8])
    mog = mdn.forward(arch, phi, x)
    mean = mog.weights @ mog.means
    cov = np.zeros((2, 2))
    for w, mu, chol in zip(mog.weights, mog.means, mog.chols):
        cov += w * (chol @ chol.T + np.outer(mu - mean, mu - mean))
    draws = mdn.sample(arch, phi, x, 200_000, np.random.default_rng(14))
    np.testing.assert_allclose(draws.mean(axis=0), mean, atol=4 * np.sqrt(np.diag(cov).max() / 200_000) + 1e-3)
    np.testing.assert_allclose(np.cov(draws.T), cov, rtol=0.05, atol=0.01)


def test_mog_log_prob_agrees_with_log_prob_batch():
    arch = mdn.MdnArchitecture(3, 2, 4)
    phi = _random_phi(arch, 15)
    x = np.zeros(3)
    rng = np.random.default_rng(16)
    thetas = rng.standard_normal((20, 2))
    mog = mdn.forward(arch, phi, x)
    a = mdn.mog_log_prob(mog, thetas)
    b = mdn.log_prob_batch(arch, phi, np.tile(x, (20, 1)), thetas)
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_adam_first_step_is_signed_lr():
    # with fresh moments, the bias-corrected first step is lr * sign(grad)
    state = mdn.AdamState.init(3, lr=0.01, weight_decay=0.0)
    phi = np.zeros(3)
    grad = np.array([0.5, -2.0, 0.0])
    state, phi = mdn.adam_step(state, phi, grad)
    np.testing.assert_allclose(phi[:2], [-0.01, 0.01], rtol=1e-6)
    assert phi[2] == pytest.approx(0.0, abs=1e-12)


def test_adam_weight_decay_pulls_toward_zero():
    state = mdn.AdamState.init(1, lr=0.1, weight_decay=0.5)
    phi = np.array([4.0])
    state, phi2 = mdn.adam_step(state, phi, np.zeros(1))
    assert 0 < phi2[0] < 4.0


def test_checkpoint_round_trip_bit_exact(tmp_path):
    arch = mdn.MdnArchitecture(5, 3, 8)
    phi = _random_phi(arch, 17)
    adam = mdn.AdamState.init(arch.n_params)
    adam, phi = mdn.adam_step(adam, phi, np.full(arch.n_params, 0.1))
    path = tmp_path / "ckpt.json"
    mdn.save_checkpoint(path, arch, phi, adam=adam, extra={"round": 3})
    arch2, phi2, adam2, extra = mdn.load_checkpoint(path)
    assert arch2 == arch
    assert np.array_equal(phi2, phi)
    assert adam2.step == adam.step
    assert np.array_equal(adam2.m, adam.m)
    assert np.array_equal(adam2.v, adam.v)
    assert extra == {"round": 3}


def test_checkpoint_version_guard(tmp_path):
    arch = mdn.MdnArchitecture(2, 2, 2)
    phi = _random_phi(arch, 18)
    path = tmp_path / "c.json"
    mdn.save_checkpoint(path, arch, phi)
    import json
    rec = json.loads(path.read_text())
    rec["version"] = 99
    path.write_text(json.dumps(rec))
    with pytest.raises(ValueError):
        mdn.load_checkpoint(path)
