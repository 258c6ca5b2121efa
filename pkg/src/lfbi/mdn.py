"""Conditional mixture-of-Gaussians density network with analytic gradients.

The network maps a summary vector x through two tanh hidden layers to the
parameters of a C-component Gaussian mixture over the (transformed) model
parameters: mixture logits, component means, and per-component raw Cholesky
matrices.  Only the lower triangle of each raw Cholesky matrix is used; the
diagonal passes through softplus with a small positive floor.  All gradients
are hand-derived backpropagation, no autodiff.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp, softmax

CHOL_DIAG_FLOOR = 1e-6
_LOG_2PI = math.log(2.0 * math.pi)


class NumericalOverflowError(FloatingPointError):
    """Forward pass produced non-finite activations."""


@dataclass(frozen=True)
class MdnArchitecture:
    """Shape descriptor; parameter layout is a pure function of these fields."""

    x_dim: int
    theta_dim: int
    n_components: int = 8
    hidden: tuple[int, int] = (50, 50)

    @property
    def n_outputs(self) -> int:
        c, n = self.n_components, self.theta_dim
        return c + c * n + c * n * n

    def _layout(self):
        d, (h1, h2), k = self.x_dim, self.hidden, self.n_outputs
        sizes = [h1 * d, h1, h2 * h1, h2, k * h2, k]
        offs = np.cumsum([0] + sizes)
        return offs, (h1, d), (h2, h1), (k, h2)

    @property
    def n_params(self) -> int:
        return int(self._layout()[0][-1])

    def unpack(self, phi: np.ndarray):
        offs, s1, s2, s3 = self._layout()
        if phi.shape != (self.n_params,):
            raise ValueError(f"phi must have length {self.n_params}")
        w1 = phi[offs[0]:offs[1]].reshape(s1)
        b1 = phi[offs[1]:offs[2]]
        w2 = phi[offs[2]:offs[3]].reshape(s2)
        b2 = phi[offs[3]:offs[4]]
        w3 = phi[offs[4]:offs[5]].reshape(s3)
        b3 = phi[offs[5]:offs[6]]
        return w1, b1, w2, b2, w3, b3

    def pack(self, w1, b1, w2, b2, w3, b3) -> np.ndarray:
        return np.concatenate([a.ravel() for a in (w1, b1, w2, b2, w3, b3)])

    def to_dict(self) -> dict:
        return {"x_dim": self.x_dim, "theta_dim": self.theta_dim,
                "n_components": self.n_components, "hidden": list(self.hidden)}

    @staticmethod
    def from_dict(d: dict) -> "MdnArchitecture":
        return MdnArchitecture(d["x_dim"], d["theta_dim"], d["n_components"],
                               tuple(d["hidden"]))


@dataclass(frozen=True)
class MoGOutput:
    logits: np.ndarray   # (C,)
    means: np.ndarray    # (C, n)
    chols: np.ndarray    # (C, n, n) lower triangular, positive diagonal

    @property
    def weights(self) -> np.ndarray:
        return softmax(self.logits)


def init_params(arch: MdnArchitecture, rng: np.random.Generator,
                mean_jitter: float = 0.01) -> np.ndarray:
    """Glorot-uniform hidden layers; near-zero final layer.

    The Cholesky-diagonal biases start at softplus^{-1}(1) so the initial
    conditional is a unit-scale mixture at the origin.  Mean biases get a
    small jitter: exactly identical components would receive identical
    gradients and never separate.
    """
    d, (h1, h2) = arch.x_dim, arch.hidden
    c, n = arch.n_components, arch.theta_dim

    def glorot(fan_out, fan_in):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_out, fan_in))

    w1 = glorot(h1, d)
    w2 = glorot(h2, h1)
    w3 = np.zeros((arch.n_outputs, h2))
    b3 = np.zeros(arch.n_outputs)
    b3[c:c + c * n] = mean_jitter * rng.standard_normal(c * n)
    diag_bias = math.log(math.e - 1.0)  # softplus^{-1}(1)
    traw = b3[c + c * n:].reshape(c, n, n)
    traw[:, np.arange(n), np.arange(n)] = diag_bias
    return arch.pack(w1, np.zeros(h1), w2, np.zeros(h2), w3, b3)


def _forward_core(arch: MdnArchitecture, phi: np.ndarray, x: np.ndarray):
    w1, b1, w2, b2, w3, b3 = arch.unpack(phi)
    a1 = np.tanh(x @ w1.T + b1)
    a2 = np.tanh(a1 @ w2.T + b2)
    out = a2 @ w3.T + b3
    if not np.all(np.isfinite(out)):
        raise NumericalOverflowError("non-finite network outputs")
    return a1, a2, out


def _split_outputs(arch: MdnArchitecture, out: np.ndarray):
    b = out.shape[0]
    c, n = arch.n_components, arch.theta_dim
    logits = out[:, :c]
    means = out[:, c:c + c * n].reshape(b, c, n)
    traw = out[:, c + c * n:].reshape(b, c, n, n)
    diag_raw = traw[:, :, np.arange(n), np.arange(n)]
    chols = np.tril(traw, k=-1)
    # softplus diagonal, clamped below so covariances stay invertible
    chols[:, :, np.arange(n), np.arange(n)] = np.maximum(
        np.logaddexp(0.0, diag_raw), CHOL_DIAG_FLOOR)
    return logits, means, chols, diag_raw


def forward(arch: MdnArchitecture, phi, x) -> MoGOutput:
    """Evaluate the mixture parameters conditioned on a single summary x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _, _, out = _forward_core(arch, np.asarray(phi, dtype=float), x)
    logits, means, chols, _ = _split_outputs(arch, out)
    return MoGOutput(logits[0], means[0], chols[0])


def _solve_lower(chols: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Solve L z = delta for batched small lower-triangular L."""
    n = delta.shape[-1]
    z = np.empty_like(delta)
    for i in range(n):
        acc = delta[..., i]
        if i:
            acc = acc - np.einsum("...j,...j->...", chols[..., i, :i], z[..., :i])
        z[..., i] = acc / chols[..., i, i]
    return z


def _solve_lower_t(chols: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Solve L^T a = z for batched small lower-triangular L."""
    n = z.shape[-1]
    a = np.empty_like(z)
    for i in reversed(range(n)):
        acc = z[..., i]
        if i < n - 1:
            acc = acc - np.einsum("...j,...j->...", chols[..., i + 1:, i], a[..., i + 1:])
        a[..., i] = acc / chols[..., i, i]
    return a


def _component_logdensity(arch, logits, means, chols, theta):
    n = arch.theta_dim
    delta = theta[:, None, :] - means
    z = _solve_lower(chols, delta)
    log_diag = np.log(chols[:, :, np.arange(n), np.arange(n)])
    log_norm = -0.5 * np.sum(z**2, axis=-1) - np.sum(log_diag, axis=-1) - 0.5 * n * _LOG_2PI
    log_w = logits - logsumexp(logits, axis=1, keepdims=True)
    return log_w, log_norm, z


def log_prob_batch(arch: MdnArchitecture, phi, xs, thetas) -> np.ndarray:
    """log q(theta_i | x_i) for aligned batches, via log-sum-exp."""
    phi = np.asarray(phi, dtype=float)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    _, _, out = _forward_core(arch, phi, xs)
    logits, means, chols, _ = _split_outputs(arch, out)
    log_w, log_norm, _ = _component_logdensity(arch, logits, means, chols, thetas)
    return logsumexp(log_w + log_norm, axis=1)


def log_prob(arch: MdnArchitecture, phi, x, theta) -> float:
    return float(log_prob_batch(arch, phi, x, theta)[0])


def weighted_nll_and_grad(arch: MdnArchitecture, phi, xs, thetas, weights):
    """Loss sum_i w_i * (-log q(theta_i | x_i)) and its exact phi-gradient."""
    phi = np.asarray(phi, dtype=float)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    n = arch.theta_dim
    w1, b1, w2, b2, w3, b3 = arch.unpack(phi)

    a1 = np.tanh(xs @ w1.T + b1)
    a2 = np.tanh(a1 @ w2.T + b2)
    out = a2 @ w3.T + b3
    if not np.all(np.isfinite(out)):
        raise NumericalOverflowError("non-finite network outputs")
    logits, means, chols, diag_raw = _split_outputs(arch, out)
    log_w, log_norm, z = _component_logdensity(arch, logits, means, chols, thetas)
    log_q = logsumexp(log_w + log_norm, axis=1)
    loss = float(np.sum(w * (-log_q)))

    coef = -w  # gradient of sum_i coef_i * log q_i
    resp = np.exp(log_w + log_norm - log_q[:, None])            # (B, C)
    pi = np.exp(log_w)
    d_logits = coef[:, None] * (resp - pi)
    rho = coef[:, None] * resp

    a = _solve_lower_t(chols, z)                                # L^{-T} z
    d_means = rho[:, :, None] * a
    # d logN / dL = a z^T on the lower triangle, minus 1/L_ii on the diagonal
    g = a[:, :, :, None] * z[:, :, None, :]
    idx = np.arange(n)
    g[:, :, idx, idx] -= 1.0 / chols[:, :, idx, idx]
    g = np.tril(g)
    g *= rho[:, :, None, None]
    g[:, :, idx, idx] *= expit(diag_raw)                        # softplus chain rule
    g[:, :, idx, idx] *= np.logaddexp(0.0, diag_raw) > CHOL_DIAG_FLOOR  # clamp region
    d_out = np.concatenate(
        [d_logits, d_means.reshape(xs.shape[0], -1), g.reshape(xs.shape[0], -1)], axis=1)

    d_w3 = d_out.T @ a2
    d_b3 = d_out.sum(axis=0)
    d_z2 = (d_out @ w3) * (1.0 - a2**2)
    d_w2 = d_z2.T @ a1
    d_b2 = d_z2.sum(axis=0)
    d_z1 = (d_z2 @ w2) * (1.0 - a1**2)
    d_w1 = d_z1.T @ xs
    d_b1 = d_z1.sum(axis=0)
    return loss, arch.pack(d_w1, d_b1, d_w2, d_b2, d_w3, d_b3)


def grad_log_prob(arch: MdnArchitecture, phi, x, theta) -> np.ndarray:
    """Exact gradient of log q(theta | x) with respect to every entry of phi."""
    _, grad = weighted_nll_and_grad(arch, phi, x, theta, np.ones(1))
    return -grad


def mog_log_prob(mog: MoGOutput, thetas) -> np.ndarray:
    """Density of a batch of parameters under a fixed mixture (single forward)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    n = mog.means.shape[-1]
    delta = thetas[:, None, :] - mog.means[None]
    z = _solve_lower(mog.chols[None], delta)
    log_diag = np.log(mog.chols[np.newaxis, :, np.arange(n), np.arange(n)])
    log_norm = -0.5 * np.sum(z**2, axis=-1) - np.sum(log_diag, axis=-1) - 0.5 * n * _LOG_2PI
    log_w = mog.logits - logsumexp(mog.logits)
    return logsumexp(log_w[None, :] + log_norm, axis=1)


def sample(arch: MdnArchitecture, phi, x, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw count i.i.d. parameters from the conditional mixture at x."""
    if count < 1:
        raise ValueError("count must be >= 1")
    mog = forward(arch, phi, x)
    comps = rng.choice(arch.n_components, size=count, p=mog.weights)
    z = rng.standard_normal((count, arch.theta_dim))
    return mog.means[comps] + np.einsum("bij,bj->bi", mog.chols[comps], z)


# ---------------------------------------------------------------------------
# Adam with L2-coupled weight decay

@dataclass(frozen=True)
class AdamState:
    step: int
    m: np.ndarray
    v: np.ndarray
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4

    @staticmethod
    def init(n_params: int, lr: float = 1e-4, weight_decay: float = 1e-4) -> "AdamState":
        return AdamState(0, np.zeros(n_params), np.zeros(n_params),
                         lr=lr, weight_decay=weight_decay)


def adam_step(state: AdamState, phi: np.ndarray, grad: np.ndarray):
    """One Adam update; weight decay is added to the gradient before moments."""
    if grad.shape != phi.shape or state.m.shape != phi.shape:
        raise ValueError("shape mismatch in adam_step")
    g = grad + state.weight_decay * phi
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_phi = phi - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(t, m, v, lr=state.lr, beta1=state.beta1, beta2=state.beta2,
                          eps=state.eps, weight_decay=state.weight_decay)
    return new_state, new_phi


# ---------------------------------------------------------------------------
# Bit-exact checkpointing

CHECKPOINT_VERSION = 1


def _encode(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode(s: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s.encode("ascii")), dtype="<f8").copy()


def save_checkpoint(path, arch: MdnArchitecture, phi: np.ndarray,
                    adam: AdamState | None = None, extra: dict | None = None) -> None:
    rec = {"version": CHECKPOINT_VERSION, "architecture": arch.to_dict(),
           "phi": _encode(phi)}
    if adam is not None:
        rec["adam"] = {"step": adam.step, "m": _encode(adam.m), "v": _encode(adam.v),
                       "lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
                       "eps": adam.eps, "weight_decay": adam.weight_decay}
    if extra:
        rec["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rec, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    with open(path, "r", encoding="utf-8") as fh:
        rec = json.load(fh)
    if rec.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {rec.get('version')!r}")
    arch = MdnArchitecture.from_dict(rec["architecture"])
    phi = _decode(rec["phi"])
    adam = None
    if "adam" in rec:
        a = rec["adam"]
        adam = AdamState(a["step"], _decode(a["m"]), _decode(a["v"]), lr=a["lr"],
                         beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"],
                         weight_decay=a["weight_decay"])
    return arch, phi, adam, rec.get("extra")
