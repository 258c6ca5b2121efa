"""Sequential posterior training with defensive proposals, pooled-sample
balance-heuristic reweighting, and an adaptive calibration kernel.

Round structure: simulate N parameter/summary pairs from the current
proposal, re-estimate the summary covariance, solve the kernel bandwidth so
the weighted pool hits its effective-sample-size target, run weighted
maximum-likelihood epochs with early stopping, then promote the learned
conditional (optionally mixed with the transformed prior as a defensive
component) to next round's proposal.  Every strategy can be switched off
independently for ablations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import mdn
from .kernels import (KernelState, estimate_covariance, mahalanobis_sq,
                      kernel_weight, schedule_f, solve_tau, TauSolution)
from .simulators import (ModelSpec, prior_sample, prior_logpdf,
                         sample_stream, SimulationOverflowError)
from .transforms import (BoxTransform, to_unconstrained, from_unconstrained,
                         log_abs_det_jacobian_inverse)

MAX_RESIM_PER_ROUND = 1000

# spawn-key offsets for non-simulation streams within a round
_KEY_PROPOSAL = 10_000_000
_KEY_VALMASK = 10_000_001
_KEY_SHUFFLE = 10_000_002


@dataclass(frozen=True)
class TrainConfig:
    rounds: int = 20
    n_per_round: int = 1000
    alpha: float = 0.2
    beta: float = 0.5
    f_kind: str = "f2"
    n_components: int = 8
    hidden: tuple[int, int] = (50, 50)
    batch_size: int = 100
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    patience: int = 20
    max_epochs: int = 500
    val_fraction: float = 0.05
    shrinkage: float = 0.0
    ack: bool = True
    ds: bool = True
    misr: bool = True
    pst: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.rounds < 1 or self.n_per_round < 1:
            raise ValueError("rounds and n_per_round must be >= 1")


@dataclass
class CostCounter:
    """Monotone counters: density-network forwards and simulator calls."""

    forward_passes: int = 0
    simulator_calls: int = 0


def prior_transform(model: ModelSpec, pst: bool) -> BoxTransform:
    """The parameter-space bijection implied by the prior (identity if pst off)."""
    if not pst or model.prior.kind != "box":
        return BoxTransform.identity(model.n)
    return BoxTransform.box(model.prior.low, model.prior.high)


def log_prior_unconstrained(model: ModelSpec, transform: BoxTransform, theta_hat) -> np.ndarray:
    """Log density of the prior pushed through the transform."""
    theta_hat = np.atleast_2d(np.asarray(theta_hat, dtype=float))
    theta = from_unconstrained(theta_hat, transform)
    return prior_logpdf(model.prior, theta) + log_abs_det_jacobian_inverse(theta_hat, transform)


# ---------------------------------------------------------------------------
# Proposals (densities over the transformed parameter space)

class PriorProposal:
    kind = "prior"

    def __init__(self, model: ModelSpec, transform: BoxTransform):
        self.model = model
        self.transform = transform

    def logpdf(self, theta_hat):
        return log_prior_unconstrained(self.model, self.transform, theta_hat)

    def sample(self, count, rng):
        theta = prior_sample(self.model.prior, count, rng)
        return to_unconstrained(theta, self.transform)


class QProposal:
    """The learned conditional evaluated at the observed summary."""

    kind = "q"

    def __init__(self, arch: mdn.MdnArchitecture, phi: np.ndarray, x_obs: np.ndarray):
        self.arch = arch
        self.phi = np.array(phi, copy=True)
        self.x_obs = np.asarray(x_obs, dtype=float)
        self._mog = mdn.forward(arch, self.phi, self.x_obs)

    def logpdf(self, theta_hat):
        return mdn.mog_log_prob(self._mog, theta_hat)

    def sample(self, count, rng):
        return mdn.sample(self.arch, self.phi, self.x_obs, count, rng)


class DefensiveProposal:
    """(1 - alpha) q + alpha p_def, with p_def the transformed prior."""

    kind = "mixture"

    def __init__(self, q: QProposal, p_def: PriorProposal, alpha: float):
        self.q = q
        self.p_def = p_def
        self.alpha = float(alpha)

    def logpdf(self, theta_hat):
        return np.logaddexp(math.log1p(-self.alpha) + self.q.logpdf(theta_hat),
                            math.log(self.alpha) + self.p_def.logpdf(theta_hat))

    def sample(self, count, rng):
        take_def = rng.random(count) < self.alpha
        out = np.empty((count, self.q.arch.theta_dim))
        n_def = int(take_def.sum())
        if n_def:
            out[take_def] = self.p_def.sample(n_def, rng)
        if count - n_def:
            out[~take_def] = self.q.sample(count - n_def, rng)
        return out


def defensive_proposal_logpdf(arch, phi, alpha, x_obs, theta_hat,
                              model: ModelSpec, transform: BoxTransform):
    """Log density of the defensive mixture at transformed parameters."""
    prop = DefensiveProposal(QProposal(arch, phi, x_obs),
                             PriorProposal(model, transform), alpha)
    return prop.logpdf(theta_hat)


def defensive_proposal_sample(arch, phi, alpha, x_obs, count, rng,
                              model: ModelSpec, transform: BoxTransform):
    prop = DefensiveProposal(QProposal(arch, phi, x_obs),
                             PriorProposal(model, transform), alpha)
    return prop.sample(count, rng)


# ---------------------------------------------------------------------------
# Per-round archive

@dataclass
class RoundRecord:
    theta_hat: np.ndarray        # (N, n) transformed parameters
    x: np.ndarray                # (N, d) summaries
    n_samples: int               # N_k
    val_mask: np.ndarray         # (N,) bool, held out from training
    log_prior_hat: np.ndarray    # (N,) cached log p_hat(theta_hat_i)
    proposal_log: np.ndarray     # (N, r) cached log p_tilde_j(theta_hat_i)
    resim_count: int = 0


@dataclass
class RoundStore:
    rounds: list[RoundRecord] = field(default_factory=list)
    proposals: list = field(default_factory=list)

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    def pooled(self):
        theta = np.concatenate([r.theta_hat for r in self.rounds])
        x = np.concatenate([r.x for r in self.rounds])
        val = np.concatenate([r.val_mask for r in self.rounds])
        round_of = np.concatenate([np.full(r.n_samples, k) for k, r in enumerate(self.rounds)])
        return theta, x, val, round_of


def misr_base_weights(store: RoundStore, r: int) -> np.ndarray:
    """Balance-heuristic base weight N_k * p_hat / sum_j N_j p_tilde_j per pooled sample.

    Computed in log space from the cached proposal densities of rounds 1..r.
    """
    if store.n_rounds < r:
        raise ValueError("store does not cover the requested round")
    log_n = np.log([store.rounds[j].n_samples for j in range(r)])
    out = []
    for k in range(r):
        rec = store.rounds[k]
        if rec.proposal_log.shape[1] < r:
            raise ValueError(f"proposal cache incomplete for round {k + 1}")
        denom = logsumexp(rec.proposal_log[:, :r] + log_n[None, :], axis=1)
        out.append(np.exp(math.log(rec.n_samples) + rec.log_prior_hat - denom))
    return np.concatenate(out)


def _loss_coefficients(store: RoundStore, r: int, misr: bool) -> np.ndarray:
    """Per-sample coefficient c_i so the loss estimator is sum_i c_i K_i (-log q_i)."""
    if misr:
        log_n = np.log([store.rounds[j].n_samples for j in range(r)])
        out = []
        for k in range(r):
            rec = store.rounds[k]
            denom = logsumexp(rec.proposal_log[:, :r] + log_n[None, :], axis=1)
            out.append(np.exp(rec.log_prior_hat - denom))
        return np.concatenate(out)
    rec = store.rounds[r - 1]
    return np.exp(rec.log_prior_hat - rec.proposal_log[:, r - 1]) / rec.n_samples


def weighted_loss(arch, phi, xs, thetas, weights):
    """sum_i w_i * (-log q(theta_i | x_i)) and its gradient."""
    return mdn.weighted_nll_and_grad(arch, phi, xs, thetas, weights)


def validation_loss(arch, phi, xs, thetas, weights) -> float:
    """Training-loss formula on held-out data, no gradient."""
    if len(xs) == 0:
        raise ValueError("empty validation set")
    log_q = mdn.log_prob_batch(arch, phi, xs, thetas)
    return float(np.sum(np.asarray(weights) * (-log_q)))


@dataclass
class RoundDiagnostics:
    round_index: int
    tau: float
    ess: float
    ess_target: float
    ess_status: str
    epochs: int
    train_loss: float
    val_loss: float
    max_density_ratio: float
    resim_count: int
    proposal_kind: str


@dataclass
class SnpeState:
    model: ModelSpec
    config: TrainConfig
    transform: BoxTransform
    arch: mdn.MdnArchitecture
    phi: np.ndarray
    adam: mdn.AdamState
    store: RoundStore
    kernel: KernelState | None = None
    diagnostics: list[RoundDiagnostics] = field(default_factory=list)
    cost: CostCounter = field(default_factory=CostCounter)

    @property
    def round_index(self) -> int:
        return self.store.n_rounds


def init_state(model: ModelSpec, config: TrainConfig) -> SnpeState:
    transform = prior_transform(model, config.pst)
    arch = mdn.MdnArchitecture(model.d, model.n, config.n_components, tuple(config.hidden))
    rng_init = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(0, 0)))
    phi = mdn.init_params(arch, rng_init)
    adam = mdn.AdamState.init(arch.n_params, lr=config.learning_rate,
                              weight_decay=config.weight_decay)
    return SnpeState(model=model, config=config, transform=transform, arch=arch,
                     phi=phi, adam=adam, store=RoundStore())


def _round_rng(seed: int, r: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(r, key)))


def _sample_in_support(proposal, count: int, rng, model: ModelSpec,
                       max_tries: int = 1000) -> np.ndarray:
    """Proposal draws restricted to the prior support.

    Needed when the transform is the identity: a raw learned proposal can
    place mass outside the box, where the simulator is undefined and the
    prior ratio is zero anyway.  Weights keep the untruncated proposal
    density; the truncation constant rescales all weights equally.
    """
    draws = proposal.sample(count, rng)
    for _ in range(max_tries):
        bad = ~np.isfinite(prior_logpdf(model.prior, draws))
        if not bad.any():
            return draws
        draws[bad] = proposal.sample(int(bad.sum()), rng)
    raise RuntimeError("proposal keeps leaving the prior support")


def _simulate_batch(state: SnpeState, proposal, theta_hat: np.ndarray, r: int):
    """Simulate one summary per parameter; overflowing draws are replaced by a
    fresh proposal draw (counted)."""
    cfg = state.config
    n = theta_hat.shape[0]
    xs = np.empty((n, state.model.d))
    resim_rng = _round_rng(cfg.seed, r, _KEY_PROPOSAL + 1)
    resims = 0
    for i in range(n):
        attempt = 0
        while True:
            stream_idx = i if attempt == 0 else cfg.n_per_round + resims
            rng_i = sample_stream(cfg.seed, r, stream_idx)
            theta = from_unconstrained(theta_hat[i], state.transform)
            state.cost.simulator_calls += 1
            try:
                xs[i] = state.model.simulate(theta, rng_i)
                break
            except SimulationOverflowError:
                resims += 1
                attempt += 1
                if resims > MAX_RESIM_PER_ROUND:
                    raise RuntimeError(
                        f"round {r}: exceeded {MAX_RESIM_PER_ROUND} overflow resimulations")
                if cfg.pst or proposal.kind == "prior":
                    theta_hat[i] = proposal.sample(1, resim_rng)[0]
                else:
                    theta_hat[i] = _sample_in_support(proposal, 1, resim_rng,
                                                      state.model)[0]
    return xs, theta_hat, resims


def run_round(state: SnpeState, r: int) -> SnpeState:
    """Execute round r (1-based); the state must hold exactly r-1 finished rounds."""
    cfg = state.config
    if state.store.n_rounds != r - 1:
        raise ValueError(f"state holds {state.store.n_rounds} rounds; cannot run round {r}")
    model, transform, arch = state.model, state.transform, state.arch
    x_obs = model.s_obs

    if r == 1:
        proposal = PriorProposal(model, transform)
    else:
        q = QProposal(arch, state.phi, x_obs)
        proposal = DefensiveProposal(q, PriorProposal(model, transform), cfg.alpha) \
            if cfg.ds else q
    state.store.proposals.append(proposal)

    if cfg.pst or proposal.kind == "prior":
        theta_hat = proposal.sample(cfg.n_per_round, _round_rng(cfg.seed, r, _KEY_PROPOSAL))
    else:
        theta_hat = _sample_in_support(proposal, cfg.n_per_round,
                                       _round_rng(cfg.seed, r, _KEY_PROPOSAL), model)
    xs, theta_hat, resims = _simulate_batch(state, proposal, theta_hat, r)

    n = cfg.n_per_round
    n_val = max(1, int(round(cfg.val_fraction * n)))
    val_mask = np.zeros(n, dtype=bool)
    val_mask[_round_rng(cfg.seed, r, _KEY_VALMASK).permutation(n)[:n_val]] = True

    log_prior_hat = log_prior_unconstrained(model, transform, theta_hat)
    rec = RoundRecord(theta_hat=theta_hat, x=xs, n_samples=n, val_mask=val_mask,
                      log_prior_hat=log_prior_hat,
                      proposal_log=np.empty((n, 0)), resim_count=resims)
    state.store.rounds.append(rec)

    # complete the proposal-density cache: new proposal on all rounds' samples,
    # all proposals on the new samples
    for k, old in enumerate(state.store.rounds):
        if k < r - 1:
            col = np.asarray(proposal.logpdf(old.theta_hat), dtype=float)
            old.proposal_log = np.column_stack([old.proposal_log, col])
        else:
            cols = [np.asarray(p.logpdf(old.theta_hat), dtype=float)
                    for p in state.store.proposals]
            old.proposal_log = np.column_stack(cols) if cols else np.empty((n, 0))
    state.cost.forward_passes += r  # one net forward per q-backed proposal evaluation

    # covariance from this round's fresh simulations only
    ks = estimate_covariance(xs, shrinkage=cfg.shrinkage)

    pool_theta, pool_x, pool_val, round_of = state.store.pooled() if cfg.misr else (
        rec.theta_hat, rec.x, rec.val_mask, np.full(n, r - 1))
    coef = _loss_coefficients(state.store, r, cfg.misr)
    train_idx = np.flatnonzero(~pool_val)
    val_idx = np.flatnonzero(pool_val)

    dist = mahalanobis_sq(pool_x, x_obs, ks)
    target = schedule_f(r, cfg.f_kind) * cfg.beta * cfg.n_per_round
    target = min(max(target, 1.0), float(train_idx.size))
    if cfg.ack:
        sol = solve_tau(coef[train_idx], dist[train_idx], target)
        ks = ks.with_tau(sol.tau)
        kv = kernel_weight(pool_x, x_obs, ks)
    else:
        sol = TauSolution(float("inf"), float("nan"), "disabled")
        kv = np.ones(pool_x.shape[0])
    state.kernel = ks
    weights = coef * kv

    # density-ratio diagnostic: each sample against its own round's proposal
    own_log_prop = np.concatenate([
        state.store.rounds[k].proposal_log[:, k] for k in range(r)
    ]) if cfg.misr else rec.proposal_log[:, r - 1]
    log_prior_pool = np.concatenate([
        state.store.rounds[k].log_prior_hat for k in range(r)
    ]) if cfg.misr else rec.log_prior_hat
    with np.errstate(invalid="ignore"):
        ratios = np.exp(log_prior_pool - own_log_prop)
    max_ratio = float(np.nanmax(ratios)) if ratios.size else 0.0

    epochs, train_loss, val_loss = _fit(state, pool_x, pool_theta, weights,
                                        train_idx, val_idx, r)

    state.diagnostics.append(RoundDiagnostics(
        round_index=r, tau=ks.tau if cfg.ack else float("inf"),
        ess=sol.ess, ess_target=target, ess_status=sol.status,
        epochs=epochs, train_loss=train_loss, val_loss=val_loss,
        max_density_ratio=max_ratio, resim_count=resims,
        proposal_kind=proposal.kind))
    return state


def _fit(state: SnpeState, xs, thetas, weights, train_idx, val_idx, r):
    """Minibatch Adam epochs with patience-based early stopping on the
    kernel-weighted validation loss; restores the best parameters."""
    cfg = state.config
    arch = state.arch
    if not np.any(weights[train_idx] > 0):
        return 0, float("nan"), float("nan")
    shuffle_rng = _round_rng(cfg.seed, r, _KEY_SHUFFLE)
    pool_size = train_idx.size
    scale = pool_size  # batch losses approximate the full weighted sum

    best_val = math.inf
    best_phi = np.array(state.phi, copy=True)
    best_epoch = 0
    train_loss = float("nan")
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = train_idx[shuffle_rng.permutation(pool_size)]
        epoch_loss = 0.0
        for start in range(0, pool_size, cfg.batch_size):
            b = order[start:start + cfg.batch_size]
            loss, grad = mdn.weighted_nll_and_grad(
                arch, state.phi, xs[b], thetas[b], weights[b] * (scale / b.size))
            if not math.isfinite(loss):
                raise mdn.NumericalOverflowError(
                    f"non-finite training loss in round {r}, epoch {epoch}")
            state.cost.forward_passes += b.size
            state.adam, state.phi = mdn.adam_step(state.adam, state.phi, grad / b.size)
            epoch_loss += loss / scale
        train_loss = epoch_loss

        vl = validation_loss(arch, state.phi, xs[val_idx], thetas[val_idx],
                             weights[val_idx])
        state.cost.forward_passes += val_idx.size
        if vl < best_val:
            best_val = vl
            best_phi = np.array(state.phi, copy=True)
            best_epoch = epoch
        elif epoch - best_epoch >= cfg.patience:
            break
    state.phi = best_phi
    return epoch, train_loss, best_val


def train(model: ModelSpec, config: TrainConfig, round_callback=None,
          state: SnpeState | None = None) -> SnpeState:
    """Run the full sequential loop; an existing state resumes where it stopped."""
    if state is None:
        state = init_state(model, config)
    for r in range(state.round_index + 1, config.rounds + 1):
        run_round(state, r)
        if round_callback is not None:
            round_callback(state, r)
    return state


def sample_posterior(state: SnpeState, count: int, rng: np.random.Generator,
                     max_tries: int = 1000) -> np.ndarray:
    """Draw posterior parameters in the original space.

    With the parameter-space transform active every draw is automatically
    inside the prior support; without it, out-of-support draws are rejected
    and redrawn (mass leakage makes this lossy by construction).
    """
    arch, phi, x_obs = state.arch, state.phi, state.model.s_obs
    draws = mdn.sample(arch, phi, x_obs, count, rng)
    state.cost.forward_passes += 1
    if state.config.pst:
        return from_unconstrained(draws, state.transform)
    out = draws
    for _ in range(max_tries):
        inside = np.isfinite(prior_logpdf(state.model.prior, out))
        if inside.all():
            return out
        k = int((~inside).sum())
        out[~inside] = mdn.sample(arch, phi, x_obs, k, rng)
    raise RuntimeError("posterior sampling kept leaving the prior support")
