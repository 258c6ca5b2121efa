"""Gaussian calibration kernels, effective sample size, bandwidth solving.

The kernel weights simulated summaries by Mahalanobis proximity to the
observed summary:

    K_tau(x, x_o) = (2 pi)^{-d/2} |Sigma|^{-1/2} tau^{-d}
                    exp(-(x - x_o)^T Sigma^{-1} (x - x_o) / (2 tau^2))

with Sigma the estimated summary covariance.  The bandwidth tau is chosen by
bisection so a target effective sample size is met.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

TAU_MIN = 1e-6
TAU_MAX = 1e6
BISECT_MAX_ITER = 200
BISECT_REL_TOL = 1e-3

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KernelState:
    """Frozen per-round kernel configuration: bandwidth plus covariance."""

    tau: float
    sigma_hat: np.ndarray
    sigma_inv: np.ndarray
    log_det: float
    ridge: float
    shrinkage: float

    @property
    def dim(self) -> int:
        return self.sigma_hat.shape[0]

    def with_tau(self, tau: float) -> "KernelState":
        if tau <= 0:
            raise ValueError("tau must be positive")
        return replace(self, tau=float(tau))


@dataclass(frozen=True)
class EssSchedule:
    beta: float
    f_kind: str  # "f1" | "f2"
    n_per_round: int

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if self.f_kind not in ("f1", "f2"):
            raise ValueError("f_kind must be 'f1' or 'f2'")

    def target(self, round_index: int) -> float:
        return schedule_f(round_index, self.f_kind) * self.beta * self.n_per_round


def estimate_covariance(xs, ridge: float | None = None, shrinkage: float = 0.0) -> KernelState:
    """Sample covariance with diagonal shrinkage and a ridge floor.

    ``ridge=None`` uses the relative default 1e-6 * mean(diag).  Returns a
    KernelState with tau initialised to 1.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[0] < 2:
        raise ValueError("need at least 2 samples to estimate a covariance")
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError("shrinkage must lie in [0, 1]")
    xc = xs - xs.mean(axis=0)
    sigma = xc.T @ xc / (xs.shape[0] - 1)
    sigma = (1.0 - shrinkage) * sigma + shrinkage * np.diag(np.diag(sigma))
    if ridge is None:
        ridge = 1e-6 * float(np.mean(np.diag(sigma)))
    sigma = sigma + ridge * np.eye(sigma.shape[0])
    sigma = 0.5 * (sigma + sigma.T)
    c, low = cho_factor(sigma, lower=True)
    log_det = 2.0 * float(np.sum(np.log(np.diag(c))))
    sigma_inv = cho_solve((c, low), np.eye(sigma.shape[0]))
    return KernelState(
        tau=1.0, sigma_hat=sigma, sigma_inv=sigma_inv,
        log_det=log_det, ridge=float(ridge), shrinkage=float(shrinkage),
    )


def identity_kernel_state(dim: int, tau: float = 1.0) -> KernelState:
    eye = np.eye(dim)
    return KernelState(tau=float(tau), sigma_hat=eye, sigma_inv=eye,
                       log_det=0.0, ridge=0.0, shrinkage=0.0)


def mahalanobis_sq(x, x_o, ks: KernelState) -> np.ndarray | float:
    """(x - x_o)^T Sigma^{-1} (x - x_o); batched over leading axes of x."""
    delta = np.asarray(x, dtype=float) - np.asarray(x_o, dtype=float)
    out = np.einsum("...i,ij,...j->...", delta, ks.sigma_inv, delta)
    return float(out) if out.ndim == 0 else out


def log_kernel_weight(x, x_o, ks: KernelState) -> np.ndarray | float:
    d = ks.dim
    m2 = mahalanobis_sq(x, x_o, ks)
    return (-0.5 * d * _LOG_2PI - 0.5 * ks.log_det - d * math.log(ks.tau)
            - m2 / (2.0 * ks.tau**2))


def kernel_weight(x, x_o, ks: KernelState) -> np.ndarray | float:
    return np.exp(log_kernel_weight(x, x_o, ks))


def ess(weights) -> float:
    """(sum w)^2 / sum w^2; invariant to positive rescaling of w."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    s2 = float(np.sum(w**2))
    if s2 == 0.0:
        raise ValueError("all weights are zero")
    return float(np.sum(w)) ** 2 / s2


def schedule_f(r: int, f_kind: str) -> float:
    """ESS growth schedule: f1 is constant, f2(r) = log(r - 1 + e)."""
    if r < 1:
        raise ValueError("round index starts at 1")
    if f_kind == "f1":
        return 1.0
    if f_kind == "f2":
        return math.log(r - 1 + math.e)
    raise ValueError(f"unknown schedule {f_kind!r}")


@dataclass(frozen=True)
class TauSolution:
    tau: float
    ess: float
    status: str  # "ok" | "clamped_min" | "clamped_max" | "flat"

    @property
    def converged(self) -> bool:
        return self.status == "ok"


def _ess_log(log_base: np.ndarray, dist: np.ndarray, tau: float) -> float:
    logw = log_base - dist / (2.0 * tau**2)
    return float(np.exp(2.0 * logsumexp(logw) - logsumexp(2.0 * logw)))


def solve_tau(base_weights, distances, target_ess,
              rel_tol: float = BISECT_REL_TOL,
              max_iter: int = BISECT_MAX_ITER) -> TauSolution:
    """Bisect tau so ESS of base_weights * exp(-dist/(2 tau^2)) hits the target.

    The tau^{-d} kernel normalisation cancels in the ESS ratio and is
    omitted.  Unreachable targets clamp to a bracket endpoint with a
    non-"ok" status; nothing is clamped silently.
    """
    base = np.asarray(base_weights, dtype=float)
    dist = np.asarray(distances, dtype=float)
    if base.shape != dist.shape:
        raise ValueError("base_weights and distances must align")
    if np.any(base < 0) or not np.any(base > 0):
        raise ValueError("base weights must be non-negative with at least one positive")
    if not 1.0 <= target_ess <= base.shape[0]:
        raise ValueError("target ESS must lie in [1, n]")
    with np.errstate(divide="ignore"):
        log_base = np.log(base)
    tol = rel_tol * target_ess

    e_hi = _ess_log(log_base, dist, TAU_MAX)
    e_lo = _ess_log(log_base, dist, TAU_MIN)
    if np.ptp(dist) == 0.0 or abs(e_hi - e_lo) <= 1e-9 * max(1.0, e_hi):
        # identical distances (or numerically indistinguishable endpoints):
        # the kernel factor cancels in the ESS ratio, tau has no effect
        status = "ok" if abs(e_hi - target_ess) <= tol else "flat"
        return TauSolution(TAU_MAX, e_hi, status)
    if target_ess >= e_hi:
        status = "ok" if abs(e_hi - target_ess) <= tol else "clamped_max"
        return TauSolution(TAU_MAX, e_hi, status)
    if target_ess <= e_lo:
        status = "ok" if abs(e_lo - target_ess) <= tol else "clamped_min"
        return TauSolution(TAU_MIN, e_lo, status)

    lo, hi = math.log(TAU_MIN), math.log(TAU_MAX)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        e_mid = _ess_log(log_base, dist, math.exp(mid))
        if abs(e_mid - target_ess) <= tol:
            return TauSolution(math.exp(mid), e_mid, "ok")
        if e_mid < target_ess:
            lo = mid
        else:
            hi = mid
    tau = math.exp(0.5 * (lo + hi))
    e_final = _ess_log(log_base, dist, tau)
    status = "ok" if abs(e_final - target_ess) <= tol else "clamped_max"
    return TauSolution(tau, e_final, status)
