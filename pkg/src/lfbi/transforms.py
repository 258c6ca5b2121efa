"""Bijections between a bounded parameter box and unconstrained space.

Box-constrained dimensions are mapped through the logit-style bijection
``u = log((t - a) / (b - t))``; unbounded dimensions pass through unchanged.
Densities follow along via the log-abs-det Jacobian terms, so importance
ratios computed in either space agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

BOUNDARY_TOL = 1e-12

# Saturation floor for the inverse map: keeps outputs strictly inside the box
# even for very large |u|, at a distance > BOUNDARY_TOL from each bound.
_SIGMOID_CLIP = 1e-12


class BoundaryError(ValueError):
    """Raised when a point sits on or outside the box boundary."""


@dataclass(frozen=True)
class BoxTransform:
    """Per-dimension bounds; a dimension with ``bounded[j] == False`` is identity."""

    lower: np.ndarray
    upper: np.ndarray
    bounded: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        bounded = np.atleast_1d(np.asarray(self.bounded, dtype=bool))
        if not (lower.shape == upper.shape == bounded.shape):
            raise ValueError("bounds and mask must share a shape")
        if np.any(bounded & ~(lower < upper)):
            raise ValueError("box dimensions require lower < upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "bounded", bounded)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @staticmethod
    def box(lower, upper) -> "BoxTransform":
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        return BoxTransform(lower, upper, np.ones_like(lower, dtype=bool))

    @staticmethod
    def identity(dim: int) -> "BoxTransform":
        return BoxTransform(np.zeros(dim), np.ones(dim), np.zeros(dim, dtype=bool))


def _check_interior(theta: np.ndarray, t: BoxTransform) -> None:
    m = t.bounded
    if not m.any():
        return
    lo = theta[..., m] - t.lower[m]
    hi = t.upper[m] - theta[..., m]
    if np.any(lo <= BOUNDARY_TOL) or np.any(hi <= BOUNDARY_TOL):
        raise BoundaryError("point on or outside the open box (tolerance %g)" % BOUNDARY_TOL)


def to_unconstrained(theta, t: BoxTransform) -> np.ndarray:
    """Map interior points of the box to R^n; identity on unbounded dims."""
    theta = np.asarray(theta, dtype=float)
    _check_interior(theta, t)
    out = np.array(theta, dtype=float, copy=True)
    m = t.bounded
    if m.any():
        out[..., m] = np.log(theta[..., m] - t.lower[m]) - np.log(t.upper[m] - theta[..., m])
    return out


def from_unconstrained(u, t: BoxTransform) -> np.ndarray:
    """Inverse map; output is strictly inside the box for any finite input."""
    u = np.asarray(u, dtype=float)
    out = np.array(u, dtype=float, copy=True)
    m = t.bounded
    if m.any():
        s = np.clip(expit(u[..., m]), _SIGMOID_CLIP, 1.0 - _SIGMOID_CLIP)
        out[..., m] = t.lower[m] + (t.upper[m] - t.lower[m]) * s
    return out


def log_abs_det_jacobian_forward(theta, t: BoxTransform) -> np.ndarray:
    """log |d to_unconstrained / d theta|, summed over dimensions."""
    theta = np.asarray(theta, dtype=float)
    _check_interior(theta, t)
    m = t.bounded
    if not m.any():
        return np.zeros(theta.shape[:-1])
    width = t.upper[m] - t.lower[m]
    lo = theta[..., m] - t.lower[m]
    hi = t.upper[m] - theta[..., m]
    return np.sum(np.log(width) - np.log(lo) - np.log(hi), axis=-1)


def log_abs_det_jacobian_inverse(u, t: BoxTransform) -> np.ndarray:
    """log |d from_unconstrained / d u|; cancels the forward term exactly."""
    u = np.asarray(u, dtype=float)
    m = t.bounded
    if not m.any():
        return np.zeros(u.shape[:-1])
    width = t.upper[m] - t.lower[m]
    um = u[..., m]
    # log sigmoid(u) = -softplus(-u), log(1 - sigmoid(u)) = -softplus(u)
    return np.sum(np.log(width) - np.logaddexp(0.0, -um) - np.logaddexp(0.0, um), axis=-1)
