"""Evaluation metrics for approximate posteriors — lower is better for all.

- mmd: kernel maximum mean discrepancy between sample sets
- c2st: classifier two-sample test accuracy (0.5 = indistinguishable)
- lmd: log median normalized simulation distance to the observed summary
- nlog: negative log posterior density at the true parameters, original space

Plus the MetricRecord CSV schema (`round,metric,value,seed`) that downstream
tooling consumes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from sklearn.model_selection import StratifiedKFold
from sklearn.neural_network import MLPClassifier

from . import mdn
from .simulators import ModelSpec
from .transforms import BoxTransform, to_unconstrained, log_abs_det_jacobian_forward

LMD_SENTINEL = -1e3
METRIC_NAMES = ("mmd", "c2st", "lmd", "nlog")


def _pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


def median_bandwidth(pooled: np.ndarray) -> float:
    """Median pairwise Euclidean distance over a pooled sample set."""
    sq = _pairwise_sq_dists(pooled, pooled)
    iu = np.triu_indices(pooled.shape[0], k=1)
    return float(np.median(np.sqrt(sq[iu])))


def mmd(a, b) -> float:
    """sqrt(max(0, unbiased MMD^2)) with a Gaussian kernel at the median
    pairwise bandwidth of the pooled samples."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("mmd needs at least 2 samples per set")
    h = median_bandwidth(np.concatenate([a, b]))
    if h == 0.0:
        raise ValueError("degenerate samples: median pairwise distance is zero")
    g = 1.0 / (2.0 * h * h)
    kaa = np.exp(-g * _pairwise_sq_dists(a, a))
    kbb = np.exp(-g * _pairwise_sq_dists(b, b))
    kab = np.exp(-g * _pairwise_sq_dists(a, b))
    m, n = a.shape[0], b.shape[0]
    term_aa = (kaa.sum() - np.trace(kaa)) / (m * (m - 1))
    term_bb = (kbb.sum() - np.trace(kbb)) / (n * (n - 1))
    term_ab = 2.0 * kab.mean()
    return math.sqrt(max(0.0, term_aa + term_bb - term_ab))


def c2st(a, b, seed: int = 0) -> float:
    """5-fold cross-validated accuracy of a (20, 20) MLP distinguishing a from b."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[0] != b.shape[0]:
        raise ValueError("c2st requires equally sized sample sets")
    if a.shape[0] < 100:
        raise ValueError("c2st requires at least 100 samples per set")
    x = np.concatenate([a, b])
    y = np.concatenate([np.zeros(a.shape[0]), np.ones(b.shape[0])])
    mu, sd = x.mean(axis=0), x.std(axis=0)
    sd[sd == 0] = 1.0
    x = (x - mu) / sd
    folds = StratifiedKFold(n_splits=5, shuffle=True, random_state=seed)
    accs = []
    for train, test in folds.split(x, y):
        clf = MLPClassifier(hidden_layer_sizes=(20, 20), max_iter=300,
                            random_state=seed)
        clf.fit(x[train], y[train])
        accs.append(clf.score(x[test], y[test]))
    return float(np.mean(accs))


def lmd(theta_samples, model: ModelSpec, rng: np.random.Generator) -> float:
    """log median over draws of ||(S(x) - S(x_o)) / ref_std||, one fresh
    simulation per posterior draw.  An exactly-zero median returns the -1e3
    sentinel instead of -inf."""
    theta_samples = np.atleast_2d(np.asarray(theta_samples, dtype=float))
    dists = np.empty(theta_samples.shape[0])
    for i, theta in enumerate(theta_samples):
        x = model.simulate(theta, rng)
        dists[i] = np.linalg.norm((x - model.s_obs) / model.ref_std)
    med = float(np.median(dists))
    if med == 0.0:
        return LMD_SENTINEL
    return math.log(med)


def nlog(arch: mdn.MdnArchitecture, phi: np.ndarray, transform: BoxTransform,
         x_obs, theta_star) -> float:
    """-log q(theta* | x_o) in the ORIGINAL parameter space: the learned
    density over transformed parameters times the forward Jacobian."""
    theta_star = np.asarray(theta_star, dtype=float)
    theta_hat = to_unconstrained(theta_star, transform)
    log_q = mdn.log_prob(arch, phi, np.asarray(x_obs, dtype=float), theta_hat)
    log_jac = float(log_abs_det_jacobian_forward(theta_star, transform))
    return -(log_q + log_jac)


# ---------------------------------------------------------------------------
# MetricRecord CSV schema

CSV_HEADER = ("round", "metric", "value", "seed")


@dataclass(frozen=True)
class MetricRecord:
    round: int
    metric: str
    value: float
    seed: int


def format_value(v: float) -> str:
    """Fixed repr-style formatting so identical runs give identical bytes."""
    return repr(float(v))


def write_metric_csv(path, records) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([r.round, r.metric, format_value(r.value), r.seed])


def read_metric_csv(path) -> list[MetricRecord]:
    out = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for row in reader:
            out.append(MetricRecord(round=int(row["round"]), metric=row["metric"],
                                    value=float(row["value"]), seed=int(row["seed"])))
    return out
