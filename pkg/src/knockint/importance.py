"""Univariate and pairwise importance scores for trained networks.

Two families:

* model-based — read directly off the trained weights: the first-layer rows,
  scaled by the coupling weights, aggregated through the product of the
  deeper weight matrices;
* instance-based — path-integrated input gradients (univariate) and
  path-integrated input Hessians (pairwise), accumulated over samples.

Both index augmented features 0..2p-1 (originals first, knockoffs second)
and feed the same calibration rule: the pairwise magnitude divided by the
geometric mean of the two univariate magnitudes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, ContractViolation
from .network import CoupledNetwork, batch_input_gradient, batch_input_hessian

METHODS = ("model_based", "instance_based")


@dataclass
class AttributionConfig:
    """Quadrature and aggregation knobs for instance-based scores."""

    alpha_steps: int = 32
    beta_steps: int = 32
    baselines: object = "dataset_mean"   # or a list of length-2p vectors
    sample_cap: int = 1000
    epsilon_floor: float = 1e-12

    def validate(self):
        if self.alpha_steps < 1 or self.beta_steps < 1:
            raise ConfigurationError("quadrature steps must be >= 1")
        if self.sample_cap < 1:
            raise ConfigurationError("sample_cap must be >= 1")
        if self.epsilon_floor <= 0:
            raise ConfigurationError("epsilon_floor must be positive")


@dataclass
class ImportanceScores:
    """Raw and calibrated scores; indices 0..p-1 originals, p..2p-1 knockoffs."""

    s1d: np.ndarray          # (2p,)
    s2d: np.ndarray          # (2p, 2p), symmetric
    calibrated: np.ndarray   # (2p, 2p), symmetric nonnegative
    method: str


def _aggregate_weights(net: CoupledNetwork) -> np.ndarray:
    """Product of the post-first-layer weight matrices, shape (p1,)."""
    return (net.w[1] @ net.w[2] @ net.w[3])[:, 0]


def _first_layer_rows(net: CoupledNetwork) -> np.ndarray:
    """Per-augmented-input first-layer rows scaled by the coupling weights.

    Coupled nets duplicate the p x p1 first-layer matrix across the original
    and knockoff halves and scale by z / z_tilde; the ablation variant
    already has 2p rows and no coupling weights.
    """
    if net.coupling:
        stacked = np.vstack([net.w[0], net.w[0]])
        z_agg = np.concatenate([net.z, net.z_tilde])
        return z_agg[:, None] * stacked
    return net.w[0]


def model_based_2d(net: CoupledNetwork) -> np.ndarray:
    """Weight-path interaction scores: A diag(w_agg) A^T on the scaled rows."""
    net.check_finite()
    A = _first_layer_rows(net)
    w_agg = _aggregate_weights(net)
    s2d = (A * w_agg) @ A.T
    return (s2d + s2d.T) / 2.0


def model_based_1d(net: CoupledNetwork) -> np.ndarray:
    net.check_finite()
    w_agg = _aggregate_weights(net)
    if net.coupling:
        w1d = net.w[0] @ w_agg
        return np.concatenate([net.z * w1d, net.z_tilde * w1d])
    return net.w[0] @ w_agg


def _resolve_baselines(cfg: AttributionConfig, X_aug: np.ndarray) -> np.ndarray:
    if isinstance(cfg.baselines, str):
        if cfg.baselines != "dataset_mean":
            raise ConfigurationError(f"unknown baseline spec {cfg.baselines!r}")
        return X_aug.mean(axis=0)[None, :]
    baselines = np.asarray(cfg.baselines, dtype=float)
    if baselines.ndim == 1:
        baselines = baselines[None, :]
    if baselines.shape[1] != X_aug.shape[1]:
        raise ContractViolation("baseline length does not match augmented width")
    return baselines


def instance_based_2d(net: CoupledNetwork, X_aug: np.ndarray,
                      cfg: AttributionConfig | None = None) -> np.ndarray:
    """Path-integrated Hessian interaction scores.

    For each sample x and baseline x', the double integral over the scaled
    path x' + a*b*(x - x') is approximated on a midpoint product grid of
    ``alpha_steps x beta_steps`` Hessian evaluations, weighted by
    (x_i - x'_i)(x_j - x'_j); contributions are summed over samples (up to
    ``sample_cap``) and averaged over baselines.
    """
    cfg = cfg or AttributionConfig()
    cfg.validate()
    X_aug = np.asarray(X_aug, dtype=float)
    if X_aug.ndim != 2:
        raise ContractViolation("X_aug must be 2-D")
    baselines = _resolve_baselines(cfg, X_aug)
    samples = X_aug[:cfg.sample_cap]
    D = X_aug.shape[1]

    alphas = (np.arange(cfg.alpha_steps) + 0.5) / cfg.alpha_steps
    betas = (np.arange(cfg.beta_steps) + 0.5) / cfg.beta_steps
    t_grid = np.outer(alphas, betas).ravel()

    total = np.zeros((D, D))
    for base in baselines:
        for k, x in enumerate(samples):
            dx = x - base
            points = base[None, :] + t_grid[:, None] * dx[None, :]
            H = batch_input_hessian(net, points)
            if not np.all(np.isfinite(H)):
                raise FloatingPointError(f"non-finite Hessian for sample {k}")
            Hbar = H.mean(axis=0)
            total += np.outer(dx, dx) * Hbar
    total /= baselines.shape[0]
    return (total + total.T) / 2.0


def instance_based_1d(net: CoupledNetwork, X_aug: np.ndarray,
                      cfg: AttributionConfig | None = None) -> np.ndarray:
    """Expected-gradients univariate scores (midpoint grid on the path)."""
    cfg = cfg or AttributionConfig()
    cfg.validate()
    X_aug = np.asarray(X_aug, dtype=float)
    if X_aug.ndim != 2:
        raise ContractViolation("X_aug must be 2-D")
    baselines = _resolve_baselines(cfg, X_aug)
    samples = X_aug[:cfg.sample_cap]
    D = X_aug.shape[1]
    alphas = (np.arange(cfg.alpha_steps) + 0.5) / cfg.alpha_steps

    total = np.zeros(D)
    for base in baselines:
        for k, x in enumerate(samples):
            dx = x - base
            points = base[None, :] + alphas[:, None] * dx[None, :]
            grads = batch_input_gradient(net, points)
            if not np.all(np.isfinite(grads)):
                raise FloatingPointError(f"non-finite gradient for sample {k}")
            total += dx * grads.mean(axis=0)
    return total / baselines.shape[0]


def calibrate(s2d: np.ndarray, s1d: np.ndarray, epsilon_floor: float = 1e-12) -> np.ndarray:
    """Divide |s2d[i,j]| by sqrt(|s1d[i] * s1d[j]|), floored to stay finite."""
    s2d = np.asarray(s2d, dtype=float)
    s1d = np.asarray(s1d, dtype=float)
    if epsilon_floor <= 0:
        raise ConfigurationError("epsilon_floor must be positive")
    if s2d.shape != (s1d.shape[0], s1d.shape[0]):
        raise ContractViolation("s2d/s1d dimensions do not match")
    denom = np.sqrt(np.maximum(np.abs(np.outer(s1d, s1d)), epsilon_floor))
    out = np.abs(s2d) / denom
    return (out + out.T) / 2.0


def compute_scores(net: CoupledNetwork, method: str, X_aug: np.ndarray | None = None,
                   cfg: AttributionConfig | None = None) -> ImportanceScores:
    """One-stop scoring: raw 1D/2D scores plus the calibrated matrix."""
    cfg = cfg or AttributionConfig()
    if method == "model_based":
        s2d = model_based_2d(net)
        s1d = model_based_1d(net)
    elif method == "instance_based":
        if X_aug is None:
            raise ContractViolation("instance_based scoring needs sample data")
        s2d = instance_based_2d(net, X_aug, cfg)
        s1d = instance_based_1d(net, X_aug, cfg)
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    calibrated = calibrate(s2d, s1d, cfg.epsilon_floor)
    return ImportanceScores(s1d=s1d, s2d=s2d, calibrated=calibrated, method=method)


def pair_class(i: int, j: int, p: int) -> str:
    """OO / D / DD label for 0-based augmented indices (D = exactly one knockoff)."""
    n_ko = (i >= p) + (j >= p)
    return ("OO", "D", "DD")[n_ko]


def write_scores_csv(path, scores: ImportanceScores):
    """Long-format export: one row per unordered pair (i, j), 1-based indices."""
    two_p = scores.s1d.shape[0]
    p = two_p // 2
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "class", "raw", "calibrated"])
        for i in range(two_p):
            for j in range(i + 1, two_p):
                writer.writerow([i + 1, j + 1, pair_class(i, j, p),
                                 repr(float(scores.s2d[i, j])), repr(float(scores.calibrated[i, j]))])


def read_scores_csv(path) -> ImportanceScores:
    """Rebuild score matrices from the long-format CSV (s1d is not stored)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append((int(row["i"]) - 1, int(row["j"]) - 1,
                         float(row["raw"]), float(row["calibrated"])))
    two_p = max(max(i, j) for i, j, _, _ in rows) + 1
    s2d = np.zeros((two_p, two_p))
    cal = np.zeros((two_p, two_p))
    for i, j, raw, c in rows:
        s2d[i, j] = s2d[j, i] = raw
        cal[i, j] = cal[j, i] = c
    return ImportanceScores(s1d=np.zeros(two_p), s2d=s2d, calibrated=cal,
                            method="model_based")
