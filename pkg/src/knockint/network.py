"""Feedforward network with a pairwise-coupling first layer.

The network consumes an augmented input ``(x, x_ko)`` of length ``2p``. A
coupling layer with per-feature weights ``z`` (originals) and ``z_tilde``
(knockoffs) produces ``p`` linear filter outputs, which feed a 3-hidden-layer
ELU MLP with an affine scalar head (logistic link for binary tasks).

An ablation variant (``coupling=False``) replaces the coupling layer with a
plain dense first layer on all ``2p`` inputs.

All differentiation is done analytically: reverse mode for input gradients,
forward-over-reverse for input Hessians.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, ContractViolation, TrainingDivergedError

TASKS = ("regression", "binary")

SERIALIZATION_VERSION = 1


def _elu(u):
    return np.where(u > 0, u, np.expm1(np.minimum(u, 0.0)))


def _elu_prime(u):
    return np.where(u > 0, 1.0, np.exp(np.minimum(u, 0.0)))


def _elu_second(u):
    # Left-limit convention at the kink: d2/du2 = exp(u) for u <= 0, else 0.
    return np.where(u > 0, 0.0, np.exp(np.minimum(u, 0.0)))


def _sigmoid(u):
    out = np.empty_like(u, dtype=float)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    return out


@dataclass
class TrainConfig:
    """Hyperparameters for mini-batch Adam training."""

    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    l1_filter_penalty: float = 1e-4
    # Sparsity on the MLP weight matrices pushes additive effects into
    # disjoint hidden units, which the weight-path interaction scores need.
    l1_mlp_penalty: float = 0.0
    grad_clip: float | None = None
    validation_fraction: float = 0.0

    def validate(self):
        if self.l1_mlp_penalty < 0:
            raise ConfigurationError("l1_mlp_penalty must be nonnegative")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigurationError("grad_clip must be positive")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.l1_filter_penalty < 0:
            raise ConfigurationError("l1_filter_penalty must be nonnegative")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigurationError("validation_fraction must be in [0, 1)")


@dataclass
class CoupledNetwork:
    """Parameters of the coupling-layer MLP.

    ``z``/``z_tilde`` are None when ``coupling`` is False, in which case
    ``w[0]`` has ``2p`` rows instead of ``p``.
    """

    z: np.ndarray | None
    z_tilde: np.ndarray | None
    w: list
    b: list
    task: str
    hidden_sizes: tuple
    coupling: bool = True
    # Response standardization learned during training (regression only).
    y_mean: float = 0.0
    y_std: float = 1.0

    @property
    def p(self) -> int:
        if self.coupling:
            return self.w[0].shape[0]
        return self.w[0].shape[0] // 2

    def copy(self) -> "CoupledNetwork":
        return CoupledNetwork(
            z=None if self.z is None else self.z.copy(),
            z_tilde=None if self.z_tilde is None else self.z_tilde.copy(),
            w=[wi.copy() for wi in self.w],
            b=[bi.copy() for bi in self.b],
            task=self.task,
            hidden_sizes=tuple(self.hidden_sizes),
            coupling=self.coupling,
            y_mean=self.y_mean,
            y_std=self.y_std,
        )

    def check_finite(self):
        for arr in self._all_params():
            if not np.all(np.isfinite(arr)):
                raise ContractViolation("network contains non-finite parameters")

    def _all_params(self):
        params = []
        if self.coupling:
            params += [self.z, self.z_tilde]
        params += list(self.w) + list(self.b)
        return params


def init_network(p, hidden_sizes=(64, 32, 16), task="regression", seed=0,
                 coupling=True, filter_init=0.1) -> CoupledNetwork:
    """Build a freshly initialized network.

    MLP weights use a Glorot-style scaled-uniform draw; biases are zero. The
    filter weights ``z`` and ``z_tilde`` start equal (``filter_init``) so the
    original feature and its knockoff compete from a symmetric start.
    """
    if p < 1:
        raise ConfigurationError(f"feature count must be >= 1, got {p}")
    hidden_sizes = tuple(int(h) for h in hidden_sizes)
    if len(hidden_sizes) != 3 or any(h < 1 for h in hidden_sizes):
        raise ConfigurationError(f"need 3 positive hidden sizes, got {hidden_sizes}")
    if task not in TASKS:
        raise ConfigurationError(f"unknown task {task!r}")

    rng = np.random.default_rng(seed)
    d0 = p if coupling else 2 * p
    dims = (d0,) + hidden_sizes + (1,)
    w, b = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        b.append(np.zeros(fan_out))
    z = zt = None
    if coupling:
        z = np.full(p, float(filter_init))
        zt = np.full(p, float(filter_init))
    return CoupledNetwork(z=z, z_tilde=zt, w=w, b=b, task=task,
                          hidden_sizes=hidden_sizes, coupling=coupling)


def _check_input(net: CoupledNetwork, X: np.ndarray):
    if X.shape[-1] != 2 * net.p:
        raise ContractViolation(
            f"expected augmented input of length {2 * net.p}, got {X.shape[-1]}")


def _filter_layer(net: CoupledNetwork, X: np.ndarray) -> np.ndarray:
    if net.coupling:
        p = net.p
        return net.z * X[..., :p] + net.z_tilde * X[..., p:]
    return X


def _forward_pass(net: CoupledNetwork, X: np.ndarray):
    """Run the MLP on a batch. Returns (h0, pre-activations, activations, out)."""
    h0 = _filter_layer(net, X)
    pre, act = [], []
    h = h0
    for l in range(3):
        a = h @ net.w[l] + net.b[l]
        pre.append(a)
        h = _elu(a)
        act.append(h)
    out = (h @ net.w[3] + net.b[3])[..., 0]
    return h0, pre, act, out


def forward(net: CoupledNetwork, x_aug: np.ndarray) -> float:
    """Scalar response for one augmented input (logistic link when binary)."""
    x_aug = np.asarray(x_aug, dtype=float)
    _check_input(net, x_aug)
    out = _forward_pass(net, x_aug[None, :])[3][0]
    if net.task == "binary":
        return float(_sigmoid(np.array([out]))[0])
    return float(out)


def predict(net: CoupledNetwork, X_aug: np.ndarray) -> np.ndarray:
    """Batch predictions on the response scale.

    Regression outputs are mapped back through the training-time
    standardization; binary outputs are probabilities.
    """
    X_aug = np.asarray(X_aug, dtype=float)
    _check_input(net, X_aug)
    out = _forward_pass(net, X_aug)[3]
    if net.task == "binary":
        return _sigmoid(out)
    return out * net.y_std + net.y_mean


def raw_output(net: CoupledNetwork, X_aug: np.ndarray) -> np.ndarray:
    """Pre-link affine output for a batch (the quantity attributions use)."""
    X_aug = np.asarray(X_aug, dtype=float)
    _check_input(net, X_aug)
    return _forward_pass(net, X_aug)[3]


def batch_input_gradient(net: CoupledNetwork, X_aug: np.ndarray) -> np.ndarray:
    """Gradient of the pre-link output w.r.t. each augmented input row."""
    X_aug = np.asarray(X_aug, dtype=float)
    _check_input(net, X_aug)
    net.check_finite()
    _, pre, _, _ = _forward_pass(net, X_aug)
    n = X_aug.shape[0]
    g = np.broadcast_to(net.w[3][:, 0], (n, net.w[3].shape[0])).copy()
    for l in (2, 1, 0):
        g = (g * _elu_prime(pre[l])) @ net.w[l].T
    if net.coupling:
        return np.concatenate([net.z * g, net.z_tilde * g], axis=-1)
    return g


def input_gradient(net: CoupledNetwork, x_aug: np.ndarray) -> np.ndarray:
    x_aug = np.asarray(x_aug, dtype=float)
    return batch_input_gradient(net, x_aug[None, :])[0]


def batch_input_hessian(net: CoupledNetwork, X_aug: np.ndarray) -> np.ndarray:
    """Input Hessians for a batch, shape (n, 2p, 2p).

    Forward-over-reverse: tangents for all 2p input directions are pushed
    through the forward pass, then through the adjoint pass. The result is
    symmetrized so H == H.T holds exactly.
    """
    X_aug = np.asarray(X_aug, dtype=float)
    _check_input(net, X_aug)
    net.check_finite()
    n, D = X_aug.shape
    p = net.p

    # Tangent of h0 w.r.t. the D unit input directions, shape (D, d0).
    if net.coupling:
        t0 = np.zeros((D, p))
        t0[:p, :] = np.diag(net.z)
        t0[p:, :] = np.diag(net.z_tilde)
    else:
        t0 = np.eye(D)

    h = _filter_layer(net, X_aug)                  # (n, d0)
    th = np.broadcast_to(t0, (n,) + t0.shape).copy()  # (n, D, d0)
    pre, tpre = [], []
    for l in range(3):
        a = h @ net.w[l] + net.b[l]
        ta = th @ net.w[l]
        pre.append(a)
        tpre.append(ta)
        h = _elu(a)
        th = _elu_prime(a)[:, None, :] * ta

    d3 = net.w[3].shape[0]
    g = np.broadcast_to(net.w[3][:, 0], (n, d3)).copy()   # grad w.r.t. h3
    tg = np.zeros((n, D, d3))
    for l in (2, 1, 0):
        s1 = _elu_prime(pre[l])
        s2 = _elu_second(pre[l])
        ga = g * s1
        tga = tg * s1[:, None, :] + (g * s2)[:, None, :] * tpre[l]
        g = ga @ net.w[l].T
        tg = tga @ net.w[l].T

    if net.coupling:
        H = np.concatenate([net.z * tg, net.z_tilde * tg], axis=-1)
    else:
        H = tg
    return (H + np.swapaxes(H, -1, -2)) / 2.0


def input_hessian(net: CoupledNetwork, x_aug: np.ndarray) -> np.ndarray:
    x_aug = np.asarray(x_aug, dtype=float)
    return batch_input_hessian(net, x_aug[None, :])[0]


def _loss_and_param_grads(net: CoupledNetwork, X: np.ndarray, y: np.ndarray,
                          l1_filter: float, l1_mlp: float = 0.0):
    """Mean loss over the batch plus gradients for every parameter."""
    n = X.shape[0]
    h0, pre, act, out = _forward_pass(net, X)
    if net.task == "binary":
        prob = _sigmoid(out)
        eps = 1e-12
        loss = -np.mean(y * np.log(prob + eps) + (1 - y) * np.log(1 - prob + eps))
        dout = (prob - y) / n
    else:
        resid = out - y
        loss = np.mean(resid ** 2)
        dout = 2.0 * resid / n

    grads = {}
    g = dout[:, None] * np.ones((1, 1))            # (n, 1)
    grads["w3"] = act[2].T @ g
    grads["b3"] = g.sum(axis=0)
    g = g @ net.w[3].T
    layer_inputs = [h0, act[0], act[1]]
    for l in (2, 1, 0):
        ga = g * _elu_prime(pre[l])
        grads[f"w{l}"] = layer_inputs[l].T @ ga
        grads[f"b{l}"] = ga.sum(axis=0)
        g = ga @ net.w[l].T
    if net.coupling:
        p = net.p
        grads["z"] = (X[:, :p] * g).sum(axis=0)
        grads["z_tilde"] = (X[:, p:] * g).sum(axis=0)
        if l1_filter > 0:
            loss += l1_filter * (np.abs(net.z).sum() + np.abs(net.z_tilde).sum())
            grads["z"] += l1_filter * np.sign(net.z)
            grads["z_tilde"] += l1_filter * np.sign(net.z_tilde)
    if l1_mlp > 0:
        for l in range(4):
            loss += l1_mlp * np.abs(net.w[l]).sum()
            grads[f"w{l}"] += l1_mlp * np.sign(net.w[l])
    return loss, grads


def _param_dict(net: CoupledNetwork):
    params = {f"w{l}": net.w[l] for l in range(4)}
    params.update({f"b{l}": net.b[l] for l in range(4)})
    if net.coupling:
        params["z"] = net.z
        params["z_tilde"] = net.z_tilde
    return params


def train(net: CoupledNetwork, X_aug: np.ndarray, y: np.ndarray,
          cfg: TrainConfig | None = None):
    """Train a copy of ``net`` with mini-batch Adam.

    Returns ``(trained_net, trace)`` where ``trace`` holds per-epoch mean
    training loss (and validation loss when a validation split is held out).
    Raises :class:`TrainingDivergedError` if the loss ever goes non-finite.
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    X_aug = np.asarray(X_aug, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_input(net, X_aug)
    if X_aug.shape[0] != y.shape[0]:
        raise ContractViolation("X_aug and y row counts differ")
    if not (np.all(np.isfinite(X_aug)) and np.all(np.isfinite(y))):
        raise ContractViolation("training data must be finite")
    n = X_aug.shape[0]
    if cfg.batch_size > n:
        raise ConfigurationError(f"batch_size {cfg.batch_size} exceeds n={n}")

    net = net.copy()
    rng = np.random.default_rng(cfg.seed)

    n_val = int(round(cfg.validation_fraction * n))
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    Xtr, ytr = X_aug[train_idx], y[train_idx]
    Xval, yval = X_aug[val_idx], y[val_idx]

    if net.task == "regression":
        net.y_mean = float(ytr.mean())
        net.y_std = float(ytr.std())
        if net.y_std <= 0:
            net.y_std = 1.0
        ytr = (ytr - net.y_mean) / net.y_std
        if n_val:
            yval = (yval - net.y_mean) / net.y_std

    params = _param_dict(net)
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p_) for k, p_ in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    trace = {"train_loss": [], "val_loss": [] if n_val else None}

    n_tr = Xtr.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_tr)
        epoch_losses = []
        for start in range(0, n_tr, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = _loss_and_param_grads(net, Xtr[idx], ytr[idx],
                                                cfg.l1_filter_penalty,
                                                cfg.l1_mlp_penalty)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            epoch_losses.append(loss)
            step += 1
            if cfg.grad_clip is not None:
                norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
                if norm > cfg.grad_clip:
                    scale = cfg.grad_clip / norm
                    grads = {k: g * scale for k, g in grads.items()}
            for k, g in grads.items():
                m[k] = beta1 * m[k] + (1 - beta1) * g
                v[k] = beta2 * v[k] + (1 - beta2) * g * g
                mhat = m[k] / (1 - beta1 ** step)
                vhat = v[k] / (1 - beta2 ** step)
                params[k] -= cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
        trace["train_loss"].append(float(np.mean(epoch_losses)))
        if n_val:
            loss_val, _ = _loss_and_param_grads(net, Xval, yval, 0.0)
            trace["val_loss"].append(float(loss_val))
    net.check_finite()
    return net, trace


def save_network(net: CoupledNetwork, path):
    """Serialize to a versioned ``.npz`` file; round trips bit-exactly."""
    meta = {
        "version": SERIALIZATION_VERSION,
        "task": net.task,
        "hidden_sizes": list(net.hidden_sizes),
        "coupling": net.coupling,
        "y_mean": net.y_mean,
        "y_std": net.y_std,
    }
    arrays = {f"w{l}": net.w[l] for l in range(4)}
    arrays.update({f"b{l}": net.b[l] for l in range(4)})
    if net.coupling:
        arrays["z"] = net.z
        arrays["z_tilde"] = net.z_tilde
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_network(path) -> CoupledNetwork:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta["version"] != SERIALIZATION_VERSION:
            raise ConfigurationError(f"unsupported network file version {meta['version']}")
        coupling = bool(meta["coupling"])
        net = CoupledNetwork(
            z=data["z"] if coupling else None,
            z_tilde=data["z_tilde"] if coupling else None,
            w=[data[f"w{l}"] for l in range(4)],
            b=[data[f"b{l}"] for l in range(4)],
            task=meta["task"],
            hidden_sizes=tuple(meta["hidden_sizes"]),
            coupling=coupling,
            y_mean=float(meta["y_mean"]),
            y_std=float(meta["y_std"]),
        )
    return net
