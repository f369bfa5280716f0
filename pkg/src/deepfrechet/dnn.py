"""Feedforward ReLU networks for one embedding coordinate each.

A network with ``L`` hidden layers of equal width computes

    g(x) = W_L g_L(x) + b_L,   g_l(x) = relu(W_{l-1} g_{l-1}(x) + b_{l-1}),

and is fitted by Adam on the mean squared error, with inverted dropout on
hidden activations and early stopping on a held-out validation split.

Inputs and targets are standardized with statistics of the training split;
the scalers are stored on the network and undone by :meth:`Mlp.predict`.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .exceptions import InputError, NumericError, ShapeError

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
IMPROVEMENT_TOL = 1e-6


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator (Philox) used for every stochastic step."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


@dataclass(frozen=True)
class MlpConfig:
    layers: int = 3
    width: int = 32
    dropout: float = 0.1
    learning_rate: float = 1e-3
    max_epochs: int = 500
    patience: int = 20
    batch_size: int = 32
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1:
            raise InputError("need at least one hidden layer", field="layers")
        if self.width < 1:
            raise InputError("layer width must be positive", field="width")
        if not 0.0 <= self.dropout < 1.0:
            raise InputError("dropout rate must lie in [0, 1)", field="dropout")
        if self.learning_rate < 0:
            raise InputError("learning rate must be nonnegative", field="learning_rate")
        if not 0.0 < self.val_fraction < 1.0:
            raise InputError("validation fraction must lie in (0, 1)", field="val_fraction")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise InputError("invalid epoch/batch/patience settings", field="batch_size")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data) -> "MlpConfig":
        names = cls.__dataclass_fields__.keys()
        unknown = set(data) - set(names)
        if unknown:
            raise InputError(f"unknown network settings: {sorted(unknown)}", field=sorted(unknown)[0])
        return cls(**dict(data))


def hyperparameter_grid(seed: int = 0, **fixed) -> List[MlpConfig]:
    """Candidate configurations: depth x width x dropout x learning rate."""
    grid = []
    for layers, width, dropout, lr in itertools.product(
        (3, 4, 5, 6), (8, 16, 32, 64), (0.1, 0.2, 0.3, 0.4), (1e-4, 5e-4, 1e-3, 5e-3)
    ):
        grid.append(MlpConfig(layers=layers, width=width, dropout=dropout, learning_rate=lr, seed=seed, **fixed))
    return grid


@dataclass(frozen=True)
class TrainSplit:
    train: np.ndarray
    val: np.ndarray


def train_val_split(n: int, fraction: float, rng) -> TrainSplit:
    n_val = int(round(fraction * n))
    if n_val < 1 or n_val >= n:
        raise InputError(f"validation split of {n} samples at {fraction:.0%} is degenerate", stage="dnn")
    perm = make_rng(rng).permutation(n)
    return TrainSplit(np.sort(perm[n_val:]), np.sort(perm[:n_val]))


@dataclass
class Mlp:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    config: MlpConfig = field(default_factory=MlpConfig)
    x_shift: Optional[np.ndarray] = None
    x_scale: Optional[np.ndarray] = None
    z_shift: float = 0.0
    z_scale: float = 1.0
    history: List[dict] = field(default_factory=list)
    best_epoch: int = 0
    # Adam moments, one per parameter array (weights then biases)
    m: Optional[list] = None
    v: Optional[list] = None
    step: int = 0

    @classmethod
    def init(cls, input_dim: int, config: MlpConfig, rng) -> "Mlp":
        """Uniform init on ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` per layer."""
        rng = make_rng(rng)
        sizes = [input_dim] + [config.width] * config.layers + [1]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases, config)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def params(self) -> list:
        return self.weights + self.biases

    def _standardize(self, X):
        X = np.asarray(X, dtype=np.float64)
        if self.x_shift is not None:
            X = (X - self.x_shift) / self.x_scale
        return X

    def predict(self, X) -> np.ndarray:
        """Eval-mode outputs in target units for a batch ``(n, p)``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_dim:
            raise ShapeError(f"expected {self.input_dim} predictors, got {X.shape[1]}")
        out = _forward_core(self, self._standardize(X), False, None)[0]
        return out * self.z_scale + self.z_shift

    def to_dict(self) -> dict:
        return {
            "shapes": [list(w.shape) for w in self.weights],
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "config": self.config.to_dict(),
            "x_shift": None if self.x_shift is None else self.x_shift.tolist(),
            "x_scale": None if self.x_scale is None else self.x_scale.tolist(),
            "z_shift": self.z_shift,
            "z_scale": self.z_scale,
            "best_epoch": self.best_epoch,
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, data) -> "Mlp":
        arr = lambda v: None if v is None else np.asarray(v, dtype=np.float64)  # noqa: E731
        weights = [np.asarray(w, dtype=np.float64).reshape(s) for w, s in zip(data["weights"], data["shapes"])]
        return cls(
            weights=weights,
            biases=[np.asarray(b, dtype=np.float64) for b in data["biases"]],
            config=MlpConfig.from_dict(data["config"]),
            x_shift=arr(data.get("x_shift")),
            x_scale=arr(data.get("x_scale")),
            z_shift=float(data.get("z_shift", 0.0)),
            z_scale=float(data.get("z_scale", 1.0)),
            history=list(data.get("history", [])),
            best_epoch=int(data.get("best_epoch", 0)),
        )


def _forward_core(net: Mlp, X, train_mode, rng):
    """Batch forward pass on standardized inputs; returns outputs and a cache."""
    rate = net.config.dropout if train_mode else 0.0
    a = X
    cache = [(a, None, None)]
    L = len(net.weights) - 1
    for layer in range(L):
        pre = a @ net.weights[layer].T + net.biases[layer]
        act = np.maximum(pre, 0.0)
        mask = None
        if rate > 0.0:
            mask = (rng.random(act.shape) >= rate) / (1.0 - rate)
            act = act * mask
        cache.append((act, pre, mask))
        a = act
    out = a @ net.weights[L].T + net.biases[L]
    out = out[:, 0]
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite network activation", stage="dnn")
    return out, cache


def forward(net: Mlp, x, train_mode: bool = False, rng=None) -> float:
    """Network output for one predictor vector ``x``.

    In ``train_mode`` hidden activations are dropped with the configured rate
    (and rescaled); evaluation mode is deterministic and ignores ``rng``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != net.input_dim:
        raise ShapeError(f"expected {net.input_dim} predictors, got {x.size}")
    if train_mode and rng is None:
        raise InputError("train-mode forward needs an rng for dropout")
    out = _forward_core(net, net._standardize(x[None, :]), train_mode, make_rng(rng) if train_mode else None)[0]
    return float(out[0] * net.z_scale + net.z_shift)


def loss_and_grad(net: Mlp, X, z, train_mode: bool = False, rng=None):
    """Mean squared error over a batch and its exact gradients.

    Inputs and targets go through the network's scalers, so the risk is in
    standardized target units (identical to raw units for a fresh network).

    Returns
    -------
    risk : float
    grads : list of arrays
        Gradients for ``net.weights`` followed by ``net.biases``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    z = np.asarray(z, dtype=np.float64).ravel()
    if X.shape[0] == 0:
        raise InputError("empty batch")
    if X.shape[0] != z.size or X.shape[1] != net.input_dim:
        raise ShapeError(f"batch shapes {X.shape} and {z.shape} do not match the network")
    zs = (z - net.z_shift) / net.z_scale
    out, cache = _forward_core(net, net._standardize(X), train_mode, make_rng(rng) if train_mode else None)
    resid = out - zs
    risk = float(np.mean(resid**2))
    if not np.isfinite(risk):
        raise NumericError("non-finite empirical risk", stage="dnn")

    L = len(net.weights) - 1
    gW = [None] * (L + 1)
    gb = [None] * (L + 1)
    delta = (2.0 / X.shape[0]) * resid[:, None]
    for layer in range(L, -1, -1):
        a_prev = cache[layer][0]
        gW[layer] = delta.T @ a_prev
        gb[layer] = delta.sum(axis=0)
        if layer == 0:
            break
        _, pre, mask = cache[layer]
        delta = delta @ net.weights[layer]
        if mask is not None:
            delta = delta * mask
        delta = delta * (pre > 0)
    return risk, gW + gb


def _adam_step(net: Mlp, grads, lr):
    params = net.params
    if net.m is None:
        net.m = [np.zeros_like(p) for p in params]
        net.v = [np.zeros_like(p) for p in params]
    net.step += 1
    c1 = 1.0 - ADAM_BETA1**net.step
    c2 = 1.0 - ADAM_BETA2**net.step
    for p, g, m, v in zip(params, grads, net.m, net.v):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def _eval_risk(net, X, zs):
    out = _forward_core(net, X, False, None)[0]
    return float(np.mean((out - zs) ** 2))


def train(X, z, config: MlpConfig = MlpConfig()) -> Mlp:
    """Fit one network by Adam with early stopping.

    The validation split is drawn from ``config.seed``. Training stops once
    the validation risk has not improved by more than ``1e-6`` for
    ``patience`` consecutive epochs (at least one), or after ``max_epochs``.
    The parameters of the epoch with the lowest validation risk are returned.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    z = np.asarray(z, dtype=np.float64).ravel()
    n, p = X.shape
    if n != z.size:
        raise ShapeError(f"{n} predictor rows but {z.size} targets", stage="dnn")
    if n < 5 or p < 1:
        raise InputError(f"need n >= 5 and p >= 1 (got n={n}, p={p})", stage="dnn")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(z))):
        raise InputError("training data contain non-finite values", stage="dnn")

    rng = make_rng(config.seed)
    split = train_val_split(n, config.val_fraction, rng)
    net = Mlp.init(p, config, rng)

    Xtr, ztr = X[split.train], z[split.train]
    net.x_shift = Xtr.mean(axis=0)
    scale = Xtr.std(axis=0)
    net.x_scale = np.where(scale > 0, scale, 1.0)
    net.z_shift = float(ztr.mean())
    zsd = float(ztr.std())
    net.z_scale = zsd if zsd > 0 else 1.0

    if zsd == 0.0:
        # constant target: an exactly constant network
        net.weights[-1][:] = 0.0
        net.biases[-1][:] = 0.0
        net.history.append({"epoch": 1, "train": 0.0, "val": 0.0})
        net.best_epoch = 1
        return net

    Xtr_s = net._standardize(Xtr)
    Xva_s = net._standardize(X[split.val])
    ztr_s = (ztr - net.z_shift) / net.z_scale
    zva_s = (z[split.val] - net.z_shift) / net.z_scale
    # gradients below are taken on already-standardized arrays
    core = Mlp(net.weights, net.biases, config)

    best_val = np.inf
    ref_val = np.inf
    best_params = None
    wait = 0
    ntr = Xtr_s.shape[0]
    bs = min(config.batch_size, ntr)
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(ntr)
        for start in range(0, ntr, bs):
            idx = perm[start : start + bs]
            _, grads = loss_and_grad(core, Xtr_s[idx], ztr_s[idx], train_mode=True, rng=rng)
            _adam_step(core, grads, config.learning_rate)
        tr_risk = _eval_risk(core, Xtr_s, ztr_s)
        va_risk = _eval_risk(core, Xva_s, zva_s)
        if not (np.isfinite(tr_risk) and np.isfinite(va_risk)):
            raise NumericError("non-finite empirical risk", stage="dnn")
        net.history.append({"epoch": epoch, "train": tr_risk, "val": va_risk})
        if va_risk < best_val:
            best_val = va_risk
            best_params = [q.copy() for q in core.params]
            net.best_epoch = epoch
        if va_risk < ref_val - IMPROVEMENT_TOL:
            ref_val = va_risk
            wait = 0
        else:
            wait += 1
            if wait >= max(config.patience, 1):
                break

    nl = len(net.weights)
    net.weights = best_params[:nl]
    net.biases = best_params[nl:]
    log.debug("trained %s: %d epochs, best val %.4g at %d", config, len(net.history), best_val, net.best_epoch)
    return net


def best_validation_risk(net: Mlp) -> float:
    """Lowest validation risk in target units."""
    return min(h["val"] for h in net.history) * net.z_scale**2


def grid_search(X, z, grids: Sequence[MlpConfig]) -> MlpConfig:
    """Candidate with the lowest held-out risk; ties go to the earlier one.

    Candidates that share a seed are scored on the same validation split.
    """
    if len(grids) == 0:
        raise InputError("empty configuration grid")
    best, best_risk = None, np.inf
    for cand in grids:
        risk = best_validation_risk(train(X, z, cand))
        if risk < best_risk:
            best, best_risk = cand, risk
    return best if best is not None else grids[0]


def with_seed(config: MlpConfig, seed: int) -> MlpConfig:
    return replace(config, seed=int(seed))
