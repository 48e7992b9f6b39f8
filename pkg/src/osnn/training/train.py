"""Minibatch SGD for OSNN models with quantization and noise injection."""

from dataclasses import asdict, dataclass, field
import hashlib
import json

import numpy as np

from ..errors import ConfigError, ShapeError, TrainingError
from ..numerics import autograd as ag
from ..photonics.variation import NoiseSpec
from ..quant import QuantSpec
from .noise import NoisyExecutor

METRIC_FIELDS = ("epoch", "train_loss", "train_acc", "test_acc", "pruned_fraction")


@dataclass
class TrainConfig:
    lr: float = 0.05
    momentum: float = 0.9
    epochs: int = 20
    batch_size: int = 64
    lr_milestones: tuple = (0.5, 0.75)
    lr_decay: float = 0.1
    quant: QuantSpec = field(default_factory=QuantSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    group_lambda: float = 0.0
    prune_tau: float = 0.0
    prune_epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or not 0 <= self.momentum < 1:
            raise ConfigError("need lr > 0 and momentum in [0, 1)", "train.lr")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("need epochs >= 0 and batch_size >= 1", "train.epochs")
        if self.group_lambda < 0:
            raise ConfigError("group penalty weight must be >= 0", "train.group_lambda")
        if self.prune_tau < 0:
            raise ConfigError("prune threshold must be >= 0", "train.prune_tau")
        if self.prune_epochs < 0:
            raise ConfigError("prune_epochs must be >= 0", "train.prune_epochs")

    def to_dict(self):
        d = asdict(self)
        d["lr_milestones"] = list(self.lr_milestones)
        return d

    def hash(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def lr_at(config, epoch):
    lr = config.lr
    for frac in config.lr_milestones:
        if epoch >= int(round(frac * config.epochs)):
            lr *= config.lr_decay
    return lr


def accuracy(model, data, executor=None, batch_size=500):
    if len(data) == 0:
        return float("nan")
    pred = model.predict(data.images, executor, batch_size).argmax(axis=1)
    return float(np.mean(pred == data.labels))


def group_shrink(model, thresh):
    """Proximal step of the group penalty: w_ij *= max(0, 1 - thresh / ||w_ij||).

    Applied after each SGD step so whole units land exactly on zero.
    """
    for layer in model.layers:
        norms = np.linalg.norm(layer.w, axis=2, keepdims=True)
        scale = np.maximum(0.0, 1.0 - thresh / np.maximum(norms, 1e-300))
        layer.w = layer.w * scale


class _Momentum:
    def __init__(self, model):
        self.v = [(np.zeros_like(l.w), 0.0) for l in model.layers]

    def step(self, model, grads, lr, mu):
        for i, (layer, (gw, gg)) in enumerate(zip(model.layers, grads)):
            vw, vg = self.v[i]
            vw = mu * vw + gw
            vg = mu * vg + gg
            self.v[i] = (vw, vg)
            layer.w = np.clip(layer.w - lr * vw, -1.0, 1.0)
            layer.gain = float(layer.gain - lr * vg)
            layer.w[~layer.mask] = 0.0


def make_executor(config, rng, backend="ideal", dpe=None, calibration=None):
    if backend == "ideal":
        return NoisyExecutor(config.noise, rng)
    if backend == "dpe":
        if dpe is None:
            raise ConfigError("the dpe backend needs a fitted DPE model", "train.backend")
        from .dpe import DpeExecutor
        return DpeExecutor(dpe, config.noise, rng, calibration)
    raise ConfigError(f"unknown forward backend {backend!r}", "train.backend")


def train(model, train_data, test_data, config, backend="ideal", dpe=None, calibration=None, log=None):
    """Train in place; returns (model, metrics rows).

    ``log`` is called with each metrics row.  Test accuracy uses the
    noise-free ideal forward.  The dpe backend takes the fitted estimator and
    optionally the calibration table used for deployment commands.
    """
    if len(train_data) == 0:
        raise ShapeError("training set is empty")
    if train_data.images.shape[1:] != model.input_shape:
        raise ShapeError(f"data shape {train_data.images.shape[1:]} does not match model {model.input_shape}")
    model.set_quant(config.quant if config.quant.enabled else None)
    ss = np.random.SeedSequence(config.seed)
    shuffle_rng, noise_rng = [np.random.default_rng(s) for s in ss.spawn(2)]
    executor = make_executor(config, noise_rng, backend, dpe, calibration)
    opt = _Momentum(model)
    rows = []
    N = len(train_data)
    last_good = model.to_dict()
    for epoch in range(config.epochs):
        lr = lr_at(config, epoch)
        order = shuffle_rng.permutation(N)
        tot_loss, tot_correct = 0.0, 0
        for b in range(0, N, config.batch_size):
            idx = order[b:b + config.batch_size]
            params = model.params()
            logits = model.forward(train_data.images[idx], executor, params)
            loss = ag.softmax_cross_entropy(logits, train_data.labels[idx])
            if not np.isfinite(loss.value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b // config.batch_size}", last_good)
            grads = ag.backward(loss)
            opt.step(model, [(grads[w], float(grads[g])) for w, g in params], lr, config.momentum)
            if config.group_lambda > 0:
                group_shrink(model, lr * config.group_lambda)
            tot_loss += float(loss.value) * len(idx)
            tot_correct += int(np.sum(logits.value.argmax(axis=1) == train_data.labels[idx]))
        last_good = model.to_dict()
        row = {"epoch": epoch + 1, "train_loss": tot_loss / N, "train_acc": tot_correct / N,
               "test_acc": accuracy(model, test_data) if test_data is not None else float("nan"),
               "pruned_fraction": 1.0 - model.n_kept_units() / model.n_units()}
        rows.append(row)
        if log is not None:
            log(row)
    return model, rows


def format_metrics_csv(rows, config_hash):
    lines = [f"# config_hash={config_hash}", ",".join(METRIC_FIELDS)]
    for r in rows:
        lines.append(f"{r['epoch']},{r['train_loss']:.6f},{r['train_acc']:.6f},{r['test_acc']:.6f},"
                     f"{r['pruned_fraction']:.6f}")
    return "\n".join(lines) + "\n"
