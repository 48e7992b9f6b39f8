"""Structured pruning of whole sigma units with a group penalty."""

from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigError, ShapeError
from .train import accuracy, train


@dataclass
class PruneMask:
    """Per-layer boolean grids over the [m*, n*] sigma units (True = kept)."""

    masks: list

    @classmethod
    def from_model(cls, model):
        return cls([l.mask.copy() for l in model.layers])

    @property
    def n_units(self):
        return int(sum(m.size for m in self.masks))

    @property
    def n_kept(self):
        return int(sum(m.sum() for m in self.masks))

    @property
    def kept_fraction(self):
        return self.n_kept / self.n_units if self.n_units else 1.0

    @property
    def pruned_fraction(self):
        return 1.0 - self.kept_fraction

    def to_dict(self):
        return {"masks": [m.astype(int).tolist() for m in self.masks]}

    @classmethod
    def from_dict(cls, d):
        return cls([np.array(m, dtype=bool) for m in d["masks"]])


def unit_norms(layer):
    """||sigma_ij||_2 of the effective (quantized, masked) units, [m*, n*]."""
    return np.linalg.norm(layer.sigma(), axis=2)


def apply_mask(model, mask):
    if len(mask.masks) != len(model.layers):
        raise ShapeError("mask has a different number of layers than the model")
    for layer, m in zip(model.layers, mask.masks):
        if m.shape != layer.mask.shape:
            raise ShapeError(f"mask shape {m.shape} does not match layer grid {layer.mask.shape}")
        layer.mask = layer.mask & m
        layer.w[~layer.mask] = 0.0
    return model


def prune_sigma_groups(model, train_data, test_data, config, log=None):
    """Penalized fine-tune, threshold unit norms below tau, then fine-tune survivors.

    ``config.epochs`` penalized epochs with weight ``config.group_lambda``,
    then ``config.prune_epochs`` epochs with the mask fixed.  The input model
    is not modified.  Returns (model, PruneMask, metrics).
    """
    if config.group_lambda < 0 or config.prune_tau < 0:
        raise ConfigError("pruning needs lambda >= 0 and tau >= 0", "train.group_lambda")
    acc_before = accuracy(model, test_data) if test_data is not None else float("nan")
    m = model.copy()
    rows = []
    if config.epochs > 0:
        _, r = train(m, train_data, None, config, log=log)
        rows += [dict(row, phase="penalized") for row in r]
    keep = PruneMask([unit_norms(l) >= config.prune_tau if config.prune_tau > 0 else np.ones_like(l.mask)
                      for l in m.layers])
    apply_mask(m, keep)
    if config.prune_epochs > 0:
        ft = replace(config, group_lambda=0.0, epochs=config.prune_epochs)
        _, r = train(m, train_data, None, ft, log=log)
        rows += [dict(row, phase="finetune") for row in r]
    mask = PruneMask.from_model(m)
    acc_after = accuracy(m, test_data) if test_data is not None else float("nan")
    metrics = {"pruned_fraction": mask.pruned_fraction, "kept_units": mask.n_kept, "units": mask.n_units,
               "acc_before": acc_before, "acc_after": acc_after, "acc_delta": acc_after - acc_before,
               "rows": rows}
    return m, mask, metrics
