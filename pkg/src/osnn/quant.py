"""Uniform magnitude quantizer with a straight-through gradient."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import autograd as ag


@dataclass(frozen=True)
class QuantSpec:
    bits: int = 3
    lo: float = 0.0
    hi: float = 1.0
    enabled: bool = True

    def __post_init__(self):
        if self.bits < 1 or self.bits > 16:
            raise ConfigError(f"bits must be in [1, 16], got {self.bits}", "quant.bits")
        if not self.hi > self.lo:
            raise ConfigError("quantizer range must have hi > lo", "quant.range")

    @property
    def levels(self):
        return (1 << self.bits) - 1

    @property
    def step(self):
        return (self.hi - self.lo) / self.levels

    def grid(self):
        return self.lo + self.step * np.arange(self.levels + 1)


def quantize_values(v, spec):
    """Nearest grid level; ties round away from zero (upward on [0, 1])."""
    v = np.clip(np.asarray(v, dtype=np.float64), spec.lo, spec.hi)
    if not spec.enabled:
        return v
    u = (v - spec.lo) / spec.step
    return spec.lo + np.floor(u + 0.5) * spec.step


def fake_quantize(v, spec):
    """Tape op: forward quantizes, backward passes the gradient where lo <= v <= hi."""
    v = ag.as_tensor(v)
    inside = (v.value >= spec.lo) & (v.value <= spec.hi)
    return ag.straight_through(v, quantize_values(v.value, spec), inside)


def sigma_from_latent(w, spec=None):
    """Signed sigma from latent weights: sign(w) * q(min(|w|, 1)), sign(0) = +1."""
    w = np.asarray(w, dtype=np.float64)
    sgn = np.where(w < 0, -1.0, 1.0)
    mag = np.minimum(np.abs(w), 1.0)
    if spec is not None:
        mag = quantize_values(mag, spec)
    return sgn * mag


def sigma_tape(w, spec=None):
    """Tape version of ``sigma_from_latent``; gradient 1 where |w| <= 1, else 0."""
    w = ag.as_tensor(w)
    return ag.straight_through(w, sigma_from_latent(w.value, spec), np.abs(w.value) <= 1.0)
