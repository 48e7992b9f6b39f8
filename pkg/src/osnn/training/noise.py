"""Dynamic-noise injection and the noisy ideal-math executor."""

import numpy as np

from ..errors import ShapeError
from ..layers.blocked import bsp_op
from ..numerics import autograd as ag
from ..photonics.variation import NoiseSpec

SITES = ("input", "phase", "detector")


def inject_noise(x, spec, site, rng):
    """Additive Gaussian at ``site``; the input site clamps to [0, 1]."""
    if site not in SITES:
        raise ShapeError(f"unknown noise site {site!r}; choose from {SITES}")
    std = {"input": spec.input_sigma, "phase": spec.phase_drift_sigma, "detector": spec.detector_sigma}[site]
    x = np.asarray(x, dtype=np.float64)
    if std == 0:
        return x.copy()
    out = x + rng.normal(0.0, std, x.shape)
    if site == "input":
        out = np.clip(out, 0.0, 1.0)
    return out


def drifted_sigma(sigma, drift):
    """Signed magnitude after a phase drift on the attenuator: sign * cos((theta + d)/2)."""
    sgn = np.where(sigma < 0, -1.0, 1.0)
    theta = 2.0 * np.arccos(np.clip(np.abs(sigma), 0.0, 1.0))
    return sgn * np.cos(0.5 * (theta + drift))


def shot_scale(x, k):
    """Full-scale factor of every optical shot: max of each k-row chunk of each column [n_blocks, C]."""
    x = np.asarray(x, dtype=np.float64)
    nb = -(-x.shape[0] // k)
    xp = np.zeros((nb * k, x.shape[1]))
    xp[:x.shape[0]] = x
    return xp.reshape(nb, k, -1).max(axis=1)


def shot_scale_tensor(cols, k):
    """Tape version of ``shot_scale`` repeated over the chunk rows -> [n, C].

    The gradient goes to the arg-max entry of each chunk, so encoding by the
    max stays scale-invariant in the backward pass too.  With a detached scale
    the gradient rewards growing the weights against fixed noise.
    """
    cols = ag.as_tensor(cols)
    n, C = cols.shape
    nb = -(-n // k)
    xp = np.zeros((nb * k, C))
    xp[:n] = cols.value
    blk = xp.reshape(nb, k, C)
    arg = blk.argmax(axis=1)[:, None]
    mx = np.take_along_axis(blk, arg, 1)[:, 0]

    def vjp(g):
        gp = np.zeros((nb * k, C))
        gp[:n] = g
        out = np.zeros((nb, k, C))
        np.put_along_axis(out, arg, gp.reshape(nb, k, C).sum(axis=1)[:, None], 1)
        return (out.reshape(nb * k, C)[:n],)

    return ag.make_node(np.repeat(mx, k, axis=0)[:n], (cols,), "shot_scale", vjp)


def encode_shots(cols, k, input_sigma, rng, amplitude=None):
    """Amplitude encoding of a column batch [n, C], one shot per k-row chunk.

    Each shot is scaled to full range by its max, perturbed by input noise
    (clamped to [0, 1]), optionally passed through ``amplitude`` (modulator
    response, tape op) and scaled back.  Because the layer is linear this
    equals running every shot separately and accumulating the rescaled
    detector outputs.  All-zero shots are the zero-scale limit: no light.
    Returns (encoded tensor [n, C], shot scales [n_blocks, C]).
    """
    cols = ag.as_tensor(cols)
    s = shot_scale_tensor(cols, k)
    xn = ag.div(cols, ag.add(s, (s.value == 0) * 1.0))
    if input_sigma > 0:
        noisy = xn.value + rng.normal(0.0, input_sigma, xn.shape)
        xn = ag.clip(ag.add(xn, noisy - xn.value), 0.0, 1.0)
    if amplitude is not None:
        xn = amplitude(xn)
    return ag.mul(xn, s), s.value[::k]


def detector_noise(y, scales, std, rng):
    """Accumulated detector noise of the shots: std * sqrt(sum_j s_j^2) per column."""
    if std == 0:
        return y
    return ag.add(y, rng.normal(0.0, std, y.shape) * np.sqrt((scales ** 2).sum(axis=0)))


class NoisyExecutor:
    """Ideal math with per-layer amplitude encoding and dynamic noise.

    Every k-chunk of an input column is one shot of the time-multiplexed core,
    encoded at full scale (see ``encode_shots``); attenuator phases drift once
    per sample (image) as a detached perturbation of sigma; detector noise is
    added per shot.
    """

    def __init__(self, noise=NoiseSpec(), rng=None):
        self.noise = noise
        self.rng = np.random.default_rng(0) if rng is None else rng

    def linear(self, index, layer, cols, n_samples, w):
        sigma = layer.sigma_tensor(w)
        nz = self.noise
        if nz.is_zero:
            return bsp_op(layer, cols, sigma)
        xe, scales = encode_shots(cols, layer.k, nz.input_sigma, self.rng)
        delta = None
        if nz.phase_drift_sigma > 0:
            s = sigma.value
            drift = self.rng.normal(0.0, nz.phase_drift_sigma, (n_samples,) + s.shape)
            delta = drifted_sigma(s[None], drift) * layer.mask[None, :, :, None] - s[None]
        return detector_noise(bsp_op(layer, xe, sigma, delta), scales, nz.detector_sigma, self.rng)
