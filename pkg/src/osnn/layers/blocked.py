"""Blocked linear layer W_ij = B diag(sigma_ij) P with shared B and P."""

from dataclasses import dataclass
import hashlib
import math

import numpy as np

from ..butterfly import ButterflyNetwork, PhaseConfiguration, configure_dft, configure_hadamard, transfer_matrix
from ..errors import ShapeError
from ..kernels import bsp_backward, bsp_forward
from ..numerics import autograd as ag
from ..quant import QuantSpec, sigma_from_latent, sigma_tape

TRANSFORMS = ("hadamard", "dft", "identity")


@dataclass(frozen=True)
class BlockPadding:
    m: int
    n: int
    k: int
    m_blocks: int
    n_blocks: int

    @property
    def m_pad(self):
        return self.m_blocks * self.k

    @property
    def n_pad(self):
        return self.n_blocks * self.k


def pad_to_block(m, n, k):
    if m < 1 or n < 1 or k < 1:
        raise ShapeError(f"dimensions must be positive, got m={m}, n={n}, k={k}")
    return BlockPadding(m, n, k, -(-m // k), -(-n // k))


def _unit_configs(k, transform):
    if transform == "hadamard":
        c = configure_hadamard(k)
        return c, c
    if transform == "dft":
        # P performs the forward transform, B the inverse
        return configure_dft(k, inverse=True), configure_dft(k, inverse=False)
    if transform == "identity":
        return None, None
    raise ShapeError(f"unknown transform {transform!r}; choose from {TRANSFORMS}")


def _split_complex(M):
    M = np.asarray(M)
    im = M.imag if np.iscomplexobj(M) and np.any(M.imag != 0) else None
    re = np.ascontiguousarray(M.real)
    re.setflags(write=False)
    if im is not None:
        im = np.ascontiguousarray(im)
        im.setflags(write=False)
    return re, im


class BlockedLinear:
    """m x n layer made of m* x n* blocks B diag(sigma_ij) P.

    Trainable state: latent weights ``w`` [m*, n*, k] (sigma = sign(w) q(|w|)),
    and an electronic output ``gain``.  B and P are frozen.  ``mask`` [m*, n*]
    removes whole sigma units.
    """

    def __init__(self, m, n, k=4, transform="hadamard", quant=None, gain=1.0, rng=None, w=None):
        self.pad = pad_to_block(m, n, k)
        self.m, self.n, self.k = m, n, k
        self.transform = transform
        self.b_config, self.p_config = _unit_configs(k, transform)
        if transform == "identity":
            self.B = np.eye(k)
            self.P = np.eye(k)
        else:
            self.B = transfer_matrix(self.b_config.network, self.b_config)
            self.P = transfer_matrix(self.p_config.network, self.p_config)
        self.B.setflags(write=False)
        self.P.setflags(write=False)
        self.Br, self.Bi = _split_complex(self.B)
        self.Pr, self.Pi = _split_complex(self.P)
        self.quant = quant
        shape = (self.pad.m_blocks, self.pad.n_blocks, k)
        if w is None:
            rng = np.random.default_rng(0) if rng is None else rng
            w = rng.uniform(-1.0, 1.0, shape)
        w = np.array(w, dtype=np.float64)
        if w.shape != shape:
            raise ShapeError(f"latent weights must have shape {shape}, got {w.shape}")
        self.w = w
        self.gain = float(gain)
        self.mask = np.ones(shape[:2], dtype=bool)

    @property
    def m_blocks(self):
        return self.pad.m_blocks

    @property
    def n_blocks(self):
        return self.pad.n_blocks

    @property
    def n_trainable(self):
        """Trainable optical devices (kept sigma entries)."""
        return int(self.mask.sum()) * self.k

    def unit_hashes(self):
        if self.b_config is None:
            ident = hashlib.sha256(b"identity%d" % self.k).hexdigest()[:16]
            return ident, ident
        return self.b_config.config_hash(), self.p_config.config_hash()

    def sigma(self):
        """Effective (quantized, masked) signed sigma [m*, n*, k]."""
        return sigma_from_latent(self.w, self.quant) * self.mask[:, :, None]

    def sigma_tensor(self, w_tensor):
        s = sigma_tape(w_tensor, self.quant)
        return ag.mul(s, self.mask[:, :, None].astype(np.float64))

    def dense_weight(self, sigma=None):
        """Assemble W (m x n) block by block; an independent check of the fused forward."""
        s = self.sigma() if sigma is None else sigma
        k = self.k
        W = np.zeros((self.pad.m_pad, self.pad.n_pad), dtype=complex)
        for i in range(self.m_blocks):
            for j in range(self.n_blocks):
                W[i * k:(i + 1) * k, j * k:(j + 1) * k] = self.B @ np.diag(s[i, j]) @ self.P
        return self.gain * W.real[:self.m, :self.n]

    def copy(self):
        other = BlockedLinear.__new__(BlockedLinear)
        other.__dict__.update(self.__dict__)
        other.w = self.w.copy()
        other.mask = self.mask.copy()
        return other

    def __repr__(self):
        return f"BlockedLinear(m={self.m}, n={self.n}, k={self.k}, transform={self.transform!r})"


def _pad_rows(x, rows):
    if x.shape[0] == rows:
        return x
    out = np.zeros((rows,) + x.shape[1:])
    out[:x.shape[0]] = x
    return out


def bsp_op(layer, x, sigma, sigma_delta=None):
    """Tape op: y = Re(B sum_j sigma_ij P x_j) for the columns of x [n, C].

    ``sigma`` is a Tensor [m*, n*, k]; ``sigma_delta`` an optional detached
    numpy perturbation [S, m*, n*, k] (one sigma set per C/S columns).
    Output is [m, C] (padding truncated); no gain applied.
    """
    x = ag.as_tensor(x)
    sigma = ag.as_tensor(sigma)
    if x.value.ndim != 2 or x.shape[0] != layer.n:
        raise ShapeError(f"input must be [{layer.n}, C], got {x.shape}")
    xp = _pad_rows(x.value, layer.pad.n_pad)
    s = sigma.value[None]
    if sigma_delta is not None:
        if x.shape[1] % sigma_delta.shape[0]:
            raise ShapeError("columns must split evenly across sigma sets")
        s = s + sigma_delta
    y = bsp_forward(xp, layer.Br, layer.Bi, layer.Pr, layer.Pi, s, None)[:layer.m]

    def vjp(g):
        gp = _pad_rows(g, layer.pad.m_pad)
        dx, ds, _ = bsp_backward(gp, xp, layer.Br, layer.Bi, layer.Pr, layer.Pi, s, None)
        return dx[:layer.n], ds.sum(axis=0)

    return ag.make_node(y, (x, sigma), "blocked_linear", vjp)


def _as_columns(x, n):
    x = np.asarray(x, dtype=np.float64)
    vec = x.ndim == 1
    X = x[:, None] if vec else x
    if X.ndim != 2 or X.shape[0] != n:
        raise ShapeError(f"input length {X.shape[0] if X.ndim else 0} does not match layer width {n}")
    return X, vec


def forward_blocked(layer, x):
    """Shared-unit forward of a vector [n] or a column batch [n, C]."""
    X, vec = _as_columns(x, layer.n)
    y = layer.gain * bsp_forward(_pad_rows(X, layer.pad.n_pad), layer.Br, layer.Bi, layer.Pr, layer.Pi,
                                 layer.sigma()[None], None)[:layer.m]
    return y[:, 0] if vec else y


def grad_blocked(layer, x, upstream):
    """(d/d sigma, d/d x) of <upstream, forward_blocked(layer, x)>, sigma treated as continuous."""
    X, vec = _as_columns(x, layer.n)
    G = np.asarray(upstream, dtype=np.float64)
    G = G[:, None] if G.ndim == 1 else G
    if G.shape != (layer.m, X.shape[1]):
        raise ShapeError(f"upstream gradient shape {G.shape} does not match output ({layer.m}, {X.shape[1]})")
    dx, ds, _ = bsp_backward(_pad_rows(G, layer.pad.m_pad) * layer.gain, _pad_rows(X, layer.pad.n_pad),
                             layer.Br, layer.Bi, layer.Pr, layer.Pi, layer.sigma()[None], None)
    dx = dx[:layer.n]
    return ds[0] * layer.mask[:, :, None], (dx[:, 0] if vec else dx)


def init_gain(n, k):
    return math.sqrt(6.0 * k / n)
