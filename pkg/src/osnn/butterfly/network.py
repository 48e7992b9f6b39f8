"""Radix-2 butterfly meshes of 2x2 couplers and phase shifters.

Signals are tracked by their in-place FFT index.  Stage ``s`` (``half = 2**s``)
couples the index pairs ``(g + j, g + j + half)``; physically, pair ``p`` of a
stage sits on waveguides ``(2p, 2p + 1)``, so the crossings in front of each
coupler column are the permutation from the previous layout to this one.
Each stage is: crossings, one phase shifter per waveguide, k/2 couplers.
After the last stage a fixed permutation returns to natural order and a
column of k output phase shifters closes the network.

``ordering`` selects how input ports are wired onto in-place indices:
``"natural"`` (port q -> index q) or ``"bit_reversed"`` (port q -> bitrev(q),
the decimation-in-time wiring that realizes the DFT).
"""

import hashlib
import json

import numpy as np

from ..errors import ShapeError
from ..numerics import autograd as ag

ORDERINGS = ("natural", "bit_reversed")


def is_power_of_two(k):
    return isinstance(k, (int, np.integer)) and k >= 2 and (k & (k - 1)) == 0


def bit_reverse(q, bits):
    r = 0
    for _ in range(bits):
        r = (r << 1) | (q & 1)
        q >>= 1
    return r


def inversion_count(perm):
    perm = list(perm)
    return sum(1 for i in range(len(perm)) for j in range(i + 1, len(perm)) if perm[i] > perm[j])


class ButterflyNetwork:
    def __init__(self, k, ordering="natural"):
        if not is_power_of_two(k):
            raise ShapeError(f"butterfly size must be a power of two >= 2, got {k}")
        if ordering not in ORDERINGS:
            raise ShapeError(f"unknown ordering {ordering!r}")
        self.k = int(k)
        self.ordering = ordering
        self.n_stages = int(np.log2(k))
        if ordering == "natural":
            self.input_map = np.arange(k)
        else:
            self.input_map = np.array([bit_reverse(q, self.n_stages) for q in range(k)])
        self.pairs = []      # per stage: (a_idx, b_idx), pair p on waveguides 2p, 2p+1
        self.layouts = []    # per stage: in-place index sitting on each waveguide
        for s in range(self.n_stages):
            half = 1 << s
            a, b = [], []
            for g in range(0, k, 2 * half):
                for j in range(half):
                    a.append(g + j)
                    b.append(g + j + half)
            a, b = np.array(a), np.array(b)
            self.pairs.append((a, b))
            layout = np.empty(k, dtype=int)
            layout[0::2] = a
            layout[1::2] = b
            self.layouts.append(layout)

    @property
    def n_couplers(self):
        return (self.k // 2) * self.n_stages

    @property
    def n_phases(self):
        return self.k * self.n_stages + self.k

    def stage_permutations(self):
        """Waveguide permutation in front of each stage, plus the final one.

        Entry ``perm[w]`` is the source waveguide feeding waveguide ``w``.
        """
        k = self.k
        # before stage 0, waveguide q carries index input_map[q]
        carried = self.input_map.copy()
        perms = []
        for layout in self.layouts + [np.arange(k)]:
            where = np.empty(k, dtype=int)
            where[carried] = np.arange(k)
            perms.append(where[layout])
            carried = layout
        return perms

    def crossing_count(self):
        return int(sum(inversion_count(p) for p in self.stage_permutations()))

    def descriptor(self):
        return {"kind": "butterfly", "k": self.k, "ordering": self.ordering,
                "stages": self.n_stages, "couplers": self.n_couplers, "phases": self.n_phases}

    def descriptor_hash(self):
        blob = json.dumps(self.descriptor(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, ButterflyNetwork) and self.descriptor() == other.descriptor()

    def __hash__(self):
        return hash((self.k, self.ordering))

    def __repr__(self):
        return f"ButterflyNetwork(k={self.k}, ordering={self.ordering!r})"


class PhaseConfiguration:
    """Flat phase vector of one network; stage s owns ``phases[s*k:(s+1)*k]``."""

    def __init__(self, network, phases):
        phases = np.array(phases, dtype=np.float64).reshape(-1)
        if phases.size != network.n_phases:
            raise ShapeError(f"{network!r} needs {network.n_phases} phases, got {phases.size}")
        if not np.all(np.isfinite(phases)):
            raise ShapeError("phases must be finite")
        self.network = network
        self.phases = phases
        self.phases.setflags(write=False)

    def to_dict(self):
        return {"network": self.network.descriptor(), "network_hash": self.network.descriptor_hash(),
                "phases": [float(p) for p in self.phases]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d):
        net = ButterflyNetwork(int(d["network"]["k"]), d["network"].get("ordering", "natural"))
        if d.get("network_hash") not in (None, net.descriptor_hash()):
            raise ShapeError("phase configuration was exported for a different network")
        return cls(net, d["phases"])

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def config_hash(self):
        return hashlib.sha256(self.phases.tobytes() + self.network.descriptor_hash().encode()).hexdigest()[:16]

    def __repr__(self):
        return f"PhaseConfiguration({self.network!r}, hash={self.config_hash()})"


def _phases_of(net, config):
    if isinstance(config, PhaseConfiguration):
        if config.network != net:
            raise ShapeError("configuration belongs to a different network")
        return config.phases
    phases = np.asarray(config, dtype=np.float64).reshape(-1)
    if phases.size != net.n_phases:
        raise ShapeError(f"{net!r} needs {net.n_phases} phases, got {phases.size}")
    return phases


def transfer_matrix(net, config, kappa=None, phase_offsets=None):
    """k x k complex transfer matrix (output port x input port).

    ``kappa``: optional [stages, k/2] coupling ratios (default 0.5);
    ``phase_offsets``: optional static offsets added to every phase.
    """
    k = net.k
    phases = _phases_of(net, config)
    if phase_offsets is not None:
        phases = phases + np.asarray(phase_offsets).reshape(-1)
    if kappa is None:
        kappa = np.full((net.n_stages, k // 2), 0.5)
    kappa = np.asarray(kappa, dtype=np.float64)
    X = np.zeros((k, k), dtype=complex)
    X[net.input_map, np.arange(k)] = 1.0
    for s, (a, b) in enumerate(net.pairs):
        col = np.exp(1j * phases[s * k:(s + 1) * k])
        xa = X[a] * col[0::2, None]
        xb = X[b] * col[1::2, None]
        t = np.sqrt(1.0 - kappa[s])[:, None]
        r = 1j * np.sqrt(kappa[s])[:, None]
        X[a] = t * xa + r * xb
        X[b] = r * xa + t * xb
    return np.exp(1j * phases[net.n_stages * k:])[:, None] * X


def transfer_tape(net, phases, kappa=None):
    """Differentiable transfer matrix as a complex pair of Tensors.

    phases: Tensor [R, n_phases] (R independent networks, e.g. restarts);
    kappa: optional Tensor broadcastable to [R, stages, k/2].
    Returns (re, im), each [R, k, k].
    """
    k = net.k
    phases = ag.as_tensor(phases)
    if phases.value.ndim == 1:
        phases = ag.reshape(phases, (1, -1))
    R = phases.shape[0]
    x0 = np.zeros((R, k, k))
    x0[:, net.input_map, np.arange(k)] = 1.0
    Xr, Xi = ag.as_tensor(x0), ag.as_tensor(np.zeros((R, k, k)))
    cos_p, sin_p = ag.expi(phases)
    for s, (a, b) in enumerate(net.pairs):
        sl = np.arange(s * k, (s + 1) * k)
        cr = ag.reshape(ag.take(cos_p, sl, axis=1), (R, k, 1))
        ci = ag.reshape(ag.take(sin_p, sl, axis=1), (R, k, 1))
        even, odd = np.arange(0, k, 2), np.arange(1, k, 2)
        xa = ag.cmul((ag.take(Xr, a, 1), ag.take(Xi, a, 1)), (ag.take(cr, even, 1), ag.take(ci, even, 1)))
        xb = ag.cmul((ag.take(Xr, b, 1), ag.take(Xi, b, 1)), (ag.take(cr, odd, 1), ag.take(ci, odd, 1)))
        if kappa is None:
            t = ag.as_tensor(np.full((1, k // 2, 1), np.sqrt(0.5)))
            r = t
        else:
            kap = ag.take(ag.as_tensor(kappa), [s], axis=-2)          # [.., 1, k/2]
            kap = ag.reshape(kap, kap.shape[:-2] + (k // 2, 1))
            t = ag.sqrt(1.0 - kap)
            r = ag.sqrt(kap)
        # [t, i r; i r, t] acting on (xa, xb)
        ya_r = ag.sub(ag.mul(t, xa[0]), ag.mul(r, xb[1]))
        ya_i = ag.add(ag.mul(t, xa[1]), ag.mul(r, xb[0]))
        yb_r = ag.sub(ag.mul(t, xb[0]), ag.mul(r, xa[1]))
        yb_i = ag.add(ag.mul(t, xb[1]), ag.mul(r, xa[0]))
        order = np.argsort(np.concatenate([a, b]))
        Xr = ag.take(ag.concat([ya_r, yb_r], axis=1), order, axis=1)
        Xi = ag.take(ag.concat([ya_i, yb_i], axis=1), order, axis=1)
    sl = np.arange(net.n_stages * k, net.n_phases)
    orr = ag.reshape(ag.take(cos_p, sl, axis=1), (R, k, 1))
    ori = ag.reshape(ag.take(sin_p, sl, axis=1), (R, k, 1))
    return ag.cmul((orr, ori), (Xr, Xi))


def _configure(net, block):
    """Closed-form phases for a per-stage 2x2 target ``block(s, j) -> (t00, t01, t10, t11)``.

    Each block must be (1/sqrt2) x a matrix with unit-modulus entries and
    t00 t11 + t01 t10 = 0 (true for DFT twiddles and H2).  Leftover phases are
    tracked per in-place index and cancelled by the output column.
    """
    k = net.k
    pend = np.ones(k, dtype=complex)
    phases = np.zeros(net.n_phases)
    for s, (a, b) in enumerate(net.pairs):
        half = 1 << s
        for p in range(k // 2):
            ia, ib = a[p], b[p]
            t00, t01, t10, t11 = block(s, ia % half)
            c0 = 1.0
            c1 = -1j * t01 / t00
            phases[s * k + 2 * p] = np.angle(c0 / pend[ia])
            phases[s * k + 2 * p + 1] = np.angle(c1 / pend[ib])
            pend[ia] = 1.0 / t00
            pend[ib] = 1j / t10
    phases[net.n_stages * k:] = np.angle(1.0 / pend)
    return PhaseConfiguration(net, np.mod(phases, 2 * np.pi))


def configure_dft(k, inverse=False):
    """Unitary DFT (or inverse DFT) on a bit-reversed-input network."""
    if not is_power_of_two(k):
        raise ShapeError(f"DFT size must be a power of two >= 2, got {k}")
    net = ButterflyNetwork(k, "bit_reversed")
    sgn = 1.0 if inverse else -1.0

    def block(s, j):
        w = np.exp(sgn * 2j * np.pi * j / (2 << s))
        return 1.0, w, 1.0, -w

    return _configure(net, block)


def configure_hadamard(k, ordering="natural"):
    """Normalized Sylvester-Hadamard transform H_k / sqrt(k)."""
    if not is_power_of_two(k):
        raise ShapeError(f"Hadamard size must be a power of two >= 2, got {k}")
    return _configure(ButterflyNetwork(k, ordering), lambda s, j: (1.0, 1.0, 1.0, -1.0))
