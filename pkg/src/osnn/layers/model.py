"""Sequential OSNN models built from blocked layers, plus checkpoint I/O."""

import hashlib
import json

import numpy as np

from ..errors import FormatError, ShapeError
from ..numerics import autograd as ag
from ..quant import QuantSpec
from .blocked import BlockedLinear, bsp_op, init_gain
from .conv import ConvSpec, adaptive_avg_pool, cols_to_maps, im2col_op


class IdealExecutor:
    """Noise-free shared-unit math; other executors override ``linear``."""

    def linear(self, index, layer, cols, n_samples, w):
        return bsp_op(layer, cols, layer.sigma_tensor(w))


class Sequential:
    """Stages: ("conv", layer, ConvSpec) | ("relu",) | ("pool", (h, w)) | ("flatten",) | ("linear", layer)."""

    def __init__(self, stages, input_shape):
        self.stages = stages
        self.input_shape = tuple(input_shape)

    @property
    def layers(self):
        return [s[1] for s in self.stages if s[0] in ("conv", "linear")]

    def n_trainable(self):
        return sum(l.n_trainable for l in self.layers)

    def n_units(self):
        return sum(l.mask.size for l in self.layers)

    def n_kept_units(self):
        return sum(int(l.mask.sum()) for l in self.layers)

    def params(self):
        """Fresh tape leaves: one latent tensor and one gain per layer."""
        return [(ag.Tensor.param(l.w), ag.Tensor.param(np.array(l.gain))) for l in self.layers]

    def forward(self, x, executor=None, params=None):
        """Logits Tensor [N, classes] for images x [N, *input_shape]."""
        executor = executor or IdealExecutor()
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"expected inputs [N, {self.input_shape}], got {x.shape}")
        if params is None:
            params = [(ag.Tensor.const(l.w), ag.Tensor.const(np.array(l.gain))) for l in self.layers]
        N = x.shape[0]
        h = ag.Tensor.const(x)
        li = 0
        for stage in self.stages:
            kind = stage[0]
            if kind == "conv":
                layer, spec = stage[1], stage[2]
                w, g = params[li]
                ho, wo = spec.output_hw(h.shape[2], h.shape[3])
                cols = im2col_op(h, spec)
                y = ag.mul(executor.linear(li, layer, cols, N, w), g)
                h = cols_to_maps(y, N, ho, wo)
                li += 1
            elif kind == "linear":
                layer = stage[1]
                w, g = params[li]
                y = ag.mul(executor.linear(li, layer, ag.transpose(h), N, w), g)
                h = ag.transpose(y)
                li += 1
            elif kind == "relu":
                h = ag.relu(h)
            elif kind == "pool":
                h = adaptive_avg_pool(h, stage[1])
            elif kind == "flatten":
                h = ag.reshape(h, (N, -1))
            else:
                raise ShapeError(f"unknown stage {kind!r}")
        return h

    def predict(self, x, executor=None, batch_size=500):
        out = []
        for i in range(0, len(x), batch_size):
            out.append(self.forward(x[i:i + batch_size], executor).value)
        return np.concatenate(out, axis=0)

    def copy(self):
        stages = []
        for s in self.stages:
            if s[0] in ("conv", "linear"):
                stages.append((s[0], s[1].copy()) + tuple(s[2:]))
            else:
                stages.append(s)
        return Sequential(stages, self.input_shape)

    def set_quant(self, quant):
        for l in self.layers:
            l.quant = quant

    # checkpoints

    def to_dict(self):
        stages = []
        for s in self.stages:
            if s[0] in ("conv", "linear"):
                l = s[1]
                bh, ph = l.unit_hashes()
                d = {"kind": s[0], "m": l.m, "n": l.n, "k": l.k, "transform": l.transform,
                     "b_config_hash": bh, "p_config_hash": ph, "gain": l.gain,
                     "quant_bits": None if l.quant is None else l.quant.bits,
                     "w": l.w.reshape(-1).tolist(), "mask": l.mask.astype(int).reshape(-1).tolist()}
                if s[0] == "conv":
                    sp = s[2]
                    d["conv"] = {"in_channels": sp.in_channels, "out_channels": sp.out_channels,
                                 "kernel": list(sp.kernel), "stride": sp.stride, "padding": sp.padding}
                stages.append(d)
            elif s[0] == "pool":
                stages.append({"kind": "pool", "size": list(s[1])})
            else:
                stages.append({"kind": s[0]})
        return {"format": "osnn-checkpoint", "version": 1, "input_shape": list(self.input_shape),
                "stages": stages}

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "osnn-checkpoint":
            raise FormatError("not an osnn checkpoint")
        stages = []
        for s in d["stages"]:
            kind = s["kind"]
            if kind in ("conv", "linear"):
                quant = None if s.get("quant_bits") is None else QuantSpec(bits=int(s["quant_bits"]))
                w = np.array(s["w"], dtype=np.float64)
                layer = BlockedLinear(s["m"], s["n"], s["k"], s["transform"], quant=quant, gain=s["gain"],
                                      w=w.reshape(-(-s["m"] // s["k"]), -(-s["n"] // s["k"]), s["k"]))
                if layer.unit_hashes() != (s["b_config_hash"], s["p_config_hash"]):
                    raise FormatError("checkpoint B/P configuration hash does not match this build")
                layer.mask = np.array(s["mask"], dtype=bool).reshape(layer.mask.shape)
                if kind == "conv":
                    c = s["conv"]
                    stages.append((kind, layer, ConvSpec(c["in_channels"], c["out_channels"], tuple(c["kernel"]),
                                                         c["stride"], c["padding"])))
                else:
                    stages.append((kind, layer))
            elif kind == "pool":
                stages.append(("pool", tuple(s["size"])))
            else:
                stages.append((kind,))
        return cls(stages, d["input_shape"])

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            try:
                d = json.load(f)
            except json.JSONDecodeError as e:
                raise FormatError(f"checkpoint is not valid JSON: {e.msg}", e.pos) from None
        return cls.from_dict(d)

    def state_hash(self):
        h = hashlib.sha256()
        for l in self.layers:
            h.update(l.w.tobytes())
            h.update(np.float64(l.gain).tobytes())
            h.update(l.mask.tobytes())
        return h.hexdigest()[:16]


def build_paper_model(k=4, transform="hadamard", quant=QuantSpec(bits=3), seed=0):
    """conv 1->16 (3x3, s2, p1) - relu - conv 16->16 (3x3, s1, p1) - relu - pool 5x5 - fc 400->10."""
    rng = np.random.default_rng(seed)
    c1 = ConvSpec(1, 16, (3, 3), stride=2, padding=1)
    c2 = ConvSpec(16, 16, (3, 3), stride=1, padding=1)
    l1 = BlockedLinear(16, c1.fan_in, k, transform, quant, init_gain(c1.fan_in, k), rng)
    l2 = BlockedLinear(16, c2.fan_in, k, transform, quant, init_gain(c2.fan_in, k), rng)
    l3 = BlockedLinear(10, 400, k, transform, quant, init_gain(400, k), rng)
    stages = [("conv", l1, c1), ("relu",), ("conv", l2, c2), ("relu",), ("pool", (5, 5)),
              ("flatten",), ("linear", l3)]
    return Sequential(stages, (1, 28, 28))
