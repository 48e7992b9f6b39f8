"""Differentiable chip estimator: a white-box parametric model of the core.

Parameters (all trainable): coupling ratios and phase offsets of the P and B
units, and per attenuator two coupling ratios, a theta offset and a sign-phase
offset.  The modulator power floor comes from calibration and stays fixed.
At nominal values the estimator reproduces the ideal shared-unit math.
"""

from dataclasses import dataclass, field
import json

import numpy as np

from ..butterfly import ButterflyNetwork, configure_hadamard, transfer_matrix, transfer_tape
from ..butterfly.fit import Adam
from ..errors import DivergenceError, ShapeError
from ..kernels import bsp_backward, bsp_forward
from ..layers.blocked import _pad_rows
from ..numerics import autograd as ag
from .noise import detector_noise, drifted_sigma, encode_shots

PARAM_NAMES = ("p_kappa", "p_offset", "b_kappa", "b_offset", "att_kappa1", "att_kappa2",
               "att_theta_offset", "att_sign_offset")


class DpeModel:
    def __init__(self, k, params=None, er_eps=0.0, b_phases=None, p_phases=None, ordering="natural"):
        self.network = ButterflyNetwork(k, ordering)
        self.k = k
        net = self.network
        h = configure_hadamard(k, ordering).phases
        self.b_phases = np.array(h if b_phases is None else b_phases, dtype=np.float64)
        self.p_phases = np.array(h if p_phases is None else p_phases, dtype=np.float64)
        self.er_eps = float(er_eps)
        nominal = {
            "p_kappa": np.full((net.n_stages, k // 2), 0.5), "p_offset": np.zeros(net.n_phases),
            "b_kappa": np.full((net.n_stages, k // 2), 0.5), "b_offset": np.zeros(net.n_phases),
            "att_kappa1": np.full(k, 0.5), "att_kappa2": np.full(k, 0.5),
            "att_theta_offset": np.zeros(k), "att_sign_offset": np.zeros(k),
        }
        if params is not None:
            for key, v in params.items():
                v = np.array(v, dtype=np.float64)
                if v.shape != nominal[key].shape:
                    raise ShapeError(f"DPE parameter {key} must have shape {nominal[key].shape}")
                nominal[key] = v
        self.params = nominal

    @classmethod
    def from_chip(cls, chip, er_eps=None, b_phases=None, p_phases=None):
        """The true frozen parameters of a time-multiplexed chip (oracle reference)."""
        hw = chip.hardware
        params = {key: (np.array(hw[key][0]) if key.startswith(("p_", "b_")) else np.array(hw[key]).reshape(-1))
                  for key in PARAM_NAMES}
        if er_eps is None:
            er_eps = 0.0 if np.isinf(chip.variation.er_db) else 10.0 ** (-chip.variation.er_db / 10.0)
        return cls(chip.k, params, er_eps, b_phases, p_phases, chip.network.ordering)

    @property
    def n_params(self):
        return int(sum(v.size for v in self.params.values()))

    def copy(self):
        return DpeModel(self.k, {k_: v.copy() for k_, v in self.params.items()}, self.er_eps,
                        self.b_phases, self.p_phases, self.network.ordering)

    def to_dict(self):
        return {"k": self.k, "ordering": self.network.ordering, "er_eps": self.er_eps,
                "b_phases": self.b_phases.tolist(), "p_phases": self.p_phases.tolist(),
                "params": {key: v.tolist() for key, v in self.params.items()}}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["k"]), d["params"], float(d["er_eps"]), d["b_phases"], d["p_phases"], d.get("ordering", "natural"))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    # numpy evaluation

    def unit(self, which, phases=None):
        ph = (self.b_phases if which == "b" else self.p_phases) if phases is None else phases
        return transfer_matrix(self.network, ph, np.clip(self.params[f"{which}_kappa"], 0, 1),
                               self.params[f"{which}_offset"])

    def attenuator(self, theta, sign_phase):
        p = self.params
        a1, b1 = np.sqrt(1 - np.clip(p["att_kappa1"], 0, 1)), np.sqrt(np.clip(p["att_kappa1"], 0, 1))
        a2, b2 = np.sqrt(1 - np.clip(p["att_kappa2"], 0, 1)), np.sqrt(np.clip(p["att_kappa2"], 0, 1))
        half = 0.5 * (theta + p["att_theta_offset"])
        t = a1 * b2 * np.exp(1j * half) + a2 * b1 * np.exp(-1j * half)
        return t * np.exp(1j * (sign_phase + p["att_sign_offset"]))

    def amplitude(self, x):
        return np.sqrt(x * x * (1.0 - self.er_eps) + self.er_eps)

    def predict(self, x, theta, sign_phase):
        """Detected outputs [N, k] for inputs [N, k] and attenuator commands [N, k]."""
        B, P = self.unit("b"), self.unit("p")
        kap = self.amplitude(np.asarray(x)) @ P.T
        z = self.attenuator(np.asarray(theta), np.asarray(sign_phase)) * kap
        return (z @ B.T).real

    # tape evaluation (for fitting)

    def _tape_predict(self, t, X, TH, SG):
        net, k = self.network, self.k
        br, bi = transfer_tape(net, ag.add(t["b_offset"], self.b_phases), ag.reshape(t["b_kappa"], (1,) + t["b_kappa"].shape))
        pr, pi = transfer_tape(net, ag.add(t["p_offset"], self.p_phases), ag.reshape(t["p_kappa"], (1,) + t["p_kappa"].shape))
        br, bi, pr, pi = (ag.reshape(m, (k, k)) for m in (br, bi, pr, pi))
        A = ag.as_tensor(self.amplitude(X))
        kr = ag.matmul(A, ag.transpose(pr))
        ki = ag.matmul(A, ag.transpose(pi))
        k1, k2 = t["att_kappa1"], t["att_kappa2"]
        a1, b1 = ag.sqrt(ag.sub(1.0, k1)), ag.sqrt(k1)
        a2, b2 = ag.sqrt(ag.sub(1.0, k2)), ag.sqrt(k2)
        half = ag.mul(ag.add(TH, t["att_theta_offset"]), 0.5)
        cr = ag.mul(ag.add(ag.mul(a1, b2), ag.mul(a2, b1)), ag.cos(half))
        ci = ag.mul(ag.sub(ag.mul(a1, b2), ag.mul(a2, b1)), ag.sin(half))
        sph = ag.add(SG, t["att_sign_offset"])
        tr, ti = ag.cmul((cr, ci), ag.expi(sph))
        zr, zi = ag.cmul((tr, ti), (kr, ki))
        return ag.sub(ag.matmul(zr, ag.transpose(br)), ag.matmul(zi, ag.transpose(bi)))


def _stack(samples):
    X = np.stack([s.x for s in samples])
    Y = np.stack([s.y for s in samples])
    TH = np.stack([s.theta for s in samples])
    SG = np.stack([s.sign_phase for s in samples])
    return X, Y, TH, SG


@dataclass
class DpeFitReport:
    train_rmse: float
    holdout_rmse: float
    trace: list = field(default_factory=list)
    epochs: int = 0


def rmse(model, samples):
    X, Y, TH, SG = _stack(samples)
    return float(np.sqrt(np.mean((model.predict(X, TH, SG) - Y) ** 2)))


def fit_dpe(samples, init, epochs=400, lr=0.01, holdout=0.2, seed=0, patience=10, tol=1e-24):
    """Full-batch Adam on the mean squared prediction error.

    Returns (model, report).  Raises DivergenceError if the loss rises for
    ``patience`` consecutive epochs.  Stops early once the MSE is below ``tol``
    (the default sits at rounding level, where Adam would only amplify noise).
    """
    if len(samples) == 0:
        raise ShapeError("no measurements to fit")
    if len(samples) < 10 * init.n_params:
        raise ShapeError(f"need at least 10x more measurements than parameters "
                         f"({10 * init.n_params}), got {len(samples)}")
    model = init.copy()
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    n_hold = int(round(holdout * len(samples))) if len(samples) > 1 else 0
    hold = [samples[i] for i in order[:n_hold]]
    fit_set = [samples[i] for i in order[n_hold:]]
    X, Y, TH, SG = _stack(fit_set)
    opts = {key: Adam(v.shape, lr, eps=1e-8) for key, v in model.params.items()}
    trace = []
    rising = 0
    for ep in range(epochs):
        t = {key: ag.Tensor.param(v) for key, v in model.params.items()}
        pred = model._tape_predict(t, X, TH, SG)
        loss = ag.mean(ag.square(ag.sub(pred, Y)))
        lv = float(loss.value)
        if not np.isfinite(lv):
            raise DivergenceError("DPE loss became non-finite", trace)
        if trace and lv > trace[-1]:
            rising += 1
            if rising >= patience:
                raise DivergenceError(f"DPE loss increased for {patience} consecutive epochs", trace + [lv])
        else:
            rising = 0
        trace.append(lv)
        if lv <= tol:
            break
        grads = ag.backward(loss)
        step = lr * 0.5 * (1 + np.cos(np.pi * ep / epochs))
        for key in model.params:
            g = grads.get(t[key])
            if g is None:
                continue
            upd = model.params[key] - opts[key].step(g, step)
            if "kappa" in key:
                upd = np.clip(upd, 1e-6, 1 - 1e-6)
            model.params[key] = upd
    rep = DpeFitReport(rmse(model, fit_set), rmse(model, hold) if hold else float("nan"), trace, len(trace))
    return model, rep


def bsp_complex_op(layer, x, sr, si, B, P, delta=None):
    """Tape op: Re(B diag(sigma) P x) per block with complex B, P, sigma=(sr, si)."""
    x, sr, si = ag.as_tensor(x), ag.as_tensor(sr), ag.as_tensor(si)
    xp = _pad_rows(x.value, layer.pad.n_pad)
    Br, Bi, Pr, Pi = B.real, B.imag, P.real, P.imag
    s_r = sr.value[None]
    s_i = si.value[None]
    if delta is not None:
        s_r = s_r + delta.real
        s_i = s_i + delta.imag
    y = bsp_forward(xp, Br, Bi, Pr, Pi, s_r, s_i)[:layer.m]

    def vjp(g):
        dx, dsr, dsi = bsp_backward(_pad_rows(g, layer.pad.m_pad), xp, Br, Bi, Pr, Pi, s_r, s_i)
        return dx[:layer.n], dsr.sum(axis=0), dsi.sum(axis=0)

    return ag.make_node(y, (x, sr, si), "blocked_linear_complex", vjp)


class DpeExecutor:
    """Training forward through the estimated chip.

    sigma -> calibrated command -> estimated attenuator response (value exact,
    gradient through sigma times the detached unit phasor); inputs go through
    the estimated modulator law; B and P are the estimated varied units.
    """

    def __init__(self, dpe, noise=None, rng=None, calibration=None, compensate_sign=True):
        self.dpe = dpe
        self.noise = noise
        self.rng = np.random.default_rng(0) if rng is None else rng
        self.calibration = calibration
        self.compensate_sign = compensate_sign
        self.B = dpe.unit("b")
        self.P = dpe.unit("p")

    def commands(self, sigma):
        mag = np.abs(sigma)
        if self.calibration is not None:
            theta = self.calibration.theta_for(mag)
        else:
            theta = 2.0 * np.arccos(np.clip(mag, 0.0, 1.0))
        sign = np.where(sigma < 0, np.pi, 0.0)
        if self.compensate_sign:
            sign = sign - self.dpe.params["att_sign_offset"]
        return theta, sign

    def linear(self, index, layer, cols, n_samples, w):
        if layer.k != self.dpe.k:
            raise ShapeError("layer block size does not match the estimated core")
        sigma = layer.sigma_tensor(w)
        s = sigma.value
        theta, sign = self.commands(s)
        t = self.dpe.attenuator(theta, sign) * layer.mask[:, :, None]
        denom = np.where(s == 0, 1.0, s)
        unit = np.where(s == 0, 1.0 + 0j, t / denom)
        unit = unit / np.maximum(np.abs(unit), 1e-12)
        sr = ag.straight_through(ag.mul(sigma, unit.real), t.real)
        si = ag.straight_through(ag.mul(sigma, unit.imag), t.imag)
        nz = self.noise
        eps = self.dpe.er_eps
        amp = (lambda v: ag.sqrt(ag.add(ag.mul(ag.square(v), 1.0 - eps), eps))) if eps > 0 else None
        a, scales = encode_shots(cols, layer.k, nz.input_sigma if nz is not None else 0.0, self.rng, amp)
        delta = None
        if nz is not None and nz.phase_drift_sigma > 0:
            drift = self.rng.normal(0.0, nz.phase_drift_sigma, (n_samples,) + s.shape)
            delta = (self.dpe.attenuator(theta + drift, sign) - self.dpe.attenuator(theta, sign))
            delta = delta * layer.mask[None, :, :, None]
        y = bsp_complex_op(layer, a, sr, si, self.B, self.P, delta)
        return detector_noise(y, scales, nz.detector_sigma if nz is not None else 0.0, self.rng)
