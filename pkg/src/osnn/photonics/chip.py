"""A "golden" noisy chip: frozen process variations plus per-call dynamic noise.

Two layouts are modeled:

* ``time_multiplexed`` (default): one k x k core (one P unit, one column of k
  attenuators, one B unit) that evaluates every block of every layer in turn,
  so its variations are shared by all blocks.
* ``spatial``: n* P units, m* B units and m* x n* x k attenuators for one layer.

The detected output of a programmed layer is Re(W_var a(x)) (coherent
detection against a reference), or sqrt(|W_var|^2 a(x)^2) for multi-wavelength
(incoherent) inputs, where a(x) is the modulator amplitude with finite ER.
"""

from dataclasses import dataclass, replace
import json

import numpy as np

from ..butterfly import ButterflyNetwork, transfer_matrix
from ..errors import DeviceError, ShapeError
from ..kernels import bsp_forward
from .devices import attenuator_transmission, modulator_amplitude
from .variation import NoiseSpec, VariationModel

LAYOUTS = ("time_multiplexed", "spatial")
MODES = ("coherent", "multi_wavelength")


@dataclass(frozen=True)
class LayerProgram:
    """Control settings for one layer: unit phases and attenuator commands."""
    m: int
    n: int
    b_phases: np.ndarray          # [n_phases] (shared) or [m*, n_phases] for spatial
    p_phases: np.ndarray
    theta: np.ndarray             # [m*, n*, k]
    sign_phase: np.ndarray        # [m*, n*, k]

    @property
    def m_blocks(self):
        return self.theta.shape[0]

    @property
    def n_blocks(self):
        return self.theta.shape[1]

    def to_dict(self):
        return {"m": self.m, "n": self.n, "b_phases": np.asarray(self.b_phases).tolist(),
                "p_phases": np.asarray(self.p_phases).tolist(), "theta": self.theta.tolist(),
                "sign_phase": self.sign_phase.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["m"]), int(d["n"]), np.array(d["b_phases"]), np.array(d["p_phases"]),
                   np.array(d["theta"]), np.array(d["sign_phase"]))


def _freeze(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


class ChipInstance:
    """Immutable chip: hardware sample + noise spec (+ optional programmed layer)."""

    def __init__(self, k, variation=VariationModel(), noise=NoiseSpec(), layout="time_multiplexed",
                 m_blocks=1, n_blocks=1, hardware=None, program=None, ordering="natural"):
        if layout not in LAYOUTS:
            raise DeviceError(f"unknown chip layout {layout!r}")
        self.network = ButterflyNetwork(k, ordering)
        self.k = k
        self.variation = variation
        self.noise = noise
        self.layout = layout
        if layout == "time_multiplexed":
            m_blocks = n_blocks = 1
        self.m_blocks, self.n_blocks = m_blocks, n_blocks
        self.hardware = {key: _freeze(v) for key, v in
                         (hardware if hardware is not None else self._sample()).items()}
        self.program = program
        if program is not None:
            self._check_program(program)

    # construction helpers

    def _sample(self):
        v, net, k = self.variation, self.network, self.k
        rng = np.random.default_rng(v.seed)
        nP = self.n_blocks
        nB = self.m_blocks
        att = (self.m_blocks, self.n_blocks, k)

        def kap(shape):
            return np.clip(0.5 + rng.normal(0.0, v.kappa_std, shape), 0.0, 1.0)

        def off(shape):
            return rng.normal(0.0, v.phase_offset_std, shape)

        return {
            "p_kappa": kap((nP, net.n_stages, k // 2)), "p_offset": off((nP, net.n_phases)),
            "b_kappa": kap((nB, net.n_stages, k // 2)), "b_offset": off((nB, net.n_phases)),
            "att_kappa1": kap(att), "att_kappa2": kap(att),
            "att_theta_offset": off(att), "att_sign_offset": off(att),
        }

    def _check_program(self, prog):
        k = self.k
        if prog.theta.shape != prog.sign_phase.shape or prog.theta.ndim != 3 or prog.theta.shape[2] != k:
            raise ShapeError("attenuator commands must be [m*, n*, k]")
        if prog.m_blocks != -(-prog.m // k) or prog.n_blocks != -(-prog.n // k):
            raise ShapeError("attenuator grid does not match the layer dims")
        if self.layout == "spatial" and (prog.m_blocks, prog.n_blocks) != (self.m_blocks, self.n_blocks):
            raise ShapeError("program does not fit this spatial chip")

    def with_layer(self, program):
        return ChipInstance(self.k, self.variation, self.noise, self.layout, self.m_blocks, self.n_blocks,
                            dict(self.hardware), program, self.network.ordering)

    def with_noise(self, noise):
        return ChipInstance(self.k, self.variation, noise, self.layout, self.m_blocks, self.n_blocks,
                            dict(self.hardware), self.program, self.network.ordering)

    @property
    def is_ideal(self):
        v = self.variation
        return v.kappa_std == 0 and v.phase_offset_std == 0 and np.isinf(v.er_db)

    # transfer matrices

    def unit_matrices(self, which, phases):
        """Varied transfer matrices of the P or B units for given phase commands: [U, k, k]."""
        kap = self.hardware[f"{which}_kappa"]
        off = self.hardware[f"{which}_offset"]
        phases = np.asarray(phases, dtype=np.float64)
        out = []
        for u in range(kap.shape[0]):
            ph = phases if phases.ndim == 1 else phases[u]
            out.append(transfer_matrix(self.network, ph, kap[u], off[u]))
        return np.stack(out)

    def attenuators(self, theta, sign_phase, drift=None):
        """Complex sigma [.., m*, n*, k]; drift (optional) is added to theta."""
        hw = self.hardware
        th = theta if drift is None else theta + drift
        # time-multiplexed: the same k attenuators serve every block
        return attenuator_transmission(th, sign_phase, hw["att_kappa1"], hw["att_kappa2"],
                                       hw["att_theta_offset"], hw["att_sign_offset"])

    def effective_matrix(self, program=None, drift=None):
        """Dense varied W (m_pad x n_pad, complex) for a programmed layer."""
        prog = program or self.program
        if prog is None:
            raise DeviceError("chip has no programmed layer")
        k = self.k
        B = self.unit_matrices("b", prog.b_phases)
        P = self.unit_matrices("p", prog.p_phases)
        sig = self.attenuators(prog.theta, prog.sign_phase, drift)
        W = np.zeros((prog.m_blocks * k, prog.n_blocks * k), dtype=complex)
        for i in range(prog.m_blocks):
            for j in range(prog.n_blocks):
                Bu = B[i if B.shape[0] > 1 else 0]
                Pu = P[j if P.shape[0] > 1 else 0]
                W[i * k:(i + 1) * k, j * k:(j + 1) * k] = (Bu * sig[i, j][None, :]) @ Pu
        return W

    # serialization

    def to_dict(self):
        return {"format": "osnn-chip", "k": self.k, "layout": self.layout, "ordering": self.network.ordering,
                "m_blocks": self.m_blocks, "n_blocks": self.n_blocks,
                "variation": self.variation.to_dict(), "noise": self.noise.to_dict(),
                "hardware": {key: v.tolist() for key, v in self.hardware.items()},
                "program": None if self.program is None else self.program.to_dict()}

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "osnn-chip":
            raise DeviceError("not a chip description")
        return cls(int(d["k"]), VariationModel.from_dict(d["variation"]), NoiseSpec(**d["noise"]), d["layout"],
                   int(d["m_blocks"]), int(d["n_blocks"]), {key: np.array(v) for key, v in d["hardware"].items()},
                   None if d.get("program") is None else LayerProgram.from_dict(d["program"]), d.get("ordering", "natural"))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def __repr__(self):
        return f"ChipInstance(k={self.k}, layout={self.layout!r}, variation={self.variation})"


def _pad_rows(x, rows):
    if x.shape[0] == rows:
        return x
    out = np.zeros((rows, x.shape[1]))
    out[:x.shape[0]] = x
    return out


def simulate_chip(chip, x, mode="coherent", rng=None, n_samples=None, program=None, shot_scale=None):
    """Detected outputs [m] or [m, C] for encoded inputs x in [0, 1].

    Columns of a 2-D ``x`` are separate inferences grouped into ``n_samples``
    consecutive groups (default: one per column) that share a phase-drift draw.
    ``shot_scale`` [n_blocks, C] runs each k-chunk as its own shot and sums
    the detected outputs rescaled by it (coherent detection only).
    """
    prog = program or chip.program
    if prog is None:
        raise DeviceError("chip has no programmed layer")
    if program is not None:
        chip._check_program(program)
    if mode not in MODES:
        raise DeviceError(f"unknown detection mode {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    vec = x.ndim == 1
    X = x[:, None] if vec else x
    if X.shape[0] != prog.n:
        raise ShapeError(f"input length {X.shape[0]} does not match layer width {prog.n}")
    if np.any(X < -1e-12) or np.any(X > 1 + 1e-12):
        raise DeviceError("encoded amplitudes must lie in [0, 1]")
    C = X.shape[1]
    S = C if n_samples is None else n_samples
    if C % S:
        raise ShapeError("columns must split evenly into samples")
    nz = chip.noise
    if (not nz.is_zero) and rng is None:
        raise DeviceError("dynamic noise is active: pass an rng")
    k = chip.k
    if nz.input_sigma > 0:
        X = np.clip(X + rng.normal(0.0, nz.input_sigma, X.shape), 0.0, 1.0)
    A = _pad_rows(modulator_amplitude(X, chip.variation.er_db), prog.n_blocks * k)
    if prog.n % k and not np.isinf(chip.variation.er_db):
        A[prog.n:] = 0.0   # padded inputs have no modulator
    det = nz.detector_sigma
    if shot_scale is not None:
        if mode != "coherent":
            raise DeviceError("per-shot accumulation needs coherent detection")
        shot_scale = np.asarray(shot_scale, dtype=np.float64)
        if shot_scale.shape != (prog.n_blocks, C):
            raise ShapeError(f"shot_scale must be [{prog.n_blocks}, {C}], got {shot_scale.shape}")
        A = A * np.repeat(shot_scale, k, axis=0)
        det = det * np.sqrt((shot_scale ** 2).sum(axis=0))
    drift = None
    if nz.phase_drift_sigma > 0:
        drift = rng.normal(0.0, nz.phase_drift_sigma, (S,) + prog.theta.shape)
    if mode == "coherent" and chip.layout == "time_multiplexed" and not nz.drift_all_phases:
        B = chip.unit_matrices("b", prog.b_phases)[0]
        P = chip.unit_matrices("p", prog.p_phases)[0]
        sig = chip.attenuators(prog.theta, prog.sign_phase, drift)
        if sig.ndim == 3:
            sig = sig[None]
        y = bsp_forward(A, B.real, B.imag, P.real, P.imag, np.ascontiguousarray(sig.real),
                        np.ascontiguousarray(sig.imag))
    else:
        y = _dense_simulate(chip, prog, A, mode, drift, S, rng)
    y = y[:prog.m]
    if nz.detector_sigma > 0:
        y = y + rng.normal(0.0, 1.0, y.shape) * det
    return y[:, 0] if vec else y


def _dense_simulate(chip, prog, A, mode, drift, S, rng):
    C = A.shape[1]
    cols = C // S
    out = np.empty((prog.m_blocks * chip.k, C))
    groups = [None] if (drift is None and not chip.noise.drift_all_phases) else range(S)
    for s in groups:
        sl = slice(None) if s is None else slice(s * cols, (s + 1) * cols)
        p = prog
        if chip.noise.drift_all_phases and chip.noise.phase_drift_sigma > 0:
            sd = chip.noise.phase_drift_sigma
            p = replace(prog, b_phases=prog.b_phases + rng.normal(0, sd, np.shape(prog.b_phases)),
                        p_phases=prog.p_phases + rng.normal(0, sd, np.shape(prog.p_phases)))
        W = chip.effective_matrix(p, None if drift is None else drift[s])
        if mode == "coherent":
            out[:, sl] = (W @ A[:, sl]).real
        else:
            out[:, sl] = np.sqrt((np.abs(W) ** 2) @ (A[:, sl] ** 2))
    return out


def multi_wavelength_effective(chip, program=None):
    """Amplitude matrix |W_var| seen by incoherent (multi-wavelength) inputs; entrywise >= 0."""
    return np.abs(chip.effective_matrix(program))


@dataclass(frozen=True)
class Measurement:
    """One probe of the core: inputs, attenuator commands and detected outputs."""
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    sign_phase: np.ndarray


INPUT_DISTRIBUTIONS = ("uniform", "sparse")


def sample_measurements(chip, n_samples, input_distribution="uniform", rng_seed=0, b_phases=None, p_phases=None):
    """Probe a time-multiplexed core with random inputs and random attenuator settings.

    The B/P units keep the given phase commands (those used for deployment).
    """
    if n_samples < 1:
        raise ShapeError("n_samples must be positive")
    if chip.layout != "time_multiplexed":
        raise DeviceError("measurements are defined for the time-multiplexed core")
    if input_distribution not in INPUT_DISTRIBUTIONS:
        raise ShapeError(f"unknown input distribution {input_distribution!r}")
    from ..butterfly import configure_hadamard
    k = chip.k
    h = configure_hadamard(k, chip.network.ordering).phases
    b_phases = h if b_phases is None else np.asarray(b_phases)
    p_phases = h if p_phases is None else np.asarray(p_phases)
    rng = np.random.default_rng(rng_seed)
    X = rng.uniform(0.0, 1.0, (k, n_samples))
    if input_distribution == "sparse":
        X *= rng.uniform(size=X.shape) < 0.5
    theta = rng.uniform(0.0, np.pi, (n_samples, k))
    sign = np.pi * rng.integers(0, 2, (n_samples, k))
    out = []
    for t in range(n_samples):
        prog = LayerProgram(k, k, b_phases, p_phases, theta[t][None, None], sign[t][None, None])
        y = simulate_chip(chip, X[:, t], "coherent", rng, program=prog)
        out.append(Measurement(X[:, t].copy(), y, theta[t].copy(), sign[t].copy()))
    return out
