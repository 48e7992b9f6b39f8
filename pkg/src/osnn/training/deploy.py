"""Mapping trained layers onto a chip and on-chip evaluation."""

import numpy as np

from ..errors import CalibrationError, ShapeError
from ..numerics import autograd as ag
from ..photonics.chip import LayerProgram, simulate_chip
from ..photonics.devices import magnitude_to_theta
from .noise import shot_scale


def _unit_phases(layer):
    if layer.b_config is None:
        raise ShapeError("identity-transform layers have no butterfly program")
    return np.array(layer.b_config.phases), np.array(layer.p_config.phases)


def naive_program(layer):
    """Ideal-law mapping: theta = 2 arccos|sigma|, sign phase 0 / pi, nominal unit phases."""
    s = layer.sigma()
    b, p = _unit_phases(layer)
    return LayerProgram(layer.m, layer.n, b, p, magnitude_to_theta(s), np.where(s < 0, np.pi, 0.0))


def calibrated_program(layer, calibration, sign_offset=None, b_phases=None, p_phases=None):
    """Map through the calibrated inverse curves; optionally pre-compensate sign phases."""
    if calibration is None:
        raise CalibrationError("chip has not been calibrated")
    s = layer.sigma()
    b, p = _unit_phases(layer)
    b = b if b_phases is None else np.asarray(b_phases)
    p = p if p_phases is None else np.asarray(p_phases)
    n_att = len(calibration.curves)
    mag = np.abs(s)
    if n_att == layer.k:
        theta = calibration.theta_for(mag)
    elif n_att == mag.size:
        theta = calibration.theta_for(mag.reshape(-1)).reshape(mag.shape)
    else:
        raise CalibrationError("calibration table does not match the chip layout")
    sign = np.where(s < 0, np.pi, 0.0)
    if sign_offset is not None:
        sign = sign - sign_offset
    return LayerProgram(layer.m, layer.n, b, p, theta, sign)


class ChipExecutor:
    """Runs each blocked layer on the chip, one shot per k-chunk of input (no gradients)."""

    def __init__(self, chip, programs, calibration=None, rng=None, predistort=False):
        self.chip = chip
        self.programs = programs
        self.calibration = calibration
        self.rng = rng
        self.predistort = predistort

    def linear(self, index, layer, cols, n_samples, w):
        x = ag.as_tensor(cols).value
        scale = shot_scale(x, layer.k)
        full = np.repeat(np.where(scale > 0, scale, 1.0), layer.k, axis=0)[:x.shape[0]]
        xn = np.clip(x / full, 0.0, 1.0)
        if self.predistort and self.calibration is not None:
            xn = self.calibration.predistort(xn)
        y = simulate_chip(self.chip, xn, "coherent", self.rng, n_samples=n_samples, program=self.programs[index],
                          shot_scale=scale)
        return ag.Tensor.const(y)


def evaluate_on_chip(model, chip, data, calibration=None, mapping="calibrated", rng_seed=0, batch_size=250,
                     sign_offset=None, unit_phases=None, predistort=None, return_predictions=False):
    """Accuracy of ``model`` deployed on ``chip``.

    mapping="naive" ignores calibration (ideal device law); "calibrated" needs
    a calibration table and uses its inverse curves and input predistortion.
    """
    if mapping not in ("naive", "calibrated"):
        raise ShapeError(f"unknown mapping {mapping!r}")
    if mapping == "calibrated":
        if calibration is None:
            raise CalibrationError("chip has not been calibrated; run calibrate_devices first")
        programs = []
        for i, l in enumerate(model.layers):
            bp = unit_phases[i] if unit_phases is not None else (None, None)
            programs.append(calibrated_program(l, calibration, sign_offset, bp[0], bp[1]))
        pre = True if predistort is None else predistort
    else:
        programs = [naive_program(l) for l in model.layers]
        pre = False
    ex = ChipExecutor(chip, programs, calibration, np.random.default_rng(rng_seed), pre)
    logits = model.predict(data.images, ex, batch_size)
    pred = logits.argmax(axis=1)
    acc = float(np.mean(pred == data.labels))
    return (acc, pred) if return_predictions else acc
