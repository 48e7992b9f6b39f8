"""Per-device calibration of the attenuators and input modulators."""

from dataclasses import dataclass

import numpy as np

from ..errors import CalibrationError
from ..photonics.devices import attenuator_transmission, modulator_amplitude


def probe_attenuator_power(chip, index, theta, rng=None):
    """|t|^2 of one attenuator (monitor-port probe), with detector noise if active."""
    hw = chip.hardware
    p = np.abs(attenuator_transmission(theta, 0.0, hw["att_kappa1"].reshape(-1)[index],
                                       hw["att_kappa2"].reshape(-1)[index],
                                       hw["att_theta_offset"].reshape(-1)[index], 0.0)) ** 2
    if chip.noise.detector_sigma > 0 and rng is not None:
        p = p + rng.normal(0.0, chip.noise.detector_sigma, np.shape(p))
    return p


def probe_modulator_power(chip, x):
    return modulator_amplitude(x, chip.variation.er_db) ** 2


@dataclass(frozen=True)
class AttenuatorCurve:
    """|t|^2 = alpha + beta cos(theta + phi0)."""
    alpha: float
    beta: float
    phi0: float
    residual_rms: float

    def power(self, theta):
        return self.alpha + self.beta * np.cos(np.asarray(theta) + self.phi0)

    def magnitude(self, theta):
        return np.sqrt(np.clip(self.power(theta), 0.0, None))

    def theta_for(self, mag):
        """Command reaching |t| = mag (clamped to the achievable range), in [0, pi] before the offset."""
        c = (np.asarray(mag, dtype=np.float64) ** 2 - self.alpha) / self.beta
        return np.arccos(np.clip(c, -1.0, 1.0)) - self.phi0


@dataclass(frozen=True)
class CalibrationTable:
    curves: tuple              # one AttenuatorCurve per attenuator (flat order)
    er_eps: float              # fitted modulator power floor (0 for ideal)
    residual_rms: float

    def theta_for(self, mag):
        """mag [..., n_att] -> commands; the last axis indexes attenuators (broadcast over blocks)."""
        mag = np.asarray(mag, dtype=np.float64)
        n = len(self.curves)
        flat = mag.reshape(-1, n) if mag.shape[-1] == n else None
        if flat is None:
            raise CalibrationError("magnitude array does not match the calibrated attenuators")
        out = np.stack([self.curves[d].theta_for(flat[:, d]) for d in range(n)], axis=1)
        return out.reshape(mag.shape)

    def predistort(self, x):
        """Amplitude command so the modulator emits x despite its floor (x^2 >= eps)."""
        x = np.asarray(x, dtype=np.float64)
        if self.er_eps == 0:
            return x
        return np.sqrt(np.clip((x * x - self.er_eps) / (1.0 - self.er_eps), 0.0, 1.0))

    def to_dict(self):
        return {"er_eps": self.er_eps, "residual_rms": self.residual_rms,
                "curves": [c.__dict__ for c in self.curves]}


def fit_curve(theta, power):
    A = np.stack([np.ones_like(theta), np.cos(theta), np.sin(theta)], axis=1)
    coef, *_ = np.linalg.lstsq(A, power, rcond=None)
    c0, c1, c2 = coef
    beta = float(np.hypot(c1, c2))
    phi0 = float(np.arctan2(-c2, c1))
    resid = power - A @ coef
    return AttenuatorCurve(float(c0), beta, phi0, float(np.sqrt(np.mean(resid ** 2))))


def calibrate_devices(chip, sweep_points=32, rng=None):
    """Sweep every attenuator over [0, 2 pi) and the modulators over [0, 1]; fit and invert."""
    if sweep_points < 8:
        raise CalibrationError(f"need at least 8 sweep points per device, got {sweep_points}")
    theta = np.linspace(0.0, 2 * np.pi, sweep_points, endpoint=False)
    n_att = chip.hardware["att_kappa1"].size
    curves = []
    for d in range(n_att):
        c = fit_curve(theta, probe_attenuator_power(chip, d, theta, rng))
        if not c.beta > 0:
            raise CalibrationError(f"attenuator {d}: fitted curve is flat or inverted (beta={c.beta:.3g})")
        curves.append(c)
    xs = np.linspace(0.0, 1.0, sweep_points)
    pw = probe_modulator_power(chip, xs)
    # power = x^2 (1 - eps) + eps  ->  linear in x^2
    A = np.stack([np.ones_like(xs), xs * xs], axis=1)
    (eps, slope), *_ = np.linalg.lstsq(A, pw, rcond=None)
    eps = float(np.clip(eps, 0.0, 0.5))
    if eps < 1e-15:
        eps = 0.0
    rms = float(np.sqrt(np.mean([c.residual_rms ** 2 for c in curves])))
    return CalibrationTable(tuple(curves), eps, rms)
