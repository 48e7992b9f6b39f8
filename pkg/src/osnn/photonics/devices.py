"""Transfer-matrix models of the optical primitives."""

from dataclasses import dataclass

import numpy as np

from ..errors import DeviceError

TWO_PI = 2.0 * np.pi


def coupler_matrix(kappa):
    if not 0.0 <= kappa <= 1.0:
        raise DeviceError(f"coupling ratio {kappa} outside [0, 1]")
    t = np.sqrt(1.0 - kappa)
    r = np.sqrt(kappa)
    return np.array([[t, 1j * r], [1j * r, t]])


@dataclass(frozen=True)
class Coupler:
    kappa: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.kappa <= 1.0:
            raise DeviceError(f"coupling ratio {self.kappa} outside [0, 1]")

    def matrix(self):
        return coupler_matrix(self.kappa)


@dataclass(frozen=True)
class PhaseShifter:
    phi: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.phi):
            raise DeviceError("phase must be finite")
        object.__setattr__(self, "phi", float(np.mod(self.phi, TWO_PI)))

    def factor(self):
        return np.exp(1j * self.phi)


@dataclass(frozen=True)
class Crossing:
    """Waveguide crossing; ideal by default (a pure swap)."""
    insertion_loss_db: float = 0.0
    crosstalk_db: float = -np.inf

    def __post_init__(self):
        if self.insertion_loss_db < 0:
            raise DeviceError("insertion loss must be >= 0 dB")
        if self.crosstalk_db > -30:
            raise DeviceError("crosstalk must be <= -30 dB")

    def matrix(self):
        a = 10.0 ** (-self.insertion_loss_db / 20.0)
        c = 0.0 if np.isneginf(self.crosstalk_db) else 10.0 ** (self.crosstalk_db / 20.0)
        through = a * np.sqrt(1.0 - c * c)
        leak = 1j * a * c
        return np.array([[leak, through], [through, leak]])


def attenuator_transmission(theta, sign_phase=0.0, kappa1=0.5, kappa2=0.5,
                            theta_offset=0.0, sign_offset=0.0):
    """Cross-port amplitude of a push-pull MZI attenuator (vectorized).

    t = (a1 b2 e^{i phi/2} + a2 b1 e^{-i phi/2}) e^{i (s + ds)},  phi = theta + dtheta,
    with a = sqrt(1 - kappa), b = sqrt(kappa).  Balanced couplers and no offsets
    give cos(theta/2) e^{i s}.
    """
    a1, b1 = np.sqrt(1.0 - kappa1), np.sqrt(kappa1)
    a2, b2 = np.sqrt(1.0 - kappa2), np.sqrt(kappa2)
    half = 0.5 * (np.asarray(theta) + theta_offset)
    t = a1 * b2 * np.exp(1j * half) + a2 * b1 * np.exp(-1j * half)
    return t * np.exp(1j * (np.asarray(sign_phase) + sign_offset))


@dataclass(frozen=True)
class MziAttenuator:
    theta: float = 0.0
    sign_phase: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.theta <= np.pi:
            raise DeviceError(f"attenuator phase {self.theta} outside [0, pi]")
        if not (np.isclose(self.sign_phase, 0.0) or np.isclose(self.sign_phase, np.pi)):
            raise DeviceError("sign phase must be 0 or pi")

    def transmission(self):
        return complex(attenuator_transmission(self.theta, self.sign_phase))

    def matrix(self):
        # full 2x2 of the interferometer: coupler . arm phases . coupler, with the
        # constant i of the cross port removed so entry [1, 0] equals transmission()
        arms = np.diag([np.exp(0.5j * self.theta), np.exp(-0.5j * self.theta)])
        c = coupler_matrix(0.5)
        return -1j * np.exp(1j * self.sign_phase) * (c @ arms @ c)


def device_transfer(device):
    """2x2 matrix for couplers/crossings/attenuators-as-interferometers, scalar otherwise.

    The attenuator returns its scalar amplitude transmission (the Sigma element);
    use ``MziAttenuator.matrix`` for the full 2x2.
    """
    if isinstance(device, (Coupler, Crossing)):
        return device.matrix()
    if isinstance(device, PhaseShifter):
        return device.factor()
    if isinstance(device, MziAttenuator):
        return device.transmission()
    raise DeviceError(f"unknown device type {type(device).__name__}")


def magnitude_to_theta(mag):
    """Inverse of the ideal law |t| = cos(theta/2) on [0, pi]."""
    return 2.0 * np.arccos(np.clip(np.abs(mag), 0.0, 1.0))


def modulator_amplitude(x, er_db):
    """Encoded amplitude with finite extinction ratio: power floor eps = 10^(-ER/10)."""
    x = np.asarray(x, dtype=np.float64)
    if np.isinf(er_db):
        return x
    eps = 10.0 ** (-er_db / 10.0)
    return np.sqrt(x * x * (1.0 - eps) + eps)
