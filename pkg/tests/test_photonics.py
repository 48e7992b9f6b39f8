import numpy as np
import pytest

from osnn.butterfly import configure_hadamard
from osnn.errors import DeviceError, ShapeError
from osnn.photonics import (
    ChipInstance, Coupler, Crossing, LayerProgram, MziAttenuator, NoiseSpec, PhaseShifter, VariationModel,
    attenuator_transmission, coupler_matrix, device_transfer, magnitude_to_theta, modulator_amplitude,
    multi_wavelength_effective, sample_measurements, simulate_chip,
)


def test_coupler_unitary_and_split():
    for kappa in (0.0, 0.3, 0.5, 1.0):
        C = coupler_matrix(kappa)
        assert np.allclose(C.conj().T @ C, np.eye(2))
        assert np.isclose(abs(C[1, 0]) ** 2, kappa)
    with pytest.raises(DeviceError):
        Coupler(1.2)


def test_phase_shifter_wraps():
    assert np.isclose(PhaseShifter(2 * np.pi + 0.5).phi, 0.5)
    assert np.isclose(device_transfer(PhaseShifter(np.pi)), -1)
    with pytest.raises(DeviceError):
        PhaseShifter(np.nan)


def test_crossing():
    assert np.allclose(Crossing().matrix(), [[0, 1], [1, 0]])
    lossy = Crossing(0.2, -40).matrix()
    assert np.sum(np.abs(lossy[:, 0]) ** 2) < 1
    with pytest.raises(DeviceError):
        Crossing(-1.0)
    with pytest.raises(DeviceError):
        Crossing(0.0, -10.0)


def test_attenuator_law():
    th = np.linspace(0, np.pi, 9)
    assert np.allclose(attenuator_transmission(th), np.cos(th / 2))
    assert np.allclose(attenuator_transmission(th, np.pi), -np.cos(th / 2))
    a = MziAttenuator(1.0, np.pi)
    M = a.matrix()
    assert np.allclose(M.conj().T @ M, np.eye(2))
    assert np.isclose(M[1, 0], a.transmission())
    assert np.allclose(magnitude_to_theta(np.cos(th / 2)), th)
    with pytest.raises(DeviceError):
        MziAttenuator(4.0)
    with pytest.raises(DeviceError):
        MziAttenuator(0.5, 1.0)


def test_unbalanced_attenuator_cannot_fully_extinguish():
    t = attenuator_transmission(np.pi, 0.0, 0.45, 0.55)
    assert abs(t) > 0.05


def test_modulator_extinction():
    assert np.allclose(modulator_amplitude([0, 0.5, 1], np.inf), [0, 0.5, 1])
    a = modulator_amplitude([0.0, 1.0], 20.0)
    assert np.isclose(a[0], 0.1) and np.isclose(a[1], 1.0)


def test_variation_validation():
    with pytest.raises(ValueError):
        VariationModel(kappa_std=-1)
    with pytest.raises(ValueError):
        VariationModel(er_db=0)
    v = VariationModel.ideal()
    assert VariationModel.from_dict(v.to_dict()) == v


def _program(rng, m, n, k):
    mb, nb = -(-m // k), -(-n // k)
    h = configure_hadamard(k).phases
    return LayerProgram(m, n, h, h, rng.uniform(0, np.pi, (mb, nb, k)), np.pi * rng.integers(0, 2, (mb, nb, k)))


def test_ideal_chip_equals_blocked_math(rng):
    k, m, n = 4, 10, 7
    chip = ChipInstance(k, VariationModel.ideal())
    prog = _program(rng, m, n, k)
    x = rng.uniform(0, 1, (n, 5))
    y = simulate_chip(chip, x, program=prog)
    from osnn.butterfly import ButterflyNetwork, transfer_matrix
    H = transfer_matrix(ButterflyNetwork(k), configure_hadamard(k))
    sig = np.cos(prog.theta / 2) * np.exp(1j * prog.sign_phase)
    W = np.block([[H @ np.diag(sig[i, j]) @ H for j in range(2)] for i in range(3)])
    xp = np.zeros((8, 5))
    xp[:n] = x
    assert np.allclose(y, (W @ xp).real[:m], atol=1e-12)


def test_time_multiplexed_matches_dense_path(rng):
    k = 4
    chip = ChipInstance(k, VariationModel(0.02, 0.05, 25.0, 3))
    prog = _program(rng, 8, 8, k)
    x = rng.uniform(0, 1, (8, 3))
    y_fast = simulate_chip(chip, x, program=prog)
    y_mw = simulate_chip(chip, x, "multi_wavelength", program=prog)
    W = chip.effective_matrix(prog)
    a = modulator_amplitude(x, 25.0)
    assert np.allclose(y_fast, (W @ a).real, atol=1e-12)
    assert np.allclose(y_mw, np.sqrt(np.abs(W) ** 2 @ a ** 2), atol=1e-12)


def test_spatial_layout_uses_per_block_units(rng):
    k = 4
    chip = ChipInstance(k, VariationModel(0.05, 0.1, np.inf, 1), layout="spatial", m_blocks=2, n_blocks=2)
    assert chip.hardware["p_kappa"].shape[0] == 2
    prog = _program(rng, 8, 8, k)
    x = rng.uniform(0, 1, 8)
    assert np.allclose(simulate_chip(chip, x, program=prog), (chip.effective_matrix(prog) @ x).real)
    with pytest.raises(ShapeError):
        simulate_chip(chip, rng.uniform(0, 1, 12), program=_program(rng, 12, 12, k))


def test_chip_immutable_and_serializable(tmp_path, rng):
    chip = ChipInstance(4, VariationModel(0.02, 0.05, 25.0, 7))
    with pytest.raises(ValueError):
        chip.hardware["p_kappa"][0, 0, 0] = 0.1
    chip.save(tmp_path / "c.json")
    back = ChipInstance.load(tmp_path / "c.json")
    for key in chip.hardware:
        assert np.array_equal(chip.hardware[key], back.hardware[key])
    same = ChipInstance(4, VariationModel(0.02, 0.05, 25.0, 7))
    assert np.array_equal(same.hardware["att_theta_offset"], chip.hardware["att_theta_offset"])


def test_noise_requires_rng_and_inputs_in_range(rng):
    chip = ChipInstance(4, VariationModel.ideal(), NoiseSpec(0.1, 0.0, 0.0))
    prog = _program(rng, 4, 4, 4)
    with pytest.raises(DeviceError):
        simulate_chip(chip, np.ones(4), program=prog)
    with pytest.raises(DeviceError):
        simulate_chip(chip.with_noise(NoiseSpec()), 2 * np.ones(4), program=prog)
    with pytest.raises(DeviceError):
        simulate_chip(chip, np.ones(4), mode="quantum", program=prog, rng=rng)


def test_multi_wavelength_nonnegative(rng):
    chip = ChipInstance(4, VariationModel(0.02, 0.05, 25.0, 0))
    for _ in range(20):
        assert np.all(multi_wavelength_effective(chip, _program(rng, 8, 8, 4)) >= 0)


def test_measurements(rng):
    chip = ChipInstance(4, VariationModel(0.02, 0.05, 25.0, 0))
    S = sample_measurements(chip, 5, rng_seed=2)
    assert len(S) == 5 and S[0].x.shape == (4,) and S[0].y.shape == (4,)
    with pytest.raises(ShapeError):
        sample_measurements(chip, 0)
    with pytest.raises(DeviceError):
        sample_measurements(ChipInstance(4, layout="spatial"), 3)


def test_shot_scale_accumulates_rescaled_shots(rng):
    k = 4
    chip = ChipInstance(k, VariationModel(0.02, 0.05, 25.0, 3))
    prog = _program(rng, 8, 8, k)
    x = rng.uniform(0, 1, (8, 3))
    s = rng.uniform(0.5, 2.0, (2, 3))
    s[1, 2] = 0.0
    y = simulate_chip(chip, x, program=prog, shot_scale=s)
    # oracle: one chip call per shot, other chunk dark (no modulator light)
    W = chip.effective_matrix(prog)
    a = modulator_amplitude(x, 25.0)
    ref = sum((W[:, j * k:(j + 1) * k] @ (a[j * k:(j + 1) * k] * s[j])).real for j in range(2))
    assert np.allclose(y, ref, atol=1e-12)
    with pytest.raises(ShapeError):
        simulate_chip(chip, x, program=prog, shot_scale=s[:1])
    with pytest.raises(DeviceError):
        simulate_chip(chip, x, "multi_wavelength", program=prog, shot_scale=s)
