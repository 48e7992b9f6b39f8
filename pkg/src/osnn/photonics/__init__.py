from .devices import (
    Coupler, Crossing, MziAttenuator, PhaseShifter, attenuator_transmission, coupler_matrix,
    device_transfer, magnitude_to_theta, modulator_amplitude,
)
from .variation import NoiseSpec, VariationModel
from .chip import (
    ChipInstance, LayerProgram, Measurement, multi_wavelength_effective, sample_measurements, simulate_chip,
)
