from .network import (
    ButterflyNetwork, PhaseConfiguration, bit_reverse, configure_dft, configure_hadamard,
    inversion_count, is_power_of_two, transfer_matrix, transfer_tape,
)
from .fit import (
    FitResult, expressivity_report, fidelity, fit_bsp, fit_nonnegative, fit_unitary, haar_unitary,
    multi_wavelength_matrix, sigma_only, sigma_only_fidelity,
)
