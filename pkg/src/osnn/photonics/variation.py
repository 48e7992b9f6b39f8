"""Static process variations and dynamic noise parameters."""

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class VariationModel:
    kappa_std: float = 0.0
    phase_offset_std: float = 0.0
    er_db: float = 25.0
    seed: int = 0

    def __post_init__(self):
        if self.kappa_std < 0 or self.phase_offset_std < 0:
            raise ConfigError("variation stds must be >= 0", "variation")
        if not self.er_db > 0:
            raise ConfigError("extinction ratio must be > 0 dB (inf for ideal)", "variation.er_db")

    def to_dict(self):
        d = asdict(self)
        d["er_db"] = "inf" if np.isinf(self.er_db) else self.er_db
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["er_db"] = float(d.get("er_db", 25.0))
        return cls(**d)

    @classmethod
    def ideal(cls, seed=0):
        return cls(0.0, 0.0, np.inf, seed)


@dataclass(frozen=True)
class NoiseSpec:
    input_sigma: float = 0.0
    phase_drift_sigma: float = 0.0
    detector_sigma: float = 0.0
    drift_all_phases: bool = False

    def __post_init__(self):
        if min(self.input_sigma, self.phase_drift_sigma, self.detector_sigma) < 0:
            raise ConfigError("noise stds must be >= 0", "noise")

    @property
    def is_zero(self):
        return self.input_sigma == 0 and self.phase_drift_sigma == 0 and self.detector_sigma == 0

    def to_dict(self):
        return asdict(self)
