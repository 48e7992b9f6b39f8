"""Experiment configuration: flat dotted keys with a typed schema.

Files are JSON objects; nested objects are flattened to dotted keys, so
``{"train": {"lr": 0.1}}`` and ``{"train.lr": 0.1}`` are equivalent.
Unknown keys are rejected.
"""

import hashlib
import json
from pathlib import Path

from ..errors import ConfigError

TASKS = ("train", "eval", "chip-eval", "prune", "fidelity", "cost", "dpe-fit", "calibrate")

# key -> (type, default, allowed values or None)
SCHEMA = {
    "task": (str, "train", TASKS),
    "seed": (int, 0, None),
    "out_dir": (str, "out", None),
    "data.dir": (str, "", None),
    "data.train_limit": (int, 0, None),
    "data.test_limit": (int, 0, None),
    "model.k": (int, 4, None),
    "model.transform": (str, "hadamard", ("hadamard", "dft", "identity")),
    "model.bits": (int, 3, None),
    "model.quantize": (bool, True, None),
    "model.checkpoint": (str, "", None),
    "train.lr": (float, 0.05, None),
    "train.momentum": (float, 0.9, None),
    "train.epochs": (int, 20, None),
    "train.batch_size": (int, 64, None),
    "train.lr_milestones": (list, [0.5, 0.75], None),
    "train.lr_decay": (float, 0.1, None),
    "train.group_lambda": (float, 0.0, None),
    "train.prune_tau": (float, 0.0, None),
    "train.prune_epochs": (int, 1, None),
    "train.backend": (str, "ideal", ("ideal", "dpe")),
    "noise.input_sigma": (float, 0.0, None),
    "noise.phase_drift_sigma": (float, 0.0, None),
    "noise.detector_sigma": (float, 0.0, None),
    "eval.noise_seeds": (int, 1, None),
    "chip.path": (str, "", None),
    "chip.kappa_std": (float, 0.0, None),
    "chip.phase_offset_std": (float, 0.0, None),
    "chip.er_db": (float, float("inf"), None),
    "chip.seed": (int, 0, None),
    "chip.layout": (str, "time_multiplexed", ("time_multiplexed", "spatial")),
    "chip.mapping": (str, "calibrated", ("calibrated", "naive")),
    "chip.subset": (int, 2000, None),
    "chip.sweep_points": (int, 32, None),
    "chip.predistort": (bool, True, None),
    "dpe.path": (str, "", None),
    "dpe.samples": (int, 1000, None),
    "dpe.epochs": (int, 400, None),
    "dpe.lr": (float, 0.01, None),
    "fidelity.k": (int, 4, None),
    "fidelity.targets": (int, 20, None),
    "fidelity.iterations": (int, 300, None),
    "fidelity.restarts": (int, 3, None),
    "cost.arch": (str, "osnn", ("osnn", "mzi_svd")),
    "cost.m": (int, 32, None),
    "cost.n": (int, 32, None),
    "cost.k": (int, 8, None),
    "cost.library": (str, "paper-defaults", None),
    "cost.wdm": (bool, False, None),
    "cost.reconfig_rate": (float, 0.0, None),
}


def flatten(d, prefix=""):
    out = {}
    for key, v in d.items():
        full = f"{prefix}{key}"
        if isinstance(v, dict):
            out.update(flatten(v, full + "."))
        else:
            out[full] = v
    return out


def _coerce(key, v):
    typ, _, allowed = SCHEMA[key]
    if typ is float:
        if isinstance(v, str) and v.lower() in ("inf", "infinity"):
            v = float("inf")
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"expected a number, got {v!r}", key)
        v = float(v)
    elif typ is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"expected an integer, got {v!r}", key)
    elif typ is bool:
        if not isinstance(v, bool):
            raise ConfigError(f"expected true/false, got {v!r}", key)
    elif typ is list:
        if not isinstance(v, list):
            raise ConfigError(f"expected a list, got {v!r}", key)
    elif not isinstance(v, str):
        raise ConfigError(f"expected a string, got {v!r}", key)
    if allowed is not None and v not in allowed:
        raise ConfigError(f"must be one of {', '.join(allowed)}; got {v!r}", key)
    return v


class ExperimentConfig:
    def __init__(self, values=None):
        vals = {key: (list(d) if isinstance(d, list) else d) for key, (_, d, _) in SCHEMA.items()}
        for key, v in flatten(values or {}).items():
            if key not in SCHEMA:
                raise ConfigError("unknown configuration key", key)
            vals[key] = _coerce(key, v)
        self.values = vals

    def __getitem__(self, key):
        return self.values[key]

    def with_overrides(self, **kw):
        d = dict(self.values)
        d.update({key.replace("__", "."): v for key, v in kw.items()})
        return ExperimentConfig(d)

    def to_dict(self):
        return {key: ("inf" if isinstance(v, float) and v == float("inf") else v) for key, v in self.values.items()}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def hash(self):
        """Hash of everything except output location."""
        d = {key: v for key, v in self.to_dict().items() if key != "out_dir"}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def load(cls, path):
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"not valid JSON: {e}", str(path)) from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object", str(path))
        return cls(d)
