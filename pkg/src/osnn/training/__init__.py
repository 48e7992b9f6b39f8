"""Hardware-aware training: noise injection, calibration, DPE, deployment, pruning."""

from .calibration import AttenuatorCurve, CalibrationTable, calibrate_devices, fit_curve
from .deploy import ChipExecutor, calibrated_program, evaluate_on_chip, naive_program
from .dpe import DpeExecutor, DpeFitReport, DpeModel, fit_dpe, rmse
from .noise import SITES, NoisyExecutor, inject_noise
from .prune import PruneMask, apply_mask, prune_sigma_groups, unit_norms
from .train import METRIC_FIELDS, TrainConfig, accuracy, format_metrics_csv, train
