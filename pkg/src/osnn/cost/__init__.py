"""Hardware cost estimates for OSNN and MZI-mesh layers."""

from .model import (ARCHS, COMPONENTS, ComponentLibrary, CostReport, cost_report, count_components,
                    estimate_area, estimate_delay, estimate_energy, model_cost, optical_delay,
                    trainable_devices, wdm_multiplier)
