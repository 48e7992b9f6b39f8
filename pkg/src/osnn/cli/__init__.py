"""Experiment orchestration: IDX datasets, configuration and the osnn command."""

from .config import SCHEMA, TASKS, ExperimentConfig
from .data import DatasetHandle, load_mnist, load_split, parse_idx_images, parse_idx_labels
