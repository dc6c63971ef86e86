"""Federated keyword-spotting training core."""

from ._core import (
    ConfigError,
    DataError,
    FormatError,
    UsageError,
    ablation_run_names,
    check_config,
    compute_fa_fr,
    config_keys,
    default_config,
    evaluate,
    generate_data,
    train,
    tune_threshold,
)

__all__ = [
    "ConfigError",
    "DataError",
    "FormatError",
    "UsageError",
    "ablation_run_names",
    "check_config",
    "compute_fa_fr",
    "config_keys",
    "default_config",
    "evaluate",
    "generate_data",
    "train",
    "tune_threshold",
]
