"""Python access to the fairvit C++ core."""

from ._core import (
    ConfigError,
    ContractError,
    FairvitError,
    Model,
    UndefinedMetricError,
    balanced_accuracy,
    demographic_parity,
    distance,
    distance_loss,
    equalized_opportunity,
    fairness_report,
    fit_hyperplane,
    run_cli,
    split_groups,
    synth_dataset,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "FairvitError",
    "Model",
    "UndefinedMetricError",
    "balanced_accuracy",
    "demographic_parity",
    "distance",
    "distance_loss",
    "equalized_opportunity",
    "fairness_report",
    "fit_hyperplane",
    "run_cli",
    "split_groups",
    "synth_dataset",
]
