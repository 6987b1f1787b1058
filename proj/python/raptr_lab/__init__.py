"""Python access to the raptr-lab schedules, FLOPs models and experiment runner."""

import json

from ._core import (
    ArgumentError,
    ConfigError,
    InfeasibleSchedule,
    experiment_names,
    flops_overhead,
    fourier_coeff_exact,
    h_sqrt,
    pld_exact_keep_fraction,
    pld_long_run_flops,
    relative_flops,
    schedule,
    selftest,
)
from ._core import default_config as _default_config
from ._core import run_config_json as _run_config_json

__all__ = [
    "ArgumentError",
    "ConfigError",
    "InfeasibleSchedule",
    "default_config",
    "experiment_names",
    "flops_overhead",
    "fourier_coeff_exact",
    "h_sqrt",
    "pld_exact_keep_fraction",
    "pld_long_run_flops",
    "relative_flops",
    "run",
    "schedule",
    "selftest",
]


def default_config(experiment):
    """Fully populated default config of an experiment as a dict."""
    return json.loads(_default_config(experiment))


def run(config):
    """Run a config dict. Returns (exit_code, log text); invalid configs give exit code 2."""
    try:
        return _run_config_json(json.dumps(config))
    except ConfigError as e:
        return 2, f"config error: {e}\n"
