"""Experiment orchestration and the ``dwrelax`` command line."""

from .config import ConfigError, ExperimentConfig, SweepSpec, load_config, load_sweep, parse_config, parse_sweep
from .runner import ResultRecord, load_record, run, steady, sweep, validate, write_record

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "SweepSpec",
    "ResultRecord",
    "load_config",
    "load_sweep",
    "parse_config",
    "parse_sweep",
    "run",
    "steady",
    "sweep",
    "validate",
    "write_record",
    "load_record",
]
