"""Configuration, experiment orchestration and the command line."""
from .config import ConfigError, ExperimentConfig, emit_config, load_config, parse_config
from .experiments import Check, RunReport, run

__all__ = ["Check", "ConfigError", "ExperimentConfig", "RunReport", "emit_config",
           "load_config", "parse_config", "run"]
