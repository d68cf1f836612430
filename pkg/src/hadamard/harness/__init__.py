"""Experiment configs, the fixture catalogue and the runner behind the CLI."""
from .config import ConfigError, ExperimentConfig, config_from_dict, dump_config, load_config
from .fixtures import FIXTURES, list_fixtures, run_fixture
from .runner import Check, RunManifest, run

__all__ = [
    "Check",
    "ConfigError",
    "ExperimentConfig",
    "FIXTURES",
    "RunManifest",
    "config_from_dict",
    "dump_config",
    "list_fixtures",
    "load_config",
    "run",
    "run_fixture",
]
