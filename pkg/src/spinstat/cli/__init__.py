"""Configuration ingestion, experiment drivers and tabular output."""

from .config import ExperimentConfig, ParseError, ValidationError, parse_config, serialize
from .experiments import run_experiment

__all__ = ["ExperimentConfig", "ParseError", "ValidationError", "parse_config", "run_experiment", "serialize"]
