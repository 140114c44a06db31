"""Core modules for Schwarz Lab."""

from .errors import SchwarzLabError, ConfigError
from .config import Config, ExperimentConfig, load_experiment
from .fem import GridSpec, FemProblem, assemble_poisson
from .splitting import Splitting, build_splitting
from .spectral import SpectralBounds, estimate_spectral_bounds
from .sampling import SamplerConfig, RandomIndexSource, FixedIndexSource
from .iteration import RunReport, RunSettings, run
from .faults import FaultScenario, WeibullParams
from .cost_model import CostConstants, load_constants
from .database import ResultStore
from .cache_manager import SplittingCache
from .batch_operations import ExperimentBatch
from .experiments import run_experiment

__all__ = [
    'SchwarzLabError',
    'ConfigError',
    'Config',
    'ExperimentConfig',
    'load_experiment',
    'GridSpec',
    'FemProblem',
    'assemble_poisson',
    'Splitting',
    'build_splitting',
    'SpectralBounds',
    'estimate_spectral_bounds',
    'SamplerConfig',
    'RandomIndexSource',
    'FixedIndexSource',
    'RunReport',
    'RunSettings',
    'run',
    'FaultScenario',
    'WeibullParams',
    'CostConstants',
    'load_constants',
    'ResultStore',
    'SplittingCache',
    'ExperimentBatch',
    'run_experiment',
]
