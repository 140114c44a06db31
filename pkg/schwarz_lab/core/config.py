"""
Configuration management for Schwarz Lab experiments.
Handles section files with defaults for the main test configuration.
"""

import configparser
import hashlib
import logging
import os
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

from .errors import ConfigError

logger = logging.getLogger(__name__)


class Config:
    """Configuration manager with persistent storage."""

    DEFAULT_CONFIG = {
        'grid': {
            'n0': 20,
            'n1': 400,
            'layers': 6,
            'weights': 1.0,
        },
        'problem': {
            'coefficient': 1.0,
            'rhs': 1.0,
        },
        'method': {
            'name': 'one-step',
            'relaxation': 'steepest-descent',
            'lambda_upper': 3.33,
            'lambda_lower': 0.9,
            'p_policy': 'exact',
            'p_lower': 0,
        },
        'sampler': {
            'mode': 'uniform',
            'p': 0,
        },
        'faults': {
            'kind': 'none',
            'rate': 0.0,
            'delta_f': 0,
            'k1': 0.5,
            'lambda1': 18.0,
            'k2': 1.0,
            'lambda2': 3.0,
            'l': 1,
            'policy': 'random',
            'trace': '',
        },
        'termination': {
            'tolerance': 1e-6,
            'max_steps': 200,
        },
        'spectrum': {
            'iterations': 60,
        },
        'output': {
            'directory': 'results',
            'database': '',
        },
        'runtime': {
            'seed': 0,
            'max_workers': 1,
            'refresh_interval': 50,
            'cache_entries': 4,
        },
    }

    CHOICES = {
        ('method', 'name'): ('one-step', 'accelerated'),
        ('method', 'p_policy'): ('exact', 'lower-bound'),
        ('sampler', 'mode'): ('uniform', 'weighted', 'weighted-replacement'),
        ('faults', 'kind'): ('none', 'constant-rate', 'uniform-interval',
                             'weibull-master-slave', 'local-communication', 'replay'),
        ('faults', 'policy'): ('random', 'alternate'),
    }

    def __init__(self, config_file: Optional[str] = None):
        """
        Initialize configuration manager.

        Args:
            config_file: Path to a section file. If None, only defaults are used.
        """
        self.config_file = config_file
        self.reset_to_defaults(save=False)
        if config_file is not None:
            self.load()

    def load(self) -> None:
        """
        Load configuration from file, validating every entry.

        Raises:
            ConfigError: If the file cannot be parsed or an entry is invalid
        """
        if not os.path.exists(self.config_file):
            raise ConfigError(f"configuration file not found: {self.config_file}")

        parser = configparser.ConfigParser()
        try:
            parser.read(self.config_file, encoding='utf-8')
        except configparser.Error as e:
            raise ConfigError(f"failed to parse {self.config_file}: {e}") from e

        for section in parser.sections():
            for key, raw in parser.items(section):
                self.config.setdefault(section, {})
                self.config[section][key] = self._parse(section, key, raw)
        logger.debug("Loaded configuration from %s", self.config_file)

    def save(self, path: Optional[str] = None) -> None:
        """Save configuration to a section file."""
        path = path or self.config_file
        if path is None:
            return
        parser = configparser.ConfigParser()
        for section, values in self.config.items():
            parser[section] = {key: self._format(value) for key, value in values.items()}
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            parser.write(f)

    @classmethod
    def _parse(cls, section: str, key: str, raw: str) -> Any:
        if section not in cls.DEFAULT_CONFIG:
            raise ConfigError(f"unknown section [{section}]")
        if key not in cls.DEFAULT_CONFIG[section]:
            raise ConfigError(f"unknown key '{key}' in section [{section}]")
        default = cls.DEFAULT_CONFIG[section][key]
        raw = raw.strip()
        try:
            if section == 'grid' and key == 'weights':
                values = tuple(float(v) for v in raw.replace(',', ' ').split())
                value = values[0] if len(values) == 1 else values
            elif isinstance(default, bool):
                value = raw.lower() in ('1', 'true', 'yes', 'on')
            elif isinstance(default, int):
                value = int(raw)
            elif isinstance(default, float):
                value = float(raw)
            else:
                value = raw
        except (ValueError, IndexError) as e:
            raise ConfigError(f"invalid value for [{section}] {key}: '{raw}'") from e

        if section == 'method' and key == 'relaxation' and value != 'steepest-descent':
            try:
                float(value)
            except ValueError:
                raise ConfigError(f"relaxation must be 'steepest-descent' or a number, got '{value}'")
        choices = cls.CHOICES.get((section, key))
        if choices is not None and value not in choices:
            raise ConfigError(f"[{section}] {key} must be one of {', '.join(choices)}, got '{value}'")
        return value

    @staticmethod
    def _format(value: Any) -> str:
        if isinstance(value, (tuple, list)):
            return ' '.join(repr(float(v)) for v in value)
        if isinstance(value, float):
            return repr(value)
        return str(value)

    def get(self, section: str, key: str, default: Any = None) -> Any:
        """
        Get configuration value.

        Args:
            section: Section name
            key: Configuration key
            default: Default value if key not found

        Returns:
            Configuration value
        """
        return self.config.get(section, {}).get(key, default)

    def set(self, section: str, key: str, value: Any) -> None:
        """
        Set configuration value (validated) and save.

        Args:
            section: Section name
            key: Configuration key
            value: Value or its text form
        """
        self.config[section][key] = self._parse(section, key, self._format(value))
        self.save()

    def reset_to_defaults(self, save: bool = True) -> None:
        """Reset configuration to default values."""
        self.config = {section: dict(values) for section, values in self.DEFAULT_CONFIG.items()}
        if save:
            self.save()

    def canonical_text(self, exclude: Tuple[str, ...] = ()) -> str:
        """Sorted 'section.key = value' lines, the input of the config hash."""
        lines = []
        for section in sorted(self.config):
            if section in exclude:
                continue
            for key in sorted(self.config[section]):
                lines.append(f"{section}.{key} = {self._format(self.config[section][key])}")
        return '\n'.join(lines) + '\n'

    def experiment(self) -> 'ExperimentConfig':
        """Typed view of the current values."""
        return ExperimentConfig.from_config(self)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated parameter set of one experiment."""

    n0: int = 20
    n1: int = 400
    layers: int = 6
    weights: Any = 1.0
    coefficient: float = 1.0
    rhs: float = 1.0
    method: str = 'one-step'
    relaxation: str = 'steepest-descent'
    lambda_upper: float = 3.33
    lambda_lower: float = 0.9
    p_policy: str = 'exact'
    p_lower: int = 0
    sampler_mode: str = 'uniform'
    sampler_p: int = 0
    fault_kind: str = 'none'
    fault_rate: float = 0.0
    delta_f: int = 0
    k1: float = 0.5
    lambda1: float = 18.0
    k2: float = 1.0
    lambda2: float = 3.0
    redundancy: int = 1
    group_policy: str = 'random'
    trace: str = ''
    tolerance: float = 1e-6
    max_steps: int = 200
    spectrum_iterations: int = 60
    output_dir: str = 'results'
    database: str = ''
    seed: int = 0
    max_workers: int = 1
    refresh_interval: int = 50
    cache_entries: int = 4

    _FIELDS = {
        'n0': ('grid', 'n0'), 'n1': ('grid', 'n1'), 'layers': ('grid', 'layers'),
        'weights': ('grid', 'weights'),
        'coefficient': ('problem', 'coefficient'), 'rhs': ('problem', 'rhs'),
        'method': ('method', 'name'), 'relaxation': ('method', 'relaxation'),
        'lambda_upper': ('method', 'lambda_upper'), 'lambda_lower': ('method', 'lambda_lower'),
        'p_policy': ('method', 'p_policy'), 'p_lower': ('method', 'p_lower'),
        'sampler_mode': ('sampler', 'mode'), 'sampler_p': ('sampler', 'p'),
        'fault_kind': ('faults', 'kind'), 'fault_rate': ('faults', 'rate'),
        'delta_f': ('faults', 'delta_f'), 'k1': ('faults', 'k1'), 'lambda1': ('faults', 'lambda1'),
        'k2': ('faults', 'k2'), 'lambda2': ('faults', 'lambda2'), 'redundancy': ('faults', 'l'),
        'group_policy': ('faults', 'policy'), 'trace': ('faults', 'trace'),
        'tolerance': ('termination', 'tolerance'), 'max_steps': ('termination', 'max_steps'),
        'spectrum_iterations': ('spectrum', 'iterations'),
        'output_dir': ('output', 'directory'), 'database': ('output', 'database'),
        'seed': ('runtime', 'seed'), 'max_workers': ('runtime', 'max_workers'),
        'refresh_interval': ('runtime', 'refresh_interval'),
        'cache_entries': ('runtime', 'cache_entries'),
    }

    def __post_init__(self):
        if self.n0 < 1 or self.n1 < 2 or self.n1 % self.n0 != 0:
            raise ConfigError(f"invalid grid n0={self.n0}, n1={self.n1}")
        if not 0 < self.layers < self.n1 // self.n0:
            raise ConfigError(f"layers must satisfy 0 < l < n1/n0, got {self.layers}")
        if self.coefficient <= 0.0:
            raise ConfigError(f"coefficient must be positive, got {self.coefficient}")
        if self.tolerance <= 0.0 or self.max_steps < 0:
            raise ConfigError("tolerance must be positive and max_steps nonnegative")
        if not 0.0 <= self.fault_rate <= 1.0:
            raise ConfigError(f"failure rate must lie in [0, 1], got {self.fault_rate}")
        if self.method == 'accelerated' and not 0.0 < self.lambda_lower <= self.lambda_upper:
            raise ConfigError("accelerated method needs 0 < lambda_lower <= lambda_upper")
        if self.fault_kind == 'replay' and not self.trace:
            raise ConfigError("fault kind 'replay' needs a trace file")

    @classmethod
    def from_config(cls, config: Config) -> 'ExperimentConfig':
        values = {name: config.get(section, key) for name, (section, key) in cls._FIELDS.items()}
        return cls(**values)

    def to_config(self) -> Config:
        config = Config()
        for name, (section, key) in self._FIELDS.items():
            config.config[section][key] = getattr(self, name)
        return config

    def with_overrides(self, **overrides) -> 'ExperimentConfig':
        """
        Copy with the given fields replaced; None values are ignored.

        Each value is validated like the matching configuration file entry.

        Raises:
            ConfigError: On an unknown field or an invalid value
        """
        values = asdict(self)
        for name, value in overrides.items():
            if value is None:
                continue
            if name not in self._FIELDS:
                raise ConfigError(f"unknown experiment parameter '{name}'")
            section, key = self._FIELDS[name]
            values[name] = Config._parse(section, key, Config._format(value))
        return ExperimentConfig(**values)

    @property
    def relaxation_value(self):
        """'steepest-descent' or the fixed relaxation as float."""
        if self.relaxation == 'steepest-descent':
            return self.relaxation
        return float(self.relaxation)

    def config_hash(self) -> str:
        """SHA-256 of the canonical configuration, 16 hex digits."""
        text = self.to_config().canonical_text(exclude=('output',))
        return hashlib.sha256(text.encode('utf-8')).hexdigest()[:16]

    def grid_key(self) -> Tuple:
        weights = tuple(self.weights) if isinstance(self.weights, (tuple, list)) else self.weights
        return (self.n0, self.n1, self.layers, weights, self.coefficient, self.rhs)

    def echo(self) -> Dict[str, Any]:
        return asdict(self)


def load_experiment(path: Optional[str] = None) -> ExperimentConfig:
    """Read and validate an experiment configuration (defaults when path is None)."""
    return Config(path).experiment()
