# utils/config.py
"""
Configuration management for the graft toolkit.
Handles environment variables, the key-value settings file, and output directories.
"""

import copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterator, Optional, Tuple

from dotenv import load_dotenv

from utils.errors import ConfigError

logger = logging.getLogger(__name__)

SETTINGS_FILENAME = 'settings.conf'


def parse_settings_text(text: str, source: str = '<string>') -> Dict[str, Any]:
    """
    Parse the key-value settings grammar into a nested dict

    One `key = value` per line, dot-separated keys, `#` comments.
    Values are JSON literals when they parse as such, bare strings otherwise.

    Args:
        text: Settings file contents
        source: Name used in error messages

    Returns:
        Nested settings dictionary
    """
    settings: Dict[str, Any] = {}
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{source}:{line_number}: expected 'key = value', got {raw_line!r}")

        key, raw_value = (part.strip() for part in line.split('=', 1))
        if not key or any(not part for part in key.split('.')):
            raise ConfigError(f"{source}:{line_number}: invalid key {key!r}")

        _assign(settings, key, _parse_value(raw_value))
    return settings


def _parse_value(raw_value: str) -> Any:
    try:
        return json.loads(raw_value)
    except json.JSONDecodeError:
        return raw_value


def _assign(target: Dict[str, Any], key_path: str, value: Any) -> None:
    keys = key_path.split('.')
    for key in keys[:-1]:
        if not isinstance(target.get(key), dict):
            target[key] = {}
        target = target[key]
    target[keys[-1]] = value


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def flatten_settings(settings: Dict[str, Any], prefix: str = '') -> Iterator[Tuple[str, Any]]:
    """Yield (dot.path, value) pairs in sorted key order"""
    for key in sorted(settings):
        value = settings[key]
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from flatten_settings(value, prefix=f"{path}.")
        else:
            yield path, value


class GraftConfig:
    """Centralized configuration management for graft"""

    def __init__(self, config_dir: str = 'config', data_dir: str = 'data',
                 settings_file: Optional[str] = None):
        """
        Initialize configuration

        Args:
            config_dir: Directory holding .env and settings.conf
            data_dir: Directory for corpora, runs and logs
            settings_file: Explicit settings file (overrides config_dir/settings.conf)
        """
        self.config_dir = Path(config_dir)
        self.data_dir = Path(data_dir)
        self.settings_file = Path(settings_file) if settings_file else self.config_dir / SETTINGS_FILENAME

        self._load_environment()
        self.settings = self._load_settings()

    def _load_environment(self) -> None:
        """Load environment variables from .env file"""
        env_file = self.config_dir / '.env'
        if env_file.exists():
            load_dotenv(env_file)
            logger.debug("Loaded environment from %s", env_file)

    def _load_settings(self) -> Dict[str, Any]:
        """Load settings file merged over the defaults"""
        defaults = self._default_settings()
        if not self.settings_file.exists():
            if self.settings_file != self.config_dir / SETTINGS_FILENAME:
                raise ConfigError(f"Settings file not found: {self.settings_file}")
            return defaults

        text = self.settings_file.read_text(encoding='utf-8')
        overrides = parse_settings_text(text, source=str(self.settings_file))
        logger.debug("Loaded settings from %s", self.settings_file)
        return _merge(defaults, overrides)

    def _default_settings(self) -> Dict[str, Any]:
        """Default configuration settings (desk-scale sizes)"""
        return {
            "experiment": {
                "seed": 42,
                "seeds": [0, 1, 2, 3, 4],
                "jobs": 1,
                "out_dir": str(self.data_dir / 'runs'),
                "train_sizes": [10, 20, 50, 100],
                "donor_sizes": [100, 500, 2000],
                "split_properties": ["endpoint"],
            },

            # Dataset sources: CSV path or 'gen:' generator spec
            "donor": {
                "source": "gen:n=2000,seed=1,target=donor_default,noise=0",
                "holdout": 0.2,
                "binarize_threshold": None,
                "positive_when": ">=",
            },
            "acceptor": {
                "source": "gen:n=400,seed=2,target=acceptor_related,noise=0",
                "binarize_threshold": None,
                "positive_when": ">=",
            },

            "model": {
                "graph_conv": [64, 64],
                "dense": [64, 32],
                "activation": "relu",
                "readout": "sum",
            },

            "training": {
                "epochs": 300,
                "donor_epochs": 100,
                "batch_size": 32,
                "learning_rate": 0.005,
                "adam_beta1": 0.9,
                "adam_beta2": 0.999,
                "adam_eps": 1e-8,
                "log_every": 50,
            },

            "transfer": {
                "mode": "feature_extraction",
                "copy": "graph_conv",
                "reinit_head": True,
            },

            "forest": {
                "n_trees": 100,
                "max_depth": None,
                "min_samples_leaf": 1,
                "features_per_split": "sqrt",
                "bootstrap": True,
                "radius": 3,
                "n_bits": 2048,
            },

            "appdomain": {
                "k": 5,
                "radius": 2,
                "n_bits": 2048,
                "strict": True,
            },

            "pca": {
                "radius": 2,
                "n_bits": 2048,
                "max_iter": 1000,
                "tol": 1e-9,
                "boxes": [],
                "max_n": 500,
            },

            "region_sweep": {
                "region_size": 500,
                "bands": 3,
                "train_size": 20,
            },
        }

    def save_settings(self, path: Optional[Path] = None) -> Path:
        """Write current settings in key-value form"""
        path = Path(path) if path else self.settings_file
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"{key} = {json.dumps(value)}" for key, value in flatten_settings(self.settings)]
        path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        logger.info("Saved settings to %s", path)
        return path

    # Property accessors; environment variables win over the settings file
    @property
    def seed(self) -> int:
        """Master seed for experiment runs"""
        return int(os.getenv('GRAFT_SEED', self.settings['experiment']['seed']))

    @property
    def jobs(self) -> int:
        """Worker processes for independent experiment cells"""
        return max(1, int(os.getenv('GRAFT_JOBS', self.settings['experiment']['jobs'])))

    @property
    def out_dir(self) -> Path:
        """Directory receiving reports, archives and CSV exports"""
        return Path(os.getenv('GRAFT_OUT_DIR', self.settings['experiment']['out_dir']))

    @property
    def log_level(self) -> str:
        """Root logging level"""
        return os.getenv('LOG_LEVEL', 'INFO').upper()

    @property
    def logs_dir(self) -> Path:
        """Directory for log files"""
        return self.data_dir / 'logs'

    @property
    def corpora_dir(self) -> Path:
        """Directory of bundled SMILES corpora"""
        return self.data_dir / 'corpora'

    # Settings accessors
    def get_setting(self, key_path: str, default: Any = None) -> Any:
        """
        Get setting value using dot notation

        Args:
            key_path: Dot-separated path to setting (e.g., 'training.learning_rate')
            default: Default value if key not found

        Returns:
            Setting value or default
        """
        value = self.settings
        try:
            for key in key_path.split('.'):
                value = value[key]
            return value
        except (KeyError, TypeError):
            return default

    def set_setting(self, key_path: str, value: Any, save: bool = False) -> None:
        """
        Set setting value using dot notation

        Args:
            key_path: Dot-separated path to setting
            value: Value to set
            save: Persist the settings file afterwards
        """
        _assign(self.settings, key_path, value)
        if save:
            self.save_settings()

    def apply_overrides(self, overrides: Dict[str, Any]) -> None:
        """Apply command-line overrides; None values are ignored"""
        for key_path, value in overrides.items():
            if value is not None:
                self.set_setting(key_path, value)

    def validate_configuration(self) -> Dict[str, Any]:
        """
        Validate configuration and return status

        Returns:
            Dict with validation results
        """
        issues = []
        warnings = []

        for side in ('donor', 'acceptor'):
            source = str(self.get_setting(f'{side}.source', ''))
            if not source:
                issues.append(f"{side}.source is not configured")
            elif not source.startswith('gen:') and not Path(source).exists():
                issues.append(f"{side} dataset not found: {source}")

        if not self.get_setting('experiment.seeds'):
            issues.append("experiment.seeds must not be empty")

        if self.get_setting('transfer.mode') not in ('feature_extraction', 'fine_tuning'):
            issues.append(f"Unknown transfer.mode: {self.get_setting('transfer.mode')}")

        if self.get_setting('model.readout') not in ('mean', 'sum'):
            issues.append(f"Unknown model.readout: {self.get_setting('model.readout')}")

        if self.get_setting('training.learning_rate', 0) <= 0:
            issues.append("training.learning_rate must be positive")

        if self.jobs > (os.cpu_count() or 1):
            warnings.append(f"jobs={self.jobs} exceeds available CPUs ({os.cpu_count()})")

        return {
            'valid': len(issues) == 0,
            'issues': issues,
            'warnings': warnings
        }

    def create_env_template(self) -> Path:
        """Create .env.example template file"""
        template_content = """# Experiment defaults (override config/settings.conf)
GRAFT_SEED=42
GRAFT_JOBS=1
GRAFT_OUT_DIR=data/runs

# Logging
LOG_LEVEL=INFO
"""
        self.config_dir.mkdir(parents=True, exist_ok=True)
        template_file = self.config_dir / '.env.example'
        template_file.write_text(template_content, encoding='utf-8')
        logger.info("Created .env template: %s", template_file)
        return template_file


_config: Optional[GraftConfig] = None


def get_config(settings_file: Optional[str] = None, reload: bool = False) -> GraftConfig:
    """Get the process-wide configuration, creating it on first use"""
    global _config
    if _config is None or reload or settings_file is not None:
        _config = GraftConfig(settings_file=settings_file)
    return _config
