"""
Run configuration management for capfem.
"""
import copy
import json
import logging
from pathlib import Path

from .errors import ConfigError

# Set up logging for configuration operations
logger = logging.getLogger(__name__)


class ConfigManager:
    """
    Manages a run configuration.

    The default structure is the schema: loading or setting a key that is
    not in it raises ConfigError with the dotted key path.
    """

    def __init__(self):
        """Initialize configuration with default values."""
        self._config = self._get_default_config()

    def _get_default_config(self):
        """Get default configuration structure."""
        return {
            "geometry": {
                "half_width": 1.0,
                "interface_radius": 0.5,
            },
            "mesh": {
                "n": 16,
                "file": "",  # read this mesh instead of generating one
                "min_angle": 15.0,
            },
            "coefficients": {
                "sigma1": 1.0,
                "sigma2": 10.0,
                "eps1": 1.0,
                "eps2": 0.1,
            },
            "time": {
                "final_time": 1.0,
                "steps": 16,
                "load_sampling": "nodal",  # "nodal" or "average"
            },
            "pulse": {
                "kind": "trapezoidal",
                "amplitude": 1.0,
                "onset": 0.0,
                "duration": 0.5,
                "rise_time": 0.125,
                "decay": 0.25,
                "center": 0.5,
                "width": 0.125,
                "profile": "uniform",  # "uniform" or "gaussian-spot"
                "profile_center": [0.0, 0.0],
                "profile_width": 0.25,
            },
            "initial": {
                "datum": "zero",  # zero, case-A, case-B or interpolate:<expression>
            },
            "solver": {
                "tol": 1e-12,
                "maxit": None,  # None means 10 x system dimension
                "preconditioner": "diagonal",
            },
            "output": {
                "directory": "output",
                "stride": 1,
                "probes": [],
            },
        }

    def get(self, key, default=None):
        """
        Get configuration value using dot notation.

        Args:
            key: Configuration key (e.g., 'coefficients.eps1')
            default: Default value if key not found

        Returns:
            Configuration value or default
        """
        keys = key.split('.')
        value = self._config

        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default

        return value

    def set(self, key, value):
        """
        Set configuration value using dot notation.

        Args:
            key: Configuration key (e.g., 'time.steps')
            value: Value to set

        Raises:
            ConfigError: the key is not part of the schema
        """
        keys = key.split('.')
        config = self._config

        # Navigate to the parent dictionary
        for depth, k in enumerate(keys[:-1]):
            if not isinstance(config.get(k), dict):
                raise ConfigError('.'.join(keys[:depth + 1]), "unknown section")
            config = config[k]

        if keys[-1] not in config:
            raise ConfigError(key, "unknown key")
        if isinstance(config[keys[-1]], dict):
            raise ConfigError(key, "is a section, not a value")
        config[keys[-1]] = value

    def save(self, filepath):
        """
        Save configuration to JSON file.

        Args:
            filepath: Path to save configuration

        Returns:
            bool: True if successful
        """
        try:
            filepath = Path(filepath)
            filepath.parent.mkdir(parents=True, exist_ok=True)

            with open(filepath, 'w', encoding='utf-8') as f:
                json.dump(self._config, f, indent=2, ensure_ascii=False)

            return True
        except (IOError, PermissionError) as e:
            logger.error(f"Cannot write to configuration file '{filepath}': {e}")
            return False
        except TypeError as e:
            logger.error(f"Invalid configuration data (cannot serialize to JSON): {e}")
            return False

    def load(self, filepath):
        """
        Load configuration from JSON file.

        Args:
            filepath: Path to load configuration from

        Raises:
            ConfigError: the file is missing, is not JSON, or contains a key
                outside the schema
            OSError: the file exists but cannot be read
        """
        filepath = Path(filepath)
        if not filepath.exists():
            raise ConfigError("<file>", f"configuration file not found: {filepath}")

        try:
            with open(filepath, 'r', encoding='utf-8') as f:
                loaded_config = json.load(f)
        except json.JSONDecodeError as e:
            logger.error(f"Invalid JSON in configuration file '{filepath}': {e}")
            raise ConfigError(f"<line {e.lineno}, column {e.colno}>", f"invalid JSON: {e.msg}") from e
        except UnicodeDecodeError as e:
            raise ConfigError("<file>", f"{filepath} is not valid UTF-8 (byte offset {e.start})") from e

        if not isinstance(loaded_config, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")

        # Merge with defaults so that missing keys keep their default values
        self._config = self._merge_configs(self._get_default_config(), loaded_config)
        logger.info(f"Loaded configuration from {filepath}")

    def load_dict(self, data):
        """Replace the configuration by defaults merged with data (strict)."""
        self._config = self._merge_configs(self._get_default_config(), data)

    def _merge_configs(self, default, loaded, prefix=""):
        """
        Merge loaded configuration with defaults.

        Args:
            default: Default configuration
            loaded: Loaded configuration
            prefix: Dotted path of the current section

        Returns:
            Merged configuration

        Raises:
            ConfigError: unknown key, or a value where a section belongs
        """
        result = copy.deepcopy(default)
        for key, value in loaded.items():
            path = f"{prefix}{key}"
            if key not in result:
                raise ConfigError(path, "unknown key")
            if isinstance(result[key], dict):
                if not isinstance(value, dict):
                    raise ConfigError(path, "expected a section")
                result[key] = self._merge_configs(result[key], value, prefix=f"{path}.")
            elif isinstance(value, dict):
                raise ConfigError(path, "expected a value, got a section")
            else:
                result[key] = value

        return result

    def to_dict(self):
        """
        Get configuration as dictionary (deep copy).

        Returns:
            dict: Complete configuration
        """
        return copy.deepcopy(self._config)
