# pylint: disable=line-too-long, broad-exception-caught

"""
Configuration module for the vessel-transfer package.

Settings come from two layers: the defaults shipped with the package in
``vessel_transfer/config/vessel_transfer.yaml``, and an optional user file
given with ``--config``. The user file is either ``key = value`` lines (the
format every flag is mirrored in) or a YAML mapping. User values are merged
over the defaults and then installed as argument-parser defaults, so an
explicit command-line flag always wins over both layers.
"""

import logging
import os
import sys
from typing import Any, Dict, Optional

import yaml

from .errors import ConfigurationError

logger = logging.getLogger(__name__)


class Config:
    """
    Layered configuration for vessel-transfer runs.

    Keys are normalised to ``snake_case`` so ``patch-size`` in a user file and
    ``patch_size`` in the shipped YAML refer to the same setting.

    Attributes:
        config (dict): The merged configuration settings
        module_name (str): Package whose ``config/<module_name>.yaml`` supplies defaults
        config_file (str | None): Path of the user file, if any
    """

    def __init__(self, module_name: str = "vessel_transfer", config_file: Optional[str] = None):
        self.module_name = module_name
        self.config_file = config_file
        self.config: Dict[str, Any] = self.load(module_name)

    @staticmethod
    def normalize_key(key: str) -> str:
        """Map a flag-style key (``--patch-size``, ``patch-size``) to ``patch_size``."""
        return key.strip().lstrip("-").replace("-", "_")

    def load(self, module_name) -> dict:
        """
        Load shipped defaults and merge the user file over them.

        Args:
            module_name: The package whose default YAML is read

        Returns:
            dict: The merged configuration dictionary.

        Raises:
            ConfigurationError: If the user file is missing or unparsable.
        """
        config = self._load_default_config(module_name)
        if self.config_file:
            user_config = self.read_user_file(self.config_file)
            config = {**config, **user_config}
        return config

    @staticmethod
    def read_user_file(path: str) -> dict:
        """
        Parse a user configuration file.

        ``key = value`` lines are tried first; values are typed with
        ``yaml.safe_load`` so ``0.5`` becomes a float and ``true`` a bool.
        Anything else must be a YAML mapping.

        Args:
            path (str): File to read

        Returns:
            dict: Settings with normalised keys.

        Raises:
            ConfigurationError: If the file is missing or is neither format.
        """
        if not os.path.exists(path):
            raise ConfigurationError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()

        lines = [
            line.split("#", 1)[0].strip() for line in text.splitlines()
        ]
        lines = [line for line in lines if line]
        if lines and all("=" in line for line in lines):
            parsed = {}
            for line in lines:
                key, raw = line.split("=", 1)
                try:
                    value = yaml.safe_load(raw.strip())
                except yaml.YAMLError:
                    value = raw.strip()
                parsed[Config.normalize_key(key)] = value
            return parsed

        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"cannot parse config file {path}: {e}") from e
        if loaded is None:
            return {}
        if not isinstance(loaded, dict):
            raise ConfigurationError(
                f"config file {path} must hold 'key = value' lines or a YAML mapping"
            )
        return {Config.normalize_key(str(k)): v for k, v in loaded.items()}

    def _load_default_config(self, module_name):
        """
        Load the default YAML from the module's ``config`` directory.

        Args:
            module_name: Module name to load default config for

        Returns:
            dict: Default configuration or empty dict if not found
        """
        default_config = {}
        module = sys.modules.get(module_name)
        module_path = getattr(module, "__file__", None)
        if not module_path:
            return default_config

        default_config_file = os.path.join(
            os.path.dirname(module_path), "config", f"{module_name}.yaml"
        )
        if os.path.exists(default_config_file):
            try:
                with open(default_config_file, "r", encoding="utf-8") as f:
                    loaded_config = yaml.safe_load(f)
                    if loaded_config:
                        default_config.update(
                            {self.normalize_key(str(k)): v for k, v in loaded_config.items()}
                        )
            except Exception as e:
                logger.error(
                    "Failed to load default config from %s: %s", default_config_file, e
                )

        return default_config

    def apply_to_parser(self, parser) -> None:
        """
        Install settings as defaults on ``parser`` for the flags it defines.

        Only keys matching one of the parser's destinations are applied, so a
        single merged config can be offered to every subcommand parser.
        """
        dests = {action.dest for action in parser._actions}  # pylint: disable=protected-access
        parser.set_defaults(**{k: v for k, v in self.config.items() if k in dests})

    def unknown_keys(self, known) -> list:
        """Return the user-file keys that no parser defines."""
        if not self.config_file:
            return []
        user_keys = self.read_user_file(self.config_file).keys()
        return sorted(k for k in user_keys if k not in known)
