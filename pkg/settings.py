"""
Centralized settings module for the EIT lineshape toolkit.
Handles logging configuration, environment variable loading, and config management.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict

import yaml
from dotenv import load_dotenv

DEFAULT_CONFIG_PATH = Path(__file__).parent / "config.yaml"

# Global config variable
_config: Dict[str, Any] = {}
_loaded = False


def load_config(config_path: str | Path | None = None) -> Dict[str, Any]:
    """
    Load configuration from YAML file.

    Args:
        config_path: Path to the config file (default: $EIT_CONFIG or the bundled config.yaml)

    Returns:
        Configuration dictionary
    """
    global _config, _loaded

    if config_path is None:
        config_path = os.getenv("EIT_CONFIG") or DEFAULT_CONFIG_PATH

    config_file = Path(config_path)
    if not config_file.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    with open(config_file, "r", encoding="utf-8") as f:
        _config = yaml.safe_load(f) or {}
    _loaded = True

    return _config


def get_config(key: str | None = None, default: Any = None) -> Any:
    """
    Get configuration value by key path (e.g., 'quadrature.rel_tol').

    Args:
        key: Configuration key path (dot notation)
        default: Default value if key not found

    Returns:
        Configuration value or default
    """
    global _loaded

    if not _loaded:
        try:
            load_config()
        except FileNotFoundError:
            # Running from an installed wheel without the repo config: code defaults apply
            _loaded = True

    if key is None:
        return _config

    value: Any = _config
    try:
        for k in key.split("."):
            value = value[k]
        return value
    except (KeyError, TypeError):
        return default


def setup_logging(level: int | None = None, format_string: str | None = None) -> None:
    """
    Configure logging for the application.

    Args:
        level: Logging level (default: $EIT_LOG_LEVEL, then config, then INFO)
        format_string: Custom format string for log messages (default: from config)
    """
    if level is None:
        level_str = os.getenv("EIT_LOG_LEVEL") or get_config("logging.level", "INFO")
        level = getattr(logging, str(level_str).upper(), logging.INFO)

    if format_string is None:
        format_string = get_config(
            "logging.format", "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
        )

    logging.basicConfig(level=level, format=format_string)


def setup_environment() -> None:
    """
    Load environment variables from .env file.
    """
    load_dotenv()


def setup_application(config_path: str | Path | None = None) -> None:
    """
    Complete application setup including environment variables, config and logging.
    Call this function at the start of every entry point.

    Args:
        config_path: Path to the config file
    """
    setup_environment()
    load_config(config_path)
    setup_logging()


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance for the given name.

    Args:
        name: Logger name (typically __name__)

    Returns:
        Logger instance
    """
    return logging.getLogger(name)
