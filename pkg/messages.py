"""
Message catalog for the command-line front end.
Loads user-facing text from messages.yaml and provides a simple interface.
"""

from functools import cache
from pathlib import Path
from typing import Any, Dict

import yaml

from settings import get_logger

logger = get_logger(__name__)

CATALOG_FILE = Path(__file__).parent / "messages.yaml"


@cache
def load_messages() -> Dict[str, Any]:
    """
    Load the message catalog.

    Returns:
        Dictionary with messages, empty when the catalog is missing or unreadable
    """
    if not CATALOG_FILE.exists():
        logger.error(f"Message catalog not found: {CATALOG_FILE}")
        return {}

    try:
        with open(CATALOG_FILE, "r", encoding="utf-8") as f:
            return yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        logger.error(f"Error loading messages: {e}")
        return {}


def get_message(key: str, default: str | None = None) -> str:
    """
    Get a message by key path (e.g., 'cli.wrote').

    Args:
        key: Message key path (dot notation)
        default: Default value if key not found

    Returns:
        Message text
    """
    messages = load_messages()

    if not messages:
        return default or key

    value: Any = messages
    try:
        for k in key.split("."):
            value = value[k]
        return value
    except (KeyError, TypeError):
        logger.warning(f"Message key not found: {key}")
        return default or key


def format_message(key: str, default: str | None = None, **kwargs) -> str:
    """
    Get a message and format it with provided arguments.

    Args:
        key: Message key path (dot notation)
        default: Default value if key not found
        **kwargs: Arguments to format into the message

    Returns:
        Formatted message
    """
    message = get_message(key, default)
    try:
        return message.format(**kwargs)
    except (KeyError, ValueError, IndexError) as e:
        logger.warning(f"Error formatting message {key}: {e}")
        return message
