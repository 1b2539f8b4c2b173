"""Command-line front end for the EIT lineshape toolkit."""

from cli.main import main

__all__ = ["main"]
