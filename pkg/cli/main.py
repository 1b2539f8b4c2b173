"""Main entry point for the eit command line."""

import argparse
import sys
from pathlib import Path
from typing import Sequence

from cli.commands import cmd_analyze, cmd_holeburn, cmd_spectrum, cmd_sweep
from cli.config import COMMAND_MODES, load_config
from cli.utils import run_directory
from errors import EitError, EitNumericError, EitValidationError, ParseError, ValidationError
from messages import format_message, get_message
from settings import get_logger, setup_application

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

COMMANDS = {
    "spectrum": cmd_spectrum,
    "sweep": cmd_sweep,
    "holeburn": cmd_holeburn,
    "analyze": cmd_analyze,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eit", description=get_message("cli.description"))
    commands = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = commands.add_parser(name)
        sub.add_argument("--config", required=True, type=Path, help="run configuration (YAML)")
        sub.add_argument("--out", type=Path, default=None, help="output root (default: the config's output)")
        sub.add_argument("--jobs", type=int, default=1, help="worker processes for independent sweep points")
    return parser


def _report(e: BaseException) -> int:
    """Log a failure through the message catalog and map it to an exit code."""
    stage = getattr(e, "stage", None)
    if stage:
        logger.error(format_message("errors.stage", stage=stage))
    if isinstance(e, ParseError):
        logger.error(format_message("errors.parse", error=e))
        return EXIT_VALIDATION
    if isinstance(e, EitValidationError):
        logger.error(format_message("errors.validation", error=e))
        return EXIT_VALIDATION
    if isinstance(e, EitNumericError):
        logger.error(format_message("errors.numeric", kind=type(e).__name__, error=e))
        return EXIT_NUMERIC
    if isinstance(e, OSError):
        logger.error(format_message("errors.io", error=e))
        return EXIT_IO
    logger.error(format_message("errors.unexpected", error=e))
    return EXIT_ERROR


def run(command: str, config: Path, out: Path | None = None, jobs: int = 1) -> Path:
    """Load `config`, check it suits `command`, run it and return the run directory."""
    cfg = load_config(config)
    expected = COMMAND_MODES[command]
    if cfg.mode not in expected:
        raise ValidationError(
            format_message(
                "cli.mode_mismatch",
                mode=cfg.mode.value,
                command=command,
                expected=" or ".join(m.value for m in expected),
            ),
            fields=["mode"],
        )
    run_dir = run_directory(cfg, out)
    paths = COMMANDS[command](cfg, run_dir, jobs)
    logger.info(format_message("cli.done", command=command, count=len(paths), path=run_dir))
    return run_dir


def main(argv: Sequence[str] | None = None) -> int:
    """Initialize and run one eit command; returns the process exit code."""
    args = build_parser().parse_args(argv)

    try:
        setup_application()
        run(args.command, args.config, args.out, max(1, args.jobs))
    except (EitError, OSError) as e:
        logger.debug("Failure details", exc_info=True)
        return _report(e)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
