# -*- coding: utf-8 -*-
import logging
import sys
from typing import Optional, Sequence

from cli.cli_exceptions import EXIT_DATA_ERROR, EXIT_OK, CommandExecError, CommandParseError
from cli.cli_runner import CommandRunner
from cli.command_parser import parse_command
from core.exceptions import MineOptException

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"
LOG_LEVELS = {-1: logging.WARNING, 0: logging.INFO, 1: logging.DEBUG}


def configure_logging(verbosity: int = 0) -> None:
    """Log a stderr; stdout queda para el mensaje final del subcomando."""
    logging.basicConfig(
        level=LOG_LEVELS.get(verbosity, logging.INFO),
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        cmd = parse_command(args)
    except CommandParseError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return ex.exit_code
    except MineOptException as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_DATA_ERROR

    configure_logging(cmd.verbosity)
    try:
        message = CommandRunner().execute(cmd)
    except CommandExecError as ex:
        logging.getLogger("mineplan").error("%s", ex)
        return ex.exit_code
    print(message)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
