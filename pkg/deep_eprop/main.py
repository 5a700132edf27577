'''
@description: Entry point for the deep-eprop command.
'''
import os
import sys

from .commands import COMMANDS
from .errors import DivergenceError, ResourceLimitError, VerificationError
from .utils.cli_utils import build_parser
from .utils.config_utils import load_settings
from .utils.logging_utils import logging, setup_logging
from .utils.report_utils import ensure_out_dir

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def usage_error(parser, message: str) -> int:
    '''Print the usage line and ``message`` through ``parser.error``; returns its exit code instead of exiting.'''
    try:
        parser.error(message)
    except SystemExit as e:
        return e.code
    return EXIT_USAGE


def run(argv=None) -> int:
    '''
    **Purpose:**
    - Parse arguments, load settings, set up logging and dispatch to the subcommand.

    **Returns:**
    - ``int``: 0 on success, 1 on verification failure, divergence or an unexpected
      error, 2 on spec, usage or configuration errors, which print the usage line
      through ``parser.error``. Argument parsing errors exit through ``SystemExit``
      with code 2.
    '''

    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        settings = load_settings()
        ensure_out_dir(args.out)
        setup_logging(args.log_type, args.log_file or os.path.join(args.out, "deep_eprop.log"),
                      settings.log_level, settings.log_levels)
    except (ValueError, RuntimeError) as e:
        return usage_error(parser, str(e))

    try:
        return COMMANDS[args.command](args, settings)
    except (VerificationError, DivergenceError) as e:
        logging.error(f"{args.command} failed: {e}")
        print(f"deep-eprop {args.command}: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except (ValueError, ResourceLimitError) as e:
        logging.error(f"{args.command}: {e}")
        return usage_error(parser, f"{args.command}: {e}")
    except Exception as e:
        logging.error(f"Command execution failed: {e}")
        print(f"deep-eprop {args.command}: {e}", file=sys.stderr)
        return EXIT_FAILURE


def main(argv=None) -> None:
    '''
    **Purpose:**
    - Console script entry point; exits with the code from ``run``.

    **Raises:**
    - ``SystemExit``: Always.
    '''

    sys.exit(run(argv))


if __name__ == "__main__":
    main()
