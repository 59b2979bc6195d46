import argparse
import logging
import sys

from pydantic import ValidationError

from sideband_tomo.commands import CommandError, check, coeffs, fit, fixture, history, simulate
from sideband_tomo.config import settings

NUMERICAL_ERRORS = {
    "singular_reflection",
    "zero_design",
    "not_positive_definite",
    "sampling_covariance_not_psd",
    "postcondition_failed",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="sideband_tomo",
        description="Homodyne and resonator detection of Gaussian sideband states",
    )
    parser.add_argument(
        "--log-level",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        default=None,
    )
    parser.add_argument("--db", default=None, help="fit archive database URL")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for command in (coeffs, simulate, fit, check, fixture, history):
        command.register(sub)
    return parser


def _describe(e: ValueError) -> str:
    if not e.args:
        return type(e).__name__
    code, *details = e.args
    return f"{code}: {', '.join(str(d) for d in details)}" if details else str(code)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=args.log_level or settings.LOG_LEVEL.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except CommandError as e:
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {_describe(e)}", file=sys.stderr)
        return 3 if e.args and e.args[0] in NUMERICAL_ERRORS else 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
