"""``hsdr <command> --config <path> [--out <path>] [--format json|csv] [--seed <u64>]``."""

import argparse
import sys
import warnings

from .config import COMMANDS, load_config
from .errors import HsdrError, HsdrIOError
from .experiments import run
from .report import emit_report, to_csv, to_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

# commands whose --out is a data product rather than the report
_PRODUCT_COMMANDS = ("synth", "fit", "transform")


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="hsdr", description="Hyperspectral dimensionality reduction "
                                "experiments on HSC1 cubes and synthetic scenes.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="key = value experiment configuration")
    p.add_argument("--out", help="report path (or the cube / model path for synth, fit, transform)")
    p.add_argument("--format", choices=("json", "csv"), default=None)
    p.add_argument("--seed", type=_u64, default=None)
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures next to the report")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.quiet:
        warnings.simplefilter("ignore")
    try:
        cfg = load_config(args.config, command=args.command, seed=args.seed)
        out = args.out or cfg.get("output")
        fmt = args.format or cfg.get("format") or ("csv" if str(out or "").endswith(".csv") else "json")
        if args.command in _PRODUCT_COMMANDS:
            report = run(cfg, out)
            if not args.quiet:
                print(to_json(report))
            return EXIT_OK
        report = run(cfg, out)
        if out is None:
            sys.stdout.write(to_csv(report) if fmt == "csv" else to_json(report) + "\n")
            return EXIT_OK
        emit_report(report, fmt, out)
        if cfg.get("figures", True) and not args.no_figures:
            from .plotting import render

            try:
                paths = render(report, out)
            except OSError as exc:
                raise HsdrIOError(out, f"cannot write figures: {exc}") from exc
            if not args.quiet:
                for path in paths:
                    print(f"figure: {path}", file=sys.stderr)
        return EXIT_OK
    except HsdrError as exc:
        print(f"hsdr {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code if exc.exit_code in (EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO) else 1
    except MemoryError:
        print(f"hsdr {args.command}: error: out of memory", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
