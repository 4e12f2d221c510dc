"""Command line entry point: ``spam-forge <kind> --config FILE [...]``."""
import argparse
import sys

from .errors import SpamForgeError, ValidationError
from .harness import KINDS, load_config, sweep

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INVALID)


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spam-forge", description="Seeded S-PAM experiments.")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2",
                   help="sweep a field over comma-separated values (repeatable)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--workers", type=int, help="parallel workers (default: $SPAM_FORGE_WORKERS or 1)")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides + [f"experiment.kind={args.kind}"], args.grid)
    except ValidationError as exc:
        print("invalid configuration:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_INVALID
    if args.workers is not None and args.workers < 1:
        print("invalid configuration:\n  - --workers: must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    outdir = args.out or str(cfg.values["output.dir"])
    try:
        result = sweep(cfg, outdir, args.workers)
    except SpamForgeError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if result.failed:
        for f in result.manifest["failures"]:
            print(f"seed {f['seed']} failed: {f['error']}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{len(result.rows)} rows written to {outdir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
