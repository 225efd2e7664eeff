"""``cltta`` command line: train-source, adapt, demo-cl, verify."""

from __future__ import annotations

import argparse
import logging
import sys

from ..checkpoint import CheckpointError
from .commands import cmd_adapt, cmd_demo_cl, cmd_train_source, cmd_verify
from .config import SpecError, load_spec


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cltta", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-source", help="train the source model and write a checkpoint")
    p.add_argument("--spec", required=True)
    p.add_argument("--out")

    p = sub.add_parser("adapt", help="run test-time adaptation and write report CSVs")
    p.add_argument("--spec", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")

    p = sub.add_parser("demo-cl", help="train from known complementary labels (N=4/6/8 vs baseline)")
    p.add_argument("--spec", required=True)
    p.add_argument("--out")

    p = sub.add_parser("verify", help="run the oracle checks")
    p.add_argument("--level", choices=("fast", "full"), default="fast")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            results = cmd_verify(args.level)
            for r in results:
                print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<28} {r.detail}  ({r.seconds:.2f}s)")
            failed = sum(not r.passed for r in results)
            print(f"{len(results) - failed}/{len(results)} checks passed")
            return 1 if failed else 0

        spec = load_spec(args.spec)
        if args.command == "train-source":
            summary = cmd_train_source(spec, args.out)
            print(f"wrote {summary.checkpoint}")
            print(summary.line())
        elif args.command == "adapt":
            summary = cmd_adapt(spec, args.checkpoint, args.out)
            print(summary.table())
            print(f"wrote {summary.report} ({len(summary.rows)} rows) and {summary.trace}")
        elif args.command == "demo-cl":
            summary = cmd_demo_cl(spec, args.out)
            print(summary.table())
            print(f"wrote {summary.path}")
    except (SpecError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
