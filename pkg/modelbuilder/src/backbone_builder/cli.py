"""Command line: build a backbone from architecture JSON, or verify one.

Exit codes: 0 success, 1 verification failure, 2 usage/schema failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

import torch

from .model import build
from .schema import SchemaError
from .verify import verify


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        raise SystemExit(2) from exc


def cmd_build(args: argparse.Namespace) -> int:
    text = _read(args.arch)
    try:
        model = build(text)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"stages\t{model.num_stages}")
    print(f"units\t{len(model.units)}")
    print(f"conv_params\t{model.conv_weight_count()}")
    if args.state_dict:
        torch.save(model.state_dict(), args.state_dict)
        print(f"state_dict\t{args.state_dict}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    text = _read(args.arch)
    try:
        report = verify(text, args.resolution, expected_params=args.expected_params)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(report.render())
    return 0 if report.ok else 1


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="backbone-builder",
        description="Instantiate and check searched backbone architectures in PyTorch.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="construct the backbone and print a summary")
    p.add_argument("arch")
    p.add_argument("--state-dict", help="optional path for the initialized weights")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("verify", help="run shape/finiteness/parameter checks")
    p.add_argument("arch")
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--expected-params", type=int, default=None,
                   help="conv weight count to match exactly (e.g. from the search engine)")
    p.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
