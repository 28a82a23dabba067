"""Entry point: `kernelbench-adapter --device N --warmup 100 --trials 100`.

Serves exactly one evaluation request from stdin, or runs the self-test with
--self-test.
"""

from __future__ import annotations

import argparse
import sys

from .selftest import self_test
from .server import DEFAULT_TRIALS, DEFAULT_WARMUP, AdapterConfig, serve_once


def build_config(args) -> AdapterConfig:
    device = args.device
    if device and device.isdigit():
        device = f"cuda:{device}"
    return AdapterConfig(
        device=device,
        warmup=args.warmup,
        trials=args.trials,
        atol=args.atol,
        rtol=args.rtol,
        build_dir=args.build_dir,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="kernelbench-adapter")
    parser.add_argument("--device", default="", help="device ordinal, cuda:N, or cpu")
    parser.add_argument("--warmup", type=int, default=DEFAULT_WARMUP)
    parser.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    parser.add_argument("--atol", type=float, default=1e-2)
    parser.add_argument("--rtol", type=float, default=1e-2)
    parser.add_argument("--build-dir", default=None, help="extension build cache directory")
    parser.add_argument("--self-test", action="store_true")
    args = parser.parse_args(argv)
    config = build_config(args)
    if args.self_test:
        report = self_test(config)
        print(report.render())
        return 0 if report.ok else 1
    return serve_once(sys.stdin, sys.stdout, config)


if __name__ == "__main__":
    sys.exit(main())
