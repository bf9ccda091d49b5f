"""Command line entry point for the stub segmentation service."""
from __future__ import annotations

import argparse
import logging
import sys

from .server import ServiceConfig, serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segserve",
        description="Serve point-prompt segmentation requests from stored stub rules.",
    )
    parser.add_argument("--store", required=True,
                        help="directory of <image_id>.json rule files")
    parser.add_argument("--host", default="127.0.0.1", help="bind address")
    parser.add_argument("--port", type=int, default=8731,
                        help="bind port, 0 picks a free one (default 8731)")
    parser.add_argument("--plugin", default="stub",
                        help="'stub' or a module:attribute plugin factory")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    args = build_parser().parse_args(argv)
    try:
        config = ServiceConfig(args.host, args.port, args.store, args.plugin)
        serve(config)
    except KeyboardInterrupt:
        return 0
    except (ValueError, ImportError, AttributeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
