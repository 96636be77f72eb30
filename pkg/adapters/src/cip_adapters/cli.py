from __future__ import annotations

import argparse
import sys

from .config import AdapterConfig, AdapterConfigError, load_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cip-adapters",
        description="reference model servers for the cip backend protocol",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="load the configured models and serve")
    p.add_argument("--config", default=None, help="adapter config JSON")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--device", default=None)
    p.add_argument("--fake-models", action="store_true",
                   help="serve deterministic fakes (protocol testing, no GPU)")

    p = sub.add_parser("record", help="record responses into a replay store")
    p.add_argument("--server", required=True, help="adapter base URL")
    p.add_argument("--requests", required=True, help="JSONL request file")
    p.add_argument("--out", required=True, help="replay store directory")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            from .server import serve

            config = load_config(args.config) if args.config else AdapterConfig()
            updates = {}
            if args.port is not None:
                updates["port"] = args.port
            if args.device is not None:
                updates["device"] = args.device
            if updates:
                from dataclasses import replace

                config = replace(config, **updates)
            models = None
            if args.fake_models:
                from .models import fake_models

                models = fake_models()
            serve(config, models=models)
            return 0

        if args.command == "record":
            from .record import record_replay

            record_replay(args.server, args.requests, args.out)
            return 0
    except AdapterConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
