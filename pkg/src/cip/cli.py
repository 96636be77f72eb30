"""Thin-client CLI: every subcommand serializes into the service's request
models and posts to the toolkit service (in-process by default, or a
remote instance via --server).

Exit codes: 0 success, 2 config error, 3 backend error, 4 invariant
violation.
"""

from __future__ import annotations

import argparse
import json
import sys

import httpx

from .errors import (
    EXIT_BACKEND,
    EXIT_CONFIG,
    EXIT_INVARIANT,
    EXIT_OK,
    CipError,
    error_for_kind,
)

_KIND_EXIT = {400: EXIT_CONFIG, 422: EXIT_INVARIANT, 502: EXIT_BACKEND}


class ServiceClient:
    def __init__(self, server: str | None = None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            from ._asgi import in_process_client
            from .service import create_app

            self._client = in_process_client(create_app())

    def post(self, route: str, payload: dict) -> dict:
        resp = self._client.post(route, json=payload)
        if resp.status_code >= 400:
            try:
                body = resp.json()["error"]
                raise error_for_kind(body["kind"], body["message"])
            except (KeyError, ValueError, json.JSONDecodeError):
                raise error_for_kind("backend-error",
                                     f"HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json()


def _overrides(args) -> dict:
    return {
        "seed": args.seed,
        "mode": args.mode,
        "strategy": getattr(args, "strategy", None),
        "guidance": args.guidance,
        "replay": args.replay,
        "out": args.out,
    }


def _run_payload(args) -> dict:
    return {
        "config_path": args.config,
        "overrides": _overrides(args),
        "resume": args.resume,
    }


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="pipeline config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", default=None)
    p.add_argument("--strategy", default=None)
    p.add_argument("--guidance", type=float, default=None)
    p.add_argument("--replay", default=None, help="replay store directory")
    p.add_argument("--out", default=None, help="output directory override")
    p.add_argument("--resume", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cip",
        description="caption-grounded training-set synthesis toolkit",
    )
    parser.add_argument("--server", default=None,
                        help="remote service URL (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, route in (
        ("caption", "/v1/stages/caption"),
        ("prompts", "/v1/stages/prompts"),
        ("rewrite", "/v1/stages/rewrite"),
        ("generate", "/v1/stages/generate"),
        ("train", "/v1/stages/train"),
        ("eval", "/v1/stages/eval"),
        ("run", "/v1/runs"),
    ):
        p = sub.add_parser(name, help=f"run the pipeline through the {name} stage"
                           if name != "run" else "run the full pipeline")
        _add_common(p)
        p.set_defaults(route=route)

    p = sub.add_parser("sweep", help="strategy x guidance sweep")
    _add_common(p)
    p.add_argument("--guidance-list", default=None,
                   help="comma-separated guidance values")
    p.add_argument("--strategies", default=None, help="comma-separated strategies")
    p.add_argument("--repeats", type=int, default=1)

    p = sub.add_parser("verify-bound", help="empirical risk-bound verification")
    p.add_argument("--configs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-mc", type=int, default=50_000)
    p.add_argument("--world", default=None, help="world spec JSON (single check)")
    p.add_argument("--guidance", type=float, default=1.5)
    p.add_argument("--out", default=None, help="write the JSON report here")

    p = sub.add_parser("world", help="toy-world strategy experiment")
    p.add_argument("--world", default=None, help="world spec JSON")
    p.add_argument("--preset", default=None, choices=("polysemy", "sweep"))
    p.add_argument("--preset-seed", type=int, default=0)
    p.add_argument("--strategies", default="basic,cip")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--guidance", type=float, default=1.5)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--eval-n", type=int, default=20_000)
    p.add_argument("--quality", default="fine")
    p.add_argument("--save-world", default=None)
    p.add_argument("--out", default=None, help="write the JSON table here")

    p = sub.add_parser("report", help="render a JSON report for humans")
    p.add_argument("path")
    p.add_argument("--dataset", default=None,
                   help="annotate with the published reference table")

    p = sub.add_parser("serve", help="run the toolkit service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    p = sub.add_parser("backend-stub", help="run the deterministic protocol stub")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8100)
    p.add_argument("--world", default=None, help="world spec backing generation")

    return parser


def _csv(text: str | None, cast=str) -> list | None:
    if text is None:
        return None
    return [cast(tok) for tok in text.split(",") if tok.strip()]


def _dispatch(args, client: ServiceClient) -> int:
    if args.command in ("caption", "prompts", "rewrite", "generate", "train",
                        "eval", "run"):
        result = client.post(args.route, _run_payload(args))
        print(json.dumps({k: result[k] for k in ("out_dir", "stages_run")},
                         indent=1))
        if result.get("report"):
            rep = result["report"]["report"]
            print(f"accuracy {rep['accuracy']:.4f}  risk {rep['risk']:.4f}  "
                  f"(+/- {rep['std_error']:.4f}, n={rep['n_eval']})")
        return EXIT_OK

    if args.command == "sweep":
        payload = {
            "config_path": args.config,
            "overrides": _overrides(args),
            "repeats": args.repeats,
        }
        if args.guidance_list:
            payload["guidance"] = _csv(args.guidance_list, float)
        if args.strategies:
            payload["strategies"] = _csv(args.strategies)
        result = client.post("/v1/sweeps", payload)
        from .pipeline.reporting import render_report

        print(render_report(result["report"]))
        print(f"report written to {result['report_path']}")
        return EXIT_OK

    if args.command == "verify-bound":
        payload = {
            "n_configs": args.configs, "seed": args.seed, "n_mc": args.n_mc,
            "world_path": args.world, "guidance": args.guidance,
        }
        result = client.post("/v1/bounds/verify", payload)
        from .pipeline.reporting import render_report

        print(render_report(result["report"]))
        if args.out:
            from pathlib import Path

            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            Path(args.out).write_text(
                json.dumps(result["report"], indent=1) + "\n", encoding="utf-8")
            print(f"report written to {args.out}")
        return EXIT_OK

    if args.command == "world":
        payload = {
            "world_path": args.world,
            "preset": args.preset,
            "preset_seed": args.preset_seed,
            "strategies": _csv(args.strategies),
            "seeds": _csv(args.seeds, int),
            "guidance": args.guidance,
            "per_class": args.per_class,
            "eval_n": args.eval_n,
            "quality": args.quality,
            "save_world_to": args.save_world,
        }
        result = client.post("/v1/worlds/experiment", payload)
        for strategy, mean in result["means"].items():
            print(f"{strategy:<16} mean accuracy {mean:.4f}")
        if args.out:
            from pathlib import Path

            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            Path(args.out).write_text(json.dumps(result, indent=1) + "\n",
                                      encoding="utf-8")
        return EXIT_OK

    if args.command == "report":
        result = client.post("/v1/reports/render",
                             {"path": args.path, "dataset": args.dataset})
        print(result["text"])
        return EXIT_OK

    if args.command == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return EXIT_OK

    if args.command == "backend-stub":
        import uvicorn

        from .backends.stub import make_stub_app

        world = None
        if args.world:
            from .synthworld import load_world

            world = load_world(args.world)
        uvicorn.run(make_stub_app(world=world), host=args.host, port=args.port)
        return EXIT_OK

    raise AssertionError(f"unhandled command {args.command}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        client = (ServiceClient(args.server)
                  if args.command not in ("serve", "backend-stub") else None)
        return _dispatch(args, client)
    except CipError as exc:
        print(f"error ({exc.kind}): {exc}", file=sys.stderr)
        return exc.exit_code
    except httpx.HTTPError as exc:
        print(f"error (transport-error): {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
