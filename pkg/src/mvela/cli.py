"""Command-line client for the pipeline service.

The CLI never calls the pipeline directly: every command is an HTTP request
against the service API. By default the app is mounted in-process through an
ASGI transport (no sockets involved); --server points the same requests at a
remote instance started with `mvela serve`.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx

from .pipeline import STAGES
from .service import create_app


def _client_post(server: str | None, path: str, payload: dict) -> httpx.Response:
    async def go():
        if server:
            async with httpx.AsyncClient(base_url=server, timeout=None) as client:
                return await client.post(path, json=payload)
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://mvela.service", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def _load_config_dict(path: str, seed: int | None) -> dict:
    config = json.loads(Path(path).read_text())
    if seed is not None:
        config["seed"] = seed
    return config


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="pipeline config JSON file")
    parser.add_argument("--out", required=True, help="output directory for artifacts")
    parser.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    parser.add_argument("--server", default=None, help="remote service URL (default: in-process)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvela", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full pipeline or one stage")
    run.add_argument("--stage", choices=STAGES, default=None, help="run only this stage")
    _add_pipeline_flags(run)

    for stage in STAGES:
        stage_parser = sub.add_parser(stage, help=f"run the {stage} stage")
        _add_pipeline_flags(stage_parser)

    status = sub.add_parser("status", help="show per-stage artifact status")
    status.add_argument("--config", required=True)
    status.add_argument("--out", required=True)
    status.add_argument("--seed", type=int, default=None)
    status.add_argument("--server", default=None)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8337)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0

    if args.command == "status":
        config = _load_config_dict(args.config, args.seed)
        response = _client_post(
            args.server, "/pipeline/status", {"config": config, "out_dir": args.out}
        )
        if response.status_code != 200:
            print(f"error: {response.json().get('detail', response.text)}", file=sys.stderr)
            return 1
        body = response.json()
        print(f"config hash: {body['config_hash']}")
        for stage, state in body["stages"].items():
            print(f"{stage:10s} {state}")
        return 0

    stages = None
    if args.command == "run":
        if args.stage is not None:
            stages = [args.stage]
    else:
        stages = [args.command]

    config = _load_config_dict(args.config, args.seed)
    response = _client_post(
        args.server,
        "/pipeline/run",
        {"config": config, "out_dir": args.out, "stages": stages, "jobs": args.jobs},
    )
    if response.status_code != 200:
        detail = response.json().get("detail", response.text)
        print(f"error: {detail}", file=sys.stderr)
        return 1
    body = response.json()
    for stage in body["executed"]:
        print(f"{stage}: done")
    for stage in body["skipped"]:
        print(f"{stage}: up to date")
    print(f"artifacts in {body['out_dir']} (config {body['config_hash']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
