"""Reference provider services: embedding, chat, judge, policy over HTTP.

These host the deterministic in-process providers behind the same wire
contracts a production deployment would use, so every remote integration
path can be exercised offline. Run one from the command line, e.g.::

    python -m sceneforge.reference_services policy --policy noop --port 9101
    python -m sceneforge.reference_services embed --port 9102
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .assets import MockEmbeddingProvider
from .episodes import serve_policy, scripted_policy
from .evaluation import AdversarialJudge, EvalConfig, OracleJudge
from .httpbase import JsonHttpServer


def serve_embedding(provider=None, host: str = "127.0.0.1", port: int = 0) -> JsonHttpServer:
    """POST /v1/embed {"model", "input"} -> {"vector": [f64; 2048]}."""
    provider = provider or MockEmbeddingProvider(seed=0)
    server = JsonHttpServer(host, port)

    def embed(match, body, query):
        body = body or {}
        text = body.get("input", "")
        if not text:
            return 400, {"error": {"message": "input must be non-empty"}}
        vec = provider.embed(text)
        return 200, {"vector": [float(v) for v in vec]}

    server.route("POST", r"/v1/embed", embed)
    server.start()
    return server


def serve_chat(responses: list[str], host: str = "127.0.0.1", port: int = 0) -> JsonHttpServer:
    """POST /v1/chat {"model", "temperature", "messages"} -> {"content"}."""
    server = JsonHttpServer(host, port)
    state = {"cursor": 0}

    def chat(match, body, query):
        if state["cursor"] >= len(responses):
            return 409, {"error": {"message": "scripted responses exhausted"}}
        content = responses[state["cursor"]]
        state["cursor"] += 1
        return 200, {"content": content}

    server.route("POST", r"/v1/chat", chat)
    server.start()
    return server


def serve_judge(kind: str = "oracle", host: str = "127.0.0.1", port: int = 0) -> JsonHttpServer:
    """POST /v1/judge {"config", "frames"} -> Verdict JSON."""
    judge = OracleJudge() if kind == "oracle" else AdversarialJudge()
    server = JsonHttpServer(host, port)

    def handle(match, body, query):
        body = body or {}
        cfg = EvalConfig.from_dict(body["config"])
        verdict = judge.judge(cfg, body.get("frames", []))
        return 200, verdict.to_dict()

    server.route("POST", r"/v1/judge", handle)
    server.start()
    return server


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sceneforge-reference-services")
    sub = parser.add_subparsers(dest="kind", required=True)

    p = sub.add_parser("embed")
    p.add_argument("--port", type=int, default=9102)

    p = sub.add_parser("chat")
    p.add_argument("--responses", required=True, help="JSON file with a list of replies")
    p.add_argument("--port", type=int, default=9103)

    p = sub.add_parser("judge")
    p.add_argument("--judge", choices=["oracle", "adversarial"], default="oracle")
    p.add_argument("--port", type=int, default=9104)

    p = sub.add_parser("policy")
    p.add_argument("--policy", choices=["noop"], default="noop")
    p.add_argument("--drop-every", type=int)
    p.add_argument("--port", type=int, default=9101)

    args = parser.parse_args(argv)
    if args.kind == "embed":
        server = serve_embedding(port=args.port)
    elif args.kind == "chat":
        responses = json.loads(Path(args.responses).read_text(encoding="utf-8"))
        server = serve_chat(responses, port=args.port)
    elif args.kind == "judge":
        server = serve_judge(args.judge, port=args.port)
    else:
        server = serve_policy(scripted_policy("noop"), port=args.port,
                              drop_every=args.drop_every)
    print(f"{args.kind} service on {server.base_url}")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
