"""Command-line adapter. Every subcommand is a thin wrapper over one library
operation, so identical inputs produce identical artifacts whether driven
here or through the HTTP API.

Exit codes: 0 success, 1 operation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib.resources import files
from pathlib import Path

from .analysis import export_report, fit_sim_real, load_table_csv, scaling_trend_holds
from .assets import MockEmbeddingProvider, load_catalog
from .collect import collect_task, load_skill_request
from .config import ServiceConfig
from .conversation import ChatSession, HttpChatProvider, ScriptedChatProvider, advance_session
from .dsl import evaluate_program, parse_program, validate_program
from .episodes import (
    HttpPolicyTransport,
    LocalPolicyTransport,
    run_episode,
    scripted_policy,
    write_episode_batch,
)
from .errors import SceneForgeError
from .evaluation import generate_eval_config
from .randomizer import RandomizationSpec, derive_variants, write_variant_batch
from .scenegraph import scene_from_json, scene_to_json, validate_scene
from .world import make_world


def fixture_path(name: str) -> Path:
    return Path(str(files("sceneforge.fixtures").joinpath(name)))


def _load_catalog_arg(path: str | None):
    catalog = load_catalog(path or fixture_path("desk_catalog.json"))
    catalog.build_index(MockEmbeddingProvider(seed=0))
    return catalog


def _emit(summary: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(summary, sort_keys=True))
    else:
        for key, value in summary.items():
            print(f"{key}: {value}")


def _cmd_generate(args) -> int:
    catalog = _load_catalog_arg(args.catalog)
    if args.program:
        source = Path(args.program).read_text(encoding="utf-8")
        program = parse_program(source)
        resolved = validate_program(program, catalog)
        scene = evaluate_program(resolved, args.seed, catalog)
    else:
        if args.prompt_file:
            prompt = Path(args.prompt_file).read_text(encoding="utf-8").strip()
        elif args.prompt:
            prompt = args.prompt
        else:
            print("generate: need --prompt, --prompt-file, or --program", file=sys.stderr)
            return 2
        if args.provider:
            provider = HttpChatProvider(args.provider)
        elif args.transcript:
            responses = json.loads(Path(args.transcript).read_text(encoding="utf-8"))
            if isinstance(responses, dict):
                responses = responses["responses"]
            provider = ScriptedChatProvider(responses)
        else:
            print("generate: prompts need --provider URL or --transcript FILE",
                  file=sys.stderr)
            return 2
        session = ChatSession(session_id="cli", seed=args.seed)
        result = advance_session(session, prompt, provider, catalog)
        if session.current_version is None:
            print(f"generate: clarification needed: {result.question}", file=sys.stderr)
            return 1
        scene = session.current_version.scene
    report = validate_scene(scene)
    if not report.ok:
        print(f"generate: produced scene failed validation:\n{report.summary()}",
              file=sys.stderr)
        return 1
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(scene_to_json(scene), encoding="utf-8")
    _emit({"out": str(out), "nodes": len(scene.nodes), "edges": len(scene.edges),
           "seed": args.seed, "valid": True}, args.json)
    return 0


def _cmd_randomize(args) -> int:
    base = scene_from_json(Path(args.scene).read_text(encoding="utf-8"))
    spec = RandomizationSpec.from_dict(
        json.loads(Path(args.spec).read_text(encoding="utf-8"))) if args.spec \
        else RandomizationSpec()
    catalog = _load_catalog_arg(args.catalog) if args.catalog else None
    batch = derive_variants(base, spec, args.n, args.seed, catalog=catalog)
    manifest = write_variant_batch(batch, args.out)
    _emit({"out": args.out, "requested": args.n, "produced": batch.produced,
           "dropped": batch.dropped, "manifest": str(manifest)}, args.json)
    return 0


def _cmd_collect(args) -> int:
    scene = scene_from_json(Path(args.scene).read_text(encoding="utf-8"))
    request = load_skill_request(args.task)
    catalog = _load_catalog_arg(args.catalog)
    world = make_world(scene, seed=request.seed)
    result = collect_task(request, world, catalog, out_dir=args.out)
    _emit({"task_id": request.task_id, "attempts": result.attempts,
           "steps": len(result.trajectory["steps"]), "out": args.out}, args.json)
    return 0


def _cmd_evaluate(args) -> int:
    scene = scene_from_json(Path(args.scene).read_text(encoding="utf-8"))
    cfg = None
    if args.config:
        from .evaluation import EvalConfig
        cfg = EvalConfig.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
    else:
        cfg = generate_eval_config(scene, args.intent)

    def transport_for(_episode_index: int):
        if args.policy in ("expert", "noop"):
            if args.policy == "expert":
                subject = next(n.node_id for n in scene.nodes if n.task_tag == "subject")
                target = next(n.node_id for n in scene.nodes if n.task_tag == "target")
                return LocalPolicyTransport(scripted_policy("expert", scene, subject, target))
            return LocalPolicyTransport(scripted_policy("noop"))
        return HttpPolicyTransport(args.policy)

    records = []
    for i in range(args.episodes):
        world = make_world(scene, seed=args.seed + i)
        records.append(run_episode(
            world, cfg, transport_for(i), episode_id=f"ep{args.seed + i}",
            record=bool(args.out),
        ))
    counts = {"success": 0, "timeout": 0, "policy_error": 0}
    for record in records:
        counts[record.status] += 1
    if args.out:
        write_episode_batch(records, args.out)
    _emit({"episodes": args.episodes, **counts}, args.json)
    return 0


def _cmd_analyze(args) -> int:
    fixture = args.fixture or fixture_path("table1.csv")
    table = load_table_csv(fixture)
    fits = fit_sim_real(table)
    summary: dict = {
        "rows": len(table.rows),
        "slope": fits[0].slope,
        "intercept": fits[0].intercept,
        "r_squared": fits[0].r_squared,
        "convention": fits[0].convention,
        "reverse_slope": fits[1].slope,
        "best_setup_trend_1500_eps_sim": scaling_trend_holds(table, "1500 eps sim"),
    }
    if args.records:
        from .analysis import aggregate_success
        from .episodes import read_episode_jsonl
        from .errors import PreconditionError
        records = []
        for path in sorted(Path(args.records).rglob("*.jsonl")):
            try:
                records.append(read_episode_jsonl(path))
            except (PreconditionError, KeyError):
                continue  # not an episode log (e.g., a collection trajectory)
        if records:
            agg, errors = aggregate_success(
                records,
                lambda r: (r.metadata.get("task", "task"),
                           r.metadata.get("setup", "default"),
                           r.metadata.get("env", "sim")),
            )
            summary["aggregated_rows"] = len(agg.rows)
            summary["policy_errors"] = errors
    if args.out:
        export_report(table, fits, args.out)
        summary["out"] = args.out
    _emit(summary, args.json)
    return 0


def _cmd_serve(args) -> int:
    from .service import serve_api

    config = ServiceConfig.load(args.config)
    if args.host:
        config.host = args.host
    if args.port is not None:
        config.port = args.port
    service = serve_api(config)
    print(f"serving on {service.base_url} (Ctrl-C to stop)")
    try:
        while True:
            import time
            time.sleep(3600)
    except KeyboardInterrupt:
        service.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sceneforge",
        description="Scene generation, randomization, collection, evaluation, analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="prompt or program -> solved scene graph")
    p.add_argument("--prompt")
    p.add_argument("--prompt-file")
    p.add_argument("--program", help="DSL source file (bypasses the chat provider)")
    p.add_argument("--transcript", help="scripted provider responses (JSON)")
    p.add_argument("--provider", help="chat provider endpoint URL")
    p.add_argument("--catalog")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("randomize", help="derive randomized variants of a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--spec")
    p.add_argument("-n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--catalog")
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_randomize)

    p = sub.add_parser("collect", help="automated demonstration collection")
    p.add_argument("--scene", required=True)
    p.add_argument("--task", required=True, help="skill request JSON file")
    p.add_argument("--catalog")
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_collect)

    p = sub.add_parser("evaluate", help="closed-loop episodes against a policy")
    p.add_argument("--scene", required=True)
    p.add_argument("--policy", required=True, help="endpoint URL, 'expert', or 'noop'")
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="evaluation config JSON file")
    p.add_argument("--intent", default="place")
    p.add_argument("--out")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("analyze", help="success tables and sim-vs-real fit")
    p.add_argument("--records", help="directory of episode JSONL files")
    p.add_argument("--fixture", help="experiment table CSV")
    p.add_argument("--out")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("serve", help="run the HTTP API facade")
    p.add_argument("--config")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SceneForgeError, OSError, json.JSONDecodeError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
